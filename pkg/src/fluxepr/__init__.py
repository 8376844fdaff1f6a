"""Virtual flux-qubit EPR spectrometer.

Simulates the detection chain spin ensemble -> magnetization -> flux shift ->
qubit frequency shift -> switching probability, and the fitting/sensitivity
pipeline that maps sweeps back to physical constants.
"""

__version__ = "0.1.0"
