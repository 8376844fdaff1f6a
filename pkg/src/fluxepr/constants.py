"""Physical constants (CODATA via scipy) used throughout the package."""

from scipy import constants as _c

PLANCK = _c.h
BOLTZMANN = _c.k
ELEMENTARY_CHARGE = _c.e
MU_0 = _c.mu_0
SPEED_OF_LIGHT = _c.c
BOHR_MAGNETON = _c.physical_constants["Bohr magneton"][0]

#: superconducting flux quantum h/2e (Wb)
FLUX_QUANTUM = PLANCK / (2.0 * ELEMENTARY_CHARGE)

#: Bohr magneton over Planck's constant (Hz/T)
MU_B_OVER_H = BOHR_MAGNETON / PLANCK
