"""Command-line interface.

Exit codes: 0 success, 2 configuration error, 3 simulation error, 4 analysis or
input-data error.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import sys
import warnings
from pathlib import Path

import numpy as np

from . import __version__, config
from .analysis import (
    SensitivityInputs,
    detect_peaks,
    estimate_sensitivity,
    fit_linear,
    fit_lorentzian,
    fit_spin_hamiltonian,
    spin_model_curve,
)
from .constants import FLUX_QUANTUM
from .coupling import sensing_volume
from .errors import FluxEPRError, IdentifiabilityError, InsufficientDataError, InvalidArgumentError
from .fluxqubit import qubit_frequency
from .readout import lorentzian, noise_vs_repetitions
from .spinsys import SpinSystem
from .sweep import SweepRecord, simulate_epr_sweep, simulate_polarization_map, static_shift

EXIT_CONFIG = 2
EXIT_SIMULATION = 3
EXIT_DATA = 4


class DataError(Exception):
    pass


def _fmt(x) -> str:
    if isinstance(x, (bool, np.bool_)):
        return "1" if x else "0"
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    return format(float(x), ".15g")


def write_csv(path, header: list[str], rows, cfg: dict | None = None, comments=()) -> None:
    buf = io.StringIO()
    meta = f"# fluxepr {__version__}"
    if cfg is not None:
        meta += f" config_sha256={config.config_hash(cfg)}"
    buf.write(meta + "\n")
    for c in comments:
        buf.write(f"# {c}\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([v if isinstance(v, str) else _fmt(v) for v in row])
    text = buf.getvalue()
    if path is None or str(path) == "-":
        sys.stdout.write(text)
        return
    Path(path).write_text(text)
    if cfg is not None:
        Path(str(path) + ".config.json").write_text(json.dumps(cfg, indent=2, sort_keys=True) + "\n")


def read_csv(path, required: list[str]) -> dict[str, np.ndarray]:
    try:
        lines = [ln for ln in Path(path).read_text().splitlines() if ln and not ln.startswith("#")]
    except FileNotFoundError:
        raise DataError(f"input file not found: {path}") from None
    if not lines:
        raise DataError(f"{path}: no data")
    reader = csv.DictReader(lines)
    rows = list(reader)
    cols = reader.fieldnames or []
    for name in required:
        if name not in cols:
            raise DataError(f"{path}: missing column '{name}'")
    try:
        return {name: np.array([float(r[name]) for r in rows]) for name in cols}
    except (TypeError, ValueError) as exc:
        raise DataError(f"{path}: non-numeric value ({exc})") from None


def _load_cfg(args) -> dict:
    cfg = config.load(getattr(args, "config", None), getattr(args, "preset", None))
    if getattr(args, "seed", None) is not None:
        cfg["seed"] = args.seed
    return cfg


# ------------------------------------------------------------------------ commands


def cmd_qubit_spectrum(args) -> int:
    cfg = _load_cfg(args)
    q = config.build_qubit(cfg)
    offsets = np.linspace(args.flux_min, args.flux_max, args.points)
    f = qubit_frequency(q, FLUX_QUANTUM * (0.5 + offsets))
    write_csv(args.out, ["flux_phi0", "f_q_hz"], zip(offsets, np.atleast_1d(f)), cfg)
    return 0


def _sweep_rows(records: list[SweepRecord]):
    for r in records:
        yield (r.drive_frequency, r.qubit_shift, r.flux_shift / FLUX_QUANTUM,
               r.switching_probability, r.noise)


SWEEP_HEADER = ["drive_hz", "qubit_shift_hz", "flux_shift_phi0", "p_e", "sigma"]


def cmd_epr_sweep(args) -> int:
    cfg = _load_cfg(args)
    if args.b_parallel is not None:
        cfg["field"]["b_parallel"] = args.b_parallel
    exp = config.build_experiment(cfg)
    records = simulate_epr_sweep(exp)
    write_csv(args.out, SWEEP_HEADER, _sweep_rows(records), cfg)
    return 0


def _records_from_csv(path) -> list[SweepRecord]:
    d = read_csv(path, ["drive_hz", "qubit_shift_hz"])
    n = len(d["drive_hz"])
    zeros = np.zeros(n)
    return [SweepRecord(f, s, fl, p, sg) for f, s, fl, p, sg in zip(
        d["drive_hz"], d["qubit_shift_hz"], d.get("flux_shift_phi0", zeros),
        d.get("p_e", zeros), d.get("sigma", zeros))]


def _peak_rows(records, b_parallel, prominence, baseline=None):
    if prominence is None:
        # relative default: a tenth of the largest excursion from the baseline
        s = np.array([r.qubit_shift for r in records])
        base = float(np.median(s)) if baseline is None else baseline
        prominence = 0.1 * float(np.abs(s - base).max())
        if prominence == 0.0:
            return []
    peaks = detect_peaks(records, prominence, baseline)
    return [(b_parallel, pk.frequency, k + 1, pk.depth) for k, pk in enumerate(peaks)]


PEAK_HEADER = ["b_parallel_t", "frequency_hz", "branch", "depth_hz"]


def cmd_peaks(args) -> int:
    rows = _peak_rows(_records_from_csv(args.input), args.b_parallel, args.prominence,
                      args.baseline)
    write_csv(args.out, PEAK_HEADER, rows)
    return 0


def cmd_peak_table(args) -> int:
    cfg = _load_cfg(args)
    rows = []
    for b in args.fields:
        cfg_b = json.loads(json.dumps(cfg))
        cfg_b["field"]["b_parallel"] = b
        exp = config.build_experiment(cfg_b)
        records = simulate_epr_sweep(exp)
        base = static_shift(exp)[0]
        if exp.dynamic_range is not None:
            base = float(np.clip(base, -exp.dynamic_range, exp.dynamic_range))
        found = _peak_rows(records, b, args.prominence, base)
        if len(found) != 2:
            raise FluxEPRError(f"expected two EPR peaks at B = {b} T, found {len(found)}")
        rows.extend(found)
    write_csv(args.out, PEAK_HEADER, rows, cfg)
    return 0


def cmd_polarization_map(args) -> int:
    cfg = _load_cfg(args)
    exp = config.build_experiment(cfg)
    pm = simulate_polarization_map(exp, cfg["sweep"]["temperatures"], cfg["sweep"]["fields"])
    rows = ((t, b, fl, fl / FLUX_QUANTUM) for t, b, fl in pm.rows())
    write_csv(args.out, ["temperature_k", "b_parallel_t", "flux_wb", "flux_phi0"], rows, cfg)
    return 0


def cmd_noise_scan(args) -> int:
    cfg = _load_cfg(args)
    ro = config.build_readout(cfg)
    sw = cfg["sweep"]
    n_list = args.n_list if args.n_list else sw["n_list"]
    table = noise_vs_repetitions(ro, sw["p_true"], n_list, cfg["seed"], sw["n_batches"],
                                 sw["drift_mode"])
    rows = ((r.n_rep, r.sigma_model, r.sigma_empirical, "1 s" if r.one_second else "")
            for r in table)
    write_csv(args.out, ["n_rep", "sigma_model", "sigma_mc", "note"], rows, cfg)
    return 0


def _emit_report(report: dict, summary: str, args) -> None:
    text = json.dumps(report, indent=2, sort_keys=True) + "\n"
    if args.report:
        Path(args.report).write_text(text)
    else:
        sys.stdout.write(text)
    sys.stderr.write(summary + "\n")


def cmd_fit(args) -> int:
    if args.kind == "lorentzian":
        d = read_csv(args.input, ["frequency_hz", "p_e"])
        rep = fit_lorentzian(d["frequency_hz"], d["p_e"])
        p = rep.parameters
        if args.curve:
            f = np.linspace(d["frequency_hz"].min(), d["frequency_hz"].max(), 401)
            write_csv(args.curve, ["frequency_hz", "p_e_fit"],
                      zip(f, lorentzian(f, p["visibility"], p["center"], p["linewidth"])))
        summary = (f"V = {p['visibility']:.6g}, f_q0 = {p['center']:.9g} Hz, "
                   f"gamma_q = {p['linewidth']:.6g} Hz")
    elif args.kind == "linear":
        d = read_csv(args.input, ["x", "y"])
        rep = fit_linear(d["x"], d["y"])
        p = rep.parameters
        if args.curve:
            x = np.linspace(d["x"].min(), d["x"].max(), 101)
            write_csv(args.curve, ["x", "y_fit"], zip(x, p["slope"] * x + p["intercept"]))
        summary = (f"slope = {p['slope']:.6g}, intercept = {p['intercept']:.6g}, "
                   f"R^2 = {rep.extra['r_squared']:.6f}")
    else:
        d = read_csv(args.input, ["b_parallel_t", "frequency_hz", "branch"])
        peaks = list(zip(d["b_parallel_t"], d["frequency_hz"], d["branch"].astype(int)))
        template = SpinSystem.nv_center(args.g0, args.d0, args.e)
        rep = fit_spin_hamiltonian(peaks, template, free=args.free.split(","))
        p = rep.parameters
        if args.curve:
            b = np.linspace(0.0, d["b_parallel_t"].max() * 1.1, 101)
            c1 = spin_model_curve(rep, template, b, 1)
            c2 = spin_model_curve(rep, template, b, 2)
            write_csv(args.curve, ["b_parallel_t", "f1_hz", "f2_hz"], zip(b, c1, c2))
        summary = ", ".join(f"{k} = {v:.6g} +- {rep.stderr[k]:.2g}" for k, v in p.items())
    _emit_report({"fit": args.kind, **rep.to_dict()}, summary, args)
    return 0


def cmd_sensitivity(args) -> int:
    inp = SensitivityInputs(
        dPe=args.dpe, visibility=args.visibility, gamma_q=args.gamma_q,
        persistent_current=args.ip, flux_per_spin=args.flux_per_spin, g_z=args.g_z,
        per_spin_shift_factor=args.factor,
        dPe_err=args.dpe_err, visibility_err=args.visibility_err, gamma_q_err=args.gamma_q_err,
        persistent_current_err=args.ip_err, flux_per_spin_err=args.flux_per_spin_err,
        g_z_err=args.g_z_err,
    )
    routes = {}
    if args.ip is not None and args.flux_per_spin is not None:
        routes["flux"] = estimate_sensitivity(inp, "flux")
    if args.g_z is not None:
        routes["coupling"] = estimate_sensitivity(inp, "coupling")
    if not routes:
        raise DataError("sensitivity needs --ip and --flux-per-spin, or --g-z")
    vol = sensing_volume(args.area, args.thickness, args.f_ref)
    report = {
        "n_min": {k: {"value": v, "uncertainty": e} for k, (v, e) in routes.items()},
        "sensing_volume_m3": vol.volume,
        "sensing_volume_fl": vol.volume * 1e18,
        "wavelength_fraction": vol.wavelength_fraction,
        "f_ref_hz": args.f_ref,
    }
    lines = [f"N_min ({k} route) = {v:.4g} +- {e:.2g} spins/sqrt(Hz)" for k, (v, e) in routes.items()]
    lines.append(f"sensing volume = {vol.volume:.4g} m^3 = {vol.volume * 1e18:.4g} fL "
                 f"= {vol.wavelength_fraction:.3g} lambda^3 at {args.f_ref:.4g} Hz")
    if len(routes) == 2:
        (v1, e1), (v2, e2) = routes["flux"], routes["coupling"]
        comb = math.hypot(e1, e2)
        if abs(v1 - v2) > 3 * comb:
            msg = (f"flux and coupling routes disagree: {v1:.4g} vs {v2:.4g} "
                   f"(> 3 sigma = {3 * comb:.3g}); check flux_per_spin against h*factor*g_z/(2 I_p)")
            warnings.warn(msg, stacklevel=1)
            report["warning"] = msg
    _emit_report(report, "\n".join(lines), args)
    return 0


# -------------------------------------------------------------------------- parser


def _add_config(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="JSON run configuration")
    p.add_argument("--preset", choices=config.PRESETS, help="bundled configuration")
    p.add_argument("--seed", type=int, help="override the configured seed")
    p.add_argument("--out", default="-", help="output CSV (default stdout)")


def _floats(text: str) -> list[float]:
    return [float(x) for x in text.split(",") if x.strip()]


def _ints(text: str) -> list[int]:
    return [int(x) for x in text.split(",") if x.strip()]


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="fluxepr", description="Virtual flux-qubit EPR spectrometer")
    ap.add_argument("--version", action="version", version=f"fluxepr {__version__}")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("qubit-spectrum", help="f_q versus flux offset from Phi0/2")
    _add_config(p)
    p.add_argument("--flux-min", type=float, default=-0.01, help="offset in Phi0")
    p.add_argument("--flux-max", type=float, default=0.01, help="offset in Phi0")
    p.add_argument("--points", type=int, default=201)
    p.set_defaults(func=cmd_qubit_spectrum)

    p = sub.add_parser("epr-sweep", help="dual-tone EPR sweep")
    _add_config(p)
    p.add_argument("--b-parallel", type=float, help="override in-plane field (T)")
    p.set_defaults(func=cmd_epr_sweep)

    p = sub.add_parser("peaks", help="detect EPR peaks in a sweep CSV")
    p.add_argument("--input", required=True)
    p.add_argument("--b-parallel", type=float, required=True, help="field of this sweep (T)")
    p.add_argument("--prominence", type=float,
                   help="minimum |shift - baseline| (Hz); default 10%% of the largest excursion")
    p.add_argument("--baseline", type=float, help="baseline shift (Hz); default the median")
    p.add_argument("--out", default="-")
    p.set_defaults(func=cmd_peaks)

    p = sub.add_parser("peak-table", help="sweep several fields and tabulate peak positions")
    _add_config(p)
    p.add_argument("--fields", type=_floats, default=[2e-3, 4e-3, 5.8e-3, 8e-3])
    p.add_argument("--prominence", type=float,
                   help="minimum |shift - static shift| (Hz); default 10%% of the largest excursion")
    p.set_defaults(func=cmd_peak_table)

    p = sub.add_parser("polarization-map", help="static flux versus temperature and field")
    _add_config(p)
    p.set_defaults(func=cmd_polarization_map)

    p = sub.add_parser("noise-scan", help="readout noise versus repetitions")
    _add_config(p)
    p.add_argument("--n-list", type=_ints)
    p.set_defaults(func=cmd_noise_scan)

    p = sub.add_parser("fit", help="fit a CSV")
    p.add_argument("kind", choices=["lorentzian", "linear", "spinham"])
    p.add_argument("--input", required=True)
    p.add_argument("--report", help="JSON report path (default stdout)")
    p.add_argument("--curve", help="fitted-curve CSV path")
    p.add_argument("--free", default="g_e,D", help="spinham: free parameters")
    p.add_argument("--g0", type=float, default=2.0028, help="spinham: starting g")
    p.add_argument("--d0", type=float, default=2.87e9, help="spinham: starting D (Hz)")
    p.add_argument("--e", type=float, default=5e6, help="spinham: strain E (Hz)")
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("sensitivity", help="minimum detectable spins and sensing volume")
    p.add_argument("--dpe", type=float, required=True, help="switching-probability noise per 1 s")
    p.add_argument("--visibility", type=float, required=True)
    p.add_argument("--gamma-q", type=float, required=True, help="qubit linewidth (Hz)")
    p.add_argument("--ip", type=float, help="persistent current (A)")
    p.add_argument("--flux-per-spin", type=float, help="flux per spin (Wb)")
    p.add_argument("--g-z", type=float, help="coupling g_z (Hz)")
    p.add_argument("--factor", type=int, default=1, choices=[1, 2])
    for name in ("dpe", "visibility", "gamma-q", "ip", "flux-per-spin", "g-z"):
        p.add_argument(f"--{name}-err", type=float, default=0.0)
    p.add_argument("--area", type=float, default=47.2e-12, help="loop area (m^2)")
    p.add_argument("--thickness", type=float, default=1e-6, help="effective thickness (m)")
    p.add_argument("--f-ref", type=float, default=3e9, help="reference frequency (Hz)")
    p.add_argument("--report", help="JSON report path (default stdout)")
    p.set_defaults(func=cmd_sensitivity)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except config.ConfigError as exc:
        print(f"fluxepr: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (DataError, InsufficientDataError, IdentifiabilityError) as exc:
        print(f"fluxepr: data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except InvalidArgumentError as exc:
        code = EXIT_DATA if args.command in ("fit", "sensitivity", "peaks") else EXIT_SIMULATION
        print(f"fluxepr: {exc}", file=sys.stderr)
        return code
    except FluxEPRError as exc:
        print(f"fluxepr: simulation error: {exc}", file=sys.stderr)
        return EXIT_SIMULATION


if __name__ == "__main__":
    sys.exit(main())
