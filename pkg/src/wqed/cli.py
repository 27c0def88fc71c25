"""Command-line entry point: ``wqed <command> [options]``.

Frequencies on the command line and in config files are ordinary
frequencies in MHz (never angular). Exit codes: 0 success, 2 usage or
configuration error, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import json
import logging
import math
import os
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__
from . import io as wio
from .core import (
    CONFIG_KEYS,
    ConfigError,
    kappa_magnitude,
    mhz_to_rad_ns,
    params_from_config,
    photon_rate_from_amplitude_ratio,
    photon_rate_from_rabi,
    rad_ns_to_mhz,
    read_config,
)
from .correlations import (
    correlation_grid,
    correlation_points,
    ipsd,
    memory_estimate_mb,
    steady_psd,
)
from .estimation import DEFAULT_BOUNDS, PARAM_NAMES, FitProblem, fit, synthetic_scan
from .fields import analytic_half_period, energy_audit, simulate_fields
from .measurement import ChainConfig
from .spectra import detuning_scan

log = logging.getLogger("wqed")

EXIT_USAGE = 2
EXIT_NUMERIC = 3

CHAIN_KEYS = {"snr_db": -40.0, "n_avg": 17_000_000, "lpf_mhz": 50.0, "if_mhz": 0.0, "seed": 0}
GRID_WARN_POINTS = 4000


class UsageError(Exception):
    pass


class NumericalFailure(Exception):
    pass


# argument plumbing -------------------------------------------------------------

def _add_param_flags(p: argparse.ArgumentParser, chain: bool = False) -> None:
    p.add_argument("--config", help="flat key = value parameter file")
    for key in CONFIG_KEYS:
        p.add_argument(f"--{key}", dest=key, default=None,
                       help=f"override {key} (default {CONFIG_KEYS[key]:g})")
    if chain:
        for key in CHAIN_KEYS:
            p.add_argument(f"--{key}", dest=key, default=None, help=f"measurement chain {key}")
    p.add_argument("--out", default=".", help="output directory (fit also accepts a .json file name)")
    p.add_argument("--threads", type=int, default=None,
                   help="worker threads (default: $WQED_THREADS or CPU count)")


def _resolve(args, chain: bool = False) -> dict:
    """defaults < config file < flags."""
    known = {**CONFIG_KEYS, **(CHAIN_KEYS if chain else {})}
    cfg = dict(known)
    if args.config:
        path = Path(args.config)
        if not path.is_file():
            raise UsageError(f"config file not found: {path}")
        cfg.update(read_config(path, known))
    for key in known:
        val = getattr(args, key, None)
        if val is None:
            continue
        if key == "field_phase":
            from .core import parse_phase
            cfg[key] = parse_phase(val)
            continue
        try:
            cfg[key] = type(known[key])(float(val))
        except ValueError:
            raise ConfigError(f"--{key}: not a number: {val!r}") from None
    return cfg


def _threads(args) -> int | None:
    if args.threads is not None:
        if args.threads < 1:
            raise ConfigError("--threads must be >= 1")
        return args.threads
    return None


def _chain_from(cfg: dict) -> ChainConfig:
    try:
        return ChainConfig(
            snr_db=cfg["snr_db"],
            n_avg=int(cfg["n_avg"]),
            lpf_cutoff=cfg["lpf_mhz"],
            if_freq=cfg["if_mhz"],
            rng_seed=int(cfg["seed"]),
        )
    except ValueError as exc:
        raise ConfigError(str(exc)) from None


def _parse_pair(text: str, what: str) -> tuple[float, float]:
    try:
        a, b = (float(v) for v in text.split(":"))
    except ValueError:
        raise UsageError(f"{what}: expected 'start:stop', got {text!r}") from None
    return a, b


def _parse_range(text: str) -> np.ndarray:
    """``start:stop:points`` or a single value."""
    parts = text.split(":")
    try:
        if len(parts) == 1:
            return np.array([float(parts[0])])
        if len(parts) == 3:
            start, stop, num = float(parts[0]), float(parts[1]), int(parts[2])
            if num < 1:
                raise UsageError(f"detuning range {text!r} is empty")
            return np.linspace(start, stop, num)
    except ValueError:
        pass
    raise UsageError(f"detuning range must be 'start:stop:points' or a value, got {text!r}")


class _Run:
    """Collects outputs and writes the run manifest."""

    def __init__(self, command: str, out: str, cfg: dict, inputs=()):
        self.command = command
        self.dir = Path(out)
        self.dir.mkdir(parents=True, exist_ok=True)
        self.cfg = cfg
        self.inputs = {str(p): wio.sha256_file(p) for p in inputs}
        self.outputs: list[str] = []
        self.t0 = time.perf_counter()

    def path(self, name: str) -> Path:
        self.outputs.append(name)
        return self.dir / name

    def finish(self) -> Path:
        manifest = {
            "command": self.command,
            "parameters": self.cfg,
            "inputs": self.inputs,
            "outputs": sorted(self.outputs),
            "wall_time_s": round(time.perf_counter() - self.t0, 3),
            "version": __version__,
        }
        return wio.write_json(self.dir / "manifest.json", manifest)


# commands ----------------------------------------------------------------------

def cmd_simulate(args) -> int:
    cfg = _resolve(args)
    params, env = params_from_config(cfg)
    t_end = args.t_end_ns if args.t_end_ns is not None else 2 * env.duration
    run = _Run("simulate", args.out, {**cfg, "t_end_ns": t_end})
    trace, out, rad = simulate_fields(params, env, t_end)
    wio.write_bloch(run.path("bloch.csv"), trace)
    wio.write_field(run.path("field.csv"), out)
    wio.write_field(run.path("radiation.csv"), rad)
    run.finish()
    return 0


def cmd_scan(args) -> int:
    cfg = _resolve(args)
    params, env = params_from_config(cfg)
    grid = _parse_range(args.range)
    t_end = args.t_end_ns if args.t_end_ns is not None else 2 * env.duration
    run = _Run("scan", args.out, {**cfg, "range": args.range, "t_end_ns": t_end,
                                  "zero_pad": args.zero_pad, "cut_at_pulse_end": args.cut_at_pulse_end})
    # scan detunings are absolute; the configured detuning is ignored
    scan = detuning_scan(
        params.with_(detuning=0.0), env, grid, t_end=t_end, zero_pad_factor=args.zero_pad,
        cut_at_pulse_end=args.cut_at_pulse_end, threads=_threads(args),
    )
    wio.write_scan_time(run.path("scan_time.csv"), scan)
    wio.write_scan_spectra(run.path("scan_spec.csv"), scan)
    run.finish()
    return 0


def cmd_correlate(args) -> int:
    cfg = _resolve(args)
    params, env = params_from_config(cfg)
    t_end = args.t_end_ns if args.t_end_ns is not None else 2 * env.duration
    n = correlation_points(t_end, env.dt, args.stride)
    if n > GRID_WARN_POINTS:
        log.warning("correlation grid of %d x %d points is large", n, n)
    need = memory_estimate_mb(n)
    if need > args.max_memory_mb:
        raise UsageError(
            f"correlation grid needs about {need:.0f} MB; rerun with --max-memory-mb {math.ceil(need)} "
            f"or a larger --stride"
        )
    window = _parse_pair(args.steady_window, "--steady-window") if args.steady_window else None
    run = _Run("correlate", args.out, {**cfg, "t_end_ns": t_end, "stride": args.stride,
                                       "steady_window": args.steady_window,
                                       "freq_max_mhz": args.freq_max_mhz})
    grid, _ = correlation_grid(params, env, t_end, stride=args.stride, threads=_threads(args))
    wio.write_g1_long(run.path("g1.csv"), grid)
    wio.write_ipsd(run.path("ipsd.csv"), ipsd(grid, freq_max_mhz=args.freq_max_mhz))
    if window is not None:
        omega, psd = steady_psd(grid, window)
        keep = np.abs(rad_ns_to_mhz(omega)) <= args.freq_max_mhz
        wio.write_psd(run.path("psd.csv"), omega[keep], psd[keep])
    run.finish()
    return 0


def cmd_audit(args) -> int:
    cfg = _resolve(args)
    params, env = params_from_config(cfg)
    half = math.pi / params.rabi_peak if params.rabi_peak > 0 else None
    if args.window in ("half", "full"):
        if half is None:
            raise UsageError("named windows need a non-zero Rabi frequency")
        window = (0.0, half if args.window == "half" else 2 * half)
    else:
        window = _parse_pair(args.window, "--window")
    run = _Run("audit", args.out, {**cfg, "window": list(window)})
    try:
        report = energy_audit(params, env, window)
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    doc = report.to_dict()
    if half is not None:
        doc["analytic_half_period"] = analytic_half_period(params)
    wio.write_json(run.path("energy.json"), doc)
    run.finish()
    return 0


def _read_bounds(path) -> dict:
    known = {f"{n}_{s}": 0.0 for n in PARAM_NAMES for s in ("min", "max")}
    raw = read_config(path, known)
    bounds = dict(DEFAULT_BOUNDS)
    for name in PARAM_NAMES:
        lo, hi = bounds[name]
        bounds[name] = (raw.get(f"{name}_min", lo), raw.get(f"{name}_max", hi))
    return bounds


def cmd_fit(args) -> int:
    cfg = _resolve(args, chain=True)
    if args.init:
        if not Path(args.init).is_file():
            raise UsageError(f"init file not found: {args.init}")
        cfg.update(read_config(args.init, {**CONFIG_KEYS, **CHAIN_KEYS}))
    params, env = params_from_config(cfg)
    bounds = dict(DEFAULT_BOUNDS)
    inputs = []
    if args.bounds:
        if not Path(args.bounds).is_file():
            raise UsageError(f"bounds file not found: {args.bounds}")
        bounds = _read_bounds(args.bounds)
        inputs.append(args.bounds)
    chain = _chain_from(cfg) if args.noise else None

    if args.data:
        if not Path(args.data).is_file():
            raise UsageError(f"data file not found: {args.data}")
        data = wio.read_scan_time(args.data)
        inputs.append(args.data)
    elif args.synthetic:
        grid = _parse_range(args.synthetic)
        t_end = args.t_end_ns if args.t_end_ns is not None else 2 * env.duration
        data = synthetic_scan(params, env, grid, t_end, chain)
        params = _perturbed(params, args.perturb)
    else:
        raise UsageError("fit needs --data FILE or --synthetic RANGE")
    if args.init:
        inputs.append(args.init)

    out = Path(args.out)
    # --out may name the result file itself
    out_dir, out_name = (out.parent, out.name) if out.suffix == ".json" else (out, "fit.json")
    run = _Run("fit", str(out_dir), {**cfg, "noise": bool(args.noise), "max_iter": args.max_iter,
                                 "refine": not args.no_refine}, inputs)
    try:
        problem = FitProblem(
            data, env, params, bounds=bounds, chain=chain, max_iter=args.max_iter, refine=not args.no_refine
        )
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    result = fit(problem)
    wio.write_json(run.path(out_name), result.to_dict())
    run.finish()
    if not result.converged:
        raise NumericalFailure("fit did not converge; see fit.json")
    return 0


def _perturbed(params, factor: float):
    """Initial guess for synthetic round trips: rates scaled by ``1 + factor``."""
    return params.with_(
        rabi_peak=params.rabi_peak * (1 + factor),
        gamma1=params.gamma1 * (1 - factor),
        gamma_phi=params.gamma_phi * (1 + factor),
        detuning=params.detuning + mhz_to_rad_ns(0.5 if factor else 0.0),
    )


def cmd_calibrate(args) -> int:
    g1 = mhz_to_rad_ns(args.gamma1_mhz)
    doc = {"gamma1_mhz": args.gamma1_mhz}
    try:
        if args.omega_r_mhz is not None:
            doc["omega_r_mhz"] = args.omega_r_mhz
            doc["photon_rate_from_rabi"] = photon_rate_from_rabi(mhz_to_rad_ns(args.omega_r_mhz), g1)
        if args.vp_over_vq is not None:
            doc["vp_over_vq"] = args.vp_over_vq
            doc["photon_rate_from_amplitude_ratio"] = photon_rate_from_amplitude_ratio(args.vp_over_vq, g1)
        # kappa in the same per-ns units as the rates
        doc["kappa_magnitude"] = kappa_magnitude(args.hbar_omega, args.z0, g1)
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    text = json.dumps(doc, indent=2, sort_keys=True)
    print(text)
    if args.out:
        Path(args.out).mkdir(parents=True, exist_ok=True)
        wio.write_json(Path(args.out) / "calibration.json", doc)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="wqed",
        description="Coherent pulses scattering off a two-level atom in a waveguide. "
                    "All frequencies are ordinary frequencies in MHz.",
    )
    parser.add_argument("--version", action="version", version=__version__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="Bloch, output-field and radiation traces")
    _add_param_flags(p)
    p.add_argument("--t-end-ns", type=float, default=None, help="simulated span (default 2x duration)")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("scan", help="radiation traces and spectra vs detuning")
    _add_param_flags(p)
    p.add_argument("--range", default="-60:60:121", help="detunings in MHz as start:stop:points")
    p.add_argument("--t-end-ns", type=float, default=None)
    p.add_argument("--zero-pad", type=int, default=4)
    p.add_argument("--cut-at-pulse-end", action="store_true", help="transform only the driven part")
    p.set_defaults(func=cmd_scan)

    p = sub.add_parser("correlate", help="two-time correlation, IPSD and steady PSD")
    _add_param_flags(p)
    p.add_argument("--t-end-ns", type=float, default=None)
    p.add_argument("--stride", type=int, default=1, help="correlation grid step in units of dt")
    p.add_argument("--steady-window", default=None, help="start:stop in ns for the steady PSD")
    p.add_argument("--freq-max-mhz", type=float, default=100.0)
    p.add_argument("--max-memory-mb", type=float, default=4096.0)
    p.set_defaults(func=cmd_correlate)

    p = sub.add_parser("audit", help="photon-number audit over a time window")
    _add_param_flags(p)
    p.add_argument("--window", default="half", help="'half', 'full' (Rabi period) or start:stop in ns")
    p.set_defaults(func=cmd_audit)

    p = sub.add_parser("fit", help="fit qubit parameters to a detuning scan")
    _add_param_flags(p, chain=True)
    p.add_argument("--data", help="scan_time.csv with detuning_mhz,t_ns,re_v,im_v")
    p.add_argument("--init", help="config file with the initial guess")
    p.add_argument("--bounds", help="config file with <param>_min / <param>_max keys")
    p.add_argument("--synthetic", help="generate data from the config at these detunings instead")
    p.add_argument("--perturb", type=float, default=0.2, help="relative start-point error for --synthetic")
    p.add_argument("--noise", action="store_true", help="route data and model through the measurement chain")
    p.add_argument("--t-end-ns", type=float, default=None)
    p.add_argument("--max-iter", type=int, default=2000, help="simplex iteration cap")
    p.add_argument("--no-refine", action="store_true", help="skip the Gauss-Newton polish")
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("calibrate", help="photon rates and emission prefactor")
    p.add_argument("--gamma1_mhz", type=float, required=True)
    p.add_argument("--omega_r_mhz", type=float, default=None)
    p.add_argument("--vp-over-vq", type=float, default=None)
    p.add_argument("--hbar-omega", type=float, default=1.0)
    p.add_argument("--z0", type=float, default=1.0)
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_calibrate)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    if getattr(args, "threads", None) is None and os.environ.get("WQED_THREADS"):
        try:
            args.threads = int(os.environ["WQED_THREADS"])
        except ValueError:
            print("error: WQED_THREADS must be an integer", file=sys.stderr)
            return EXIT_USAGE
    try:
        return args.func(args)
    except (UsageError, ConfigError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (NumericalFailure, ArithmeticError, np.linalg.LinAlgError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except ValueError as exc:
        # parameter validation (step size, windows, grids)
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
