"""Least-squares extraction of qubit parameters from radiation traces vs detuning.

The fit works on complex time-domain radiation traces. Free parameters are
the qubit frequency offset (MHz, linear) and the three rates
``omega_r, gamma1, gamma_phi`` (fitted as logarithms of their MHz values).
The offset is carried in ``ModelParams.detuning``: row ``i`` of a scan is
modelled with detuning ``nominal_i + offset``.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import least_squares, minimize

from .core import ModelParams, PulseEnvelope, mhz_to_rad_ns, rad_ns_to_mhz
from .dynamics import _rk4_kernel, check_step, drive_samples, grid_size
from .measurement import ChainConfig, apply_chain
from .fields import FieldTrace
from .spectra import ScanResult

log = logging.getLogger(__name__)

PARAM_NAMES = ("offset_mhz", "omega_r_mhz", "gamma1_mhz", "gamma_phi_mhz")

DEFAULT_BOUNDS = {
    "offset_mhz": (-20.0, 20.0),
    "omega_r_mhz": (1.0, 200.0),
    "gamma1_mhz": (0.01, 20.0),
    "gamma_phi_mhz": (1e-3, 20.0),
}


@dataclass
class FitProblem:
    data: ScanResult
    envelope: PulseEnvelope
    initial_guess: ModelParams
    bounds: dict = field(default_factory=lambda: dict(DEFAULT_BOUNDS))
    weights: np.ndarray | None = None
    chain: ChainConfig | None = None  # applied noise-free to the model traces
    max_iter: int = 2000
    refine: bool = True

    def __post_init__(self):
        n_rows = self.data.detuning_mhz.size
        if n_rows < 4:
            raise ValueError(f"need at least 4 detuning rows for a 4-parameter fit, got {n_rows}")
        if self.weights is None:
            self.weights = np.ones(n_rows)
        self.weights = np.asarray(self.weights, dtype=float)
        if self.weights.shape != (n_rows,):
            raise ValueError("one weight per detuning row is required")
        for name in PARAM_NAMES:
            self.bounds.setdefault(name, DEFAULT_BOUNDS[name])
        x0 = params_to_mhz(self.initial_guess)
        for name, v in zip(PARAM_NAMES, x0):
            lo, hi = self.bounds[name]
            if not lo <= v <= hi:
                raise ValueError(f"initial {name}={v:g} outside bounds [{lo:g}, {hi:g}]")
        if not np.any(self.data.matrix()):
            raise ValueError("degenerate data: all traces are zero")


@dataclass
class FitResult:
    params: ModelParams
    residual_norm: float
    uncertainty: dict
    iterations: int
    converged: bool
    history: list = field(default_factory=list, repr=False)
    gradient_norm: float = float("nan")

    @property
    def offset_mhz(self) -> float:
        return rad_ns_to_mhz(self.params.detuning)

    def to_dict(self) -> dict:
        values = dict(zip(PARAM_NAMES, params_to_mhz(self.params)))
        return {
            "params": values,
            "uncertainty": self.uncertainty,
            "residual_norm": self.residual_norm,
            "iterations": self.iterations,
            "converged": self.converged,
            "gradient_norm": self.gradient_norm,
            "field_phase": self.params.field_phase,
        }


def params_to_mhz(p: ModelParams) -> np.ndarray:
    return np.array([
        rad_ns_to_mhz(p.detuning),
        rad_ns_to_mhz(p.rabi_peak),
        rad_ns_to_mhz(p.gamma1),
        rad_ns_to_mhz(p.gamma_phi),
    ])


def params_from_mhz(v, field_phase: float = math.pi / 2) -> ModelParams:
    off, w, g1, gp = (float(a) for a in v)
    return ModelParams.from_mhz(
        gamma1_mhz=g1, gamma_phi_mhz=gp, detuning_mhz=off, omega_r_mhz=w, field_phase=field_phase
    )


def _to_internal(v: np.ndarray) -> np.ndarray:
    return np.array([v[0], math.log(v[1]), math.log(v[2]), math.log(v[3])])


def _to_external(x: np.ndarray) -> np.ndarray:
    return np.array([x[0], math.exp(x[1]), math.exp(x[2]), math.exp(x[3])])


def model_traces(
    params: ModelParams,
    detuning_mhz: np.ndarray,
    envelope: PulseEnvelope,
    n_samples: int,
    chain: ChainConfig | None = None,
) -> np.ndarray:
    """Radiation traces ``(rows, n_samples)`` for nominal detunings plus ``params.detuning``."""
    check_step(params, envelope.dt)
    drive = drive_samples(params, envelope, n_samples)
    s0 = np.array([0.0, 0.0, 1.0])
    scale = np.exp(1j * params.field_phase) * math.sqrt(params.gamma1 / 2.0)
    out = np.empty((len(detuning_mhz), n_samples), dtype=complex)
    for r, d in enumerate(detuning_mhz):
        delta = mhz_to_rad_ns(d) + params.detuning
        s = _rk4_kernel(drive, envelope.dt, delta, params.gamma1, params.gamma2, s0)
        out[r] = scale * 0.5 * (s[:, 0] + 1j * s[:, 1])
    if chain is not None:
        quiet = chain.noiseless()
        for r in range(out.shape[0]):
            out[r] = apply_chain(FieldTrace(0.0, envelope.dt, out[r]), quiet).samples
    return out


def objective_from_traces(model: np.ndarray, data: np.ndarray, weights: np.ndarray) -> float:
    """``sum_i w_i sum_k |model_ik - data_ik|^2``."""
    diff = np.abs(model - data) ** 2
    return float(np.sum(np.asarray(weights)[:, None] * diff))


def residual(
    params: ModelParams,
    data: ScanResult,
    envelope: PulseEnvelope,
    weights: np.ndarray | None = None,
    chain: ChainConfig | None = None,
) -> float:
    """The objective minimized by :func:`fit` (deterministic)."""
    mat = data.matrix()
    if not math.isclose(data.traces[0].dt, envelope.dt):
        raise ValueError("data and envelope use different time steps")
    if abs(data.traces[0].t0) > 1e-12:
        raise ValueError("data traces must start at t = 0")
    w = np.ones(mat.shape[0]) if weights is None else np.asarray(weights, dtype=float)
    if w.shape != (mat.shape[0],):
        raise ValueError("one weight per detuning row is required")
    model = model_traces(params, data.detuning_mhz, envelope, mat.shape[1], chain)
    return objective_from_traces(model, mat, w)


class _Objective:
    """Objective in internal coordinates, with bookkeeping of the best value."""

    def __init__(self, problem: FitProblem):
        self.problem = problem
        self.data = problem.data.matrix()
        self.sqrt_w = np.sqrt(problem.weights)[:, None]
        self.scale = float(np.sum(np.abs(self.sqrt_w * self.data) ** 2))
        self.phase = problem.initial_guess.field_phase
        self.lo = _to_internal(np.array([problem.bounds[n][0] for n in PARAM_NAMES]))
        self.hi = _to_internal(np.array([problem.bounds[n][1] for n in PARAM_NAMES]))
        self.best = math.inf
        self.best_x = None
        self.evaluations = 0

    def params(self, x) -> ModelParams:
        return params_from_mhz(_to_external(np.clip(x, self.lo, self.hi)), self.phase)

    def vector(self, x) -> np.ndarray:
        p = self.params(x)
        model = model_traces(
            p, self.problem.data.detuning_mhz, self.problem.envelope, self.data.shape[1], self.problem.chain
        )
        r = (self.sqrt_w * (model - self.data)).ravel()
        return np.concatenate([r.real, r.imag])

    def __call__(self, x) -> float:
        try:
            r = self.vector(x)
        except ValueError:
            # step-size guard tripped by an extreme trial point
            return math.inf
        f = float(r @ r)
        self.evaluations += 1
        if f < self.best:
            self.best, self.best_x = f, np.array(x, dtype=float)
        return f

    def jacobian(self, x, rel_step: float = 1e-6) -> np.ndarray:
        r0 = self.vector(x)
        jac = np.empty((r0.size, x.size))
        for j in range(x.size):
            h = rel_step * max(1.0, abs(x[j]))
            xp = x.copy()
            xp[j] += h
            jac[:, j] = (self.vector(xp) - r0) / h
        return jac

    def model_gradient(self, x) -> np.ndarray:
        """Gradient ``2 J^T r`` of the local Gauss-Newton model."""
        x = np.asarray(x, dtype=float)
        return 2.0 * self.jacobian(x).T @ self.vector(x)


def fit(problem: FitProblem) -> FitResult:
    """Bounded Nelder-Mead followed by a finite-difference Gauss-Newton polish."""
    obj = _Objective(problem)
    x0 = _to_internal(params_to_mhz(problem.initial_guess))
    f0 = obj(x0)
    history = [f0]

    steps = np.array([1.0, 0.1, 0.1, 0.2])
    if _in_local_basin(obj, x0, steps):
        # Gauss-Newton step already small next to the simplex: skip the simplex search
        x, iterations, converged = _gauss_newton(obj, x0, history, problem.max_iter)
        if converged:
            return _polish(obj, x, steps, history, iterations, True, refine=False)

    simplex = np.vstack([x0] + [x0 + np.eye(4)[j] * steps[j] for j in range(4)])
    simplex = np.clip(simplex, obj.lo, obj.hi)
    nm = minimize(
        obj,
        x0,
        method="Nelder-Mead",
        bounds=list(zip(obj.lo, obj.hi)),
        callback=lambda xk: history.append(obj.best),
        options={
            "initial_simplex": simplex,
            "maxiter": problem.max_iter,
            "xatol": 1e-6,
            "fatol": 1e-9 * max(f0, 1e-300),
            "adaptive": False,
        },
    )
    x = obj.best_x if obj.best_x is not None else nm.x
    return _polish(obj, x, steps, history, int(nm.nit), bool(nm.success))


def _in_local_basin(obj: _Objective, x0: np.ndarray, steps: np.ndarray, fraction: float = 0.05) -> bool:
    try:
        jac = obj.jacobian(x0)
        r = obj.vector(x0)
        step = np.linalg.lstsq(jac, -r, rcond=None)[0]
    except (ValueError, np.linalg.LinAlgError):
        return False
    return bool(np.all(np.abs(step) < fraction * steps))


def _gauss_newton(obj: _Objective, x: np.ndarray, history: list, max_iter: int, rtol: float = 1e-9):
    """Undamped Gauss-Newton from inside the quadratic basin.

    Stops when the decrease predicted by the linearized model is below
    ``rtol`` of the objective; returns ``(x, completed_steps, converged)``.
    """
    f = obj(x)
    for it in range(min(max_iter, 20) + 1):
        jac, r = obj.jacobian(x), obj.vector(x)
        step = np.linalg.lstsq(jac, -r, rcond=None)[0]
        lin = r + jac @ step
        if f - float(lin @ lin) <= rtol * f or f <= 1e-24 * obj.scale:
            return x, it, True
        x_new = np.clip(x + step, obj.lo, obj.hi)
        f_new = obj(x_new)
        history.append(obj.best)
        if not f_new < f:
            return x, it, False
        x, f = x_new, f_new
    return x, it, False


def _polish(
    obj: _Objective,
    x: np.ndarray,
    steps: np.ndarray,
    history: list,
    iterations: int,
    converged: bool,
    refine: bool | None = None,
) -> FitResult:
    problem = obj.problem
    grad_norm = float("nan")
    if refine is None:
        refine = problem.refine
    if refine:
        ls = least_squares(
            obj.vector,
            x,
            bounds=(obj.lo, obj.hi),
            method="trf",
            x_scale=steps,
            xtol=1e-12,
            ftol=1e-12,
            gtol=1e-10,
            max_nfev=200,
        )
        f_ls = float(ls.fun @ ls.fun)
        if f_ls <= obj.best:
            obj.best, obj.best_x = f_ls, ls.x
        history.append(obj.best)
        x = obj.best_x
        # one Jacobian per trust-region iteration
        iterations += int(ls.njev) if ls.njev is not None else int(ls.nfev)
        converged = converged or bool(ls.success)
        grad_norm = float(np.max(np.abs(ls.grad)))
    else:
        grad_norm = float(np.max(np.abs(obj.model_gradient(x))))

    jac = obj.jacobian(x)
    r = obj.vector(x)
    dof = max(r.size - x.size, 1)
    s2 = float(r @ r) / dof
    ext = _to_external(x)
    try:
        cov = s2 * np.linalg.inv(jac.T @ jac)
        sig = np.sqrt(np.clip(np.diag(cov), 0, None))
    except np.linalg.LinAlgError:
        sig = np.full(4, np.nan)
    # log-space sigma -> relative sigma on the rates
    unc = [sig[0]] + [ext[j] * sig[j] for j in (1, 2, 3)]
    log.info("fit finished: objective %.3e after %d iterations", obj.best, iterations)
    return FitResult(
        params=obj.params(x),
        residual_norm=math.sqrt(obj.best),
        uncertainty=dict(zip(PARAM_NAMES, map(float, unc))),
        iterations=iterations,
        converged=converged,
        history=history,
        gradient_norm=grad_norm,
    )


def synthetic_scan(
    truth: ModelParams,
    envelope: PulseEnvelope,
    detuning_mhz,
    t_end: float,
    chain: ChainConfig | None = None,
) -> ScanResult:
    """Radiation traces generated at ``truth`` (``truth.detuning`` is the offset)."""
    grid = np.asarray(detuning_mhz, dtype=float)
    n = grid_size(t_end, envelope.dt)
    mat = model_traces(truth, grid, envelope, n)
    p_ref = None
    if chain is not None:
        p_ref = chain.reference_power or float(np.max(np.abs(mat) ** 2))
    traces = []
    for r, row in enumerate(mat):
        tr = FieldTrace(0.0, envelope.dt, row)
        if chain is not None:
            cfg = ChainConfig(
                chain.snr_db, chain.n_avg, chain.lpf_cutoff, chain.if_freq,
                chain.rng_seed * 1000 + r, p_ref, chain.min_taps,
            )
            tr = apply_chain(tr, cfg)
        traces.append(tr)
    return ScanResult(grid, traces, [])
