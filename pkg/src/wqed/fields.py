"""Output fields from input-output theory and the photon-flux audit.

Field samples are in units of ``V0 * sqrt(photons/ns)``; powers in photons/ns.
The drive amplitude ``alpha(t)`` is real and non-negative, so the in-phase
quadrature is aligned with the pulse.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass

import numpy as np

from .core import ModelParams, PulseEnvelope
from .dynamics import BlochState, BlochTrace, integrate


@dataclass(frozen=True, eq=False)
class FieldTrace:
    t0: float
    dt: float
    samples: np.ndarray

    def __post_init__(self):
        self.samples.setflags(write=False)

    def __len__(self):
        return self.samples.size

    @property
    def times(self) -> np.ndarray:
        return self.t0 + self.dt * np.arange(self.samples.size)

    def __sub__(self, other: "FieldTrace") -> "FieldTrace":
        _check_grid(self, other)
        return FieldTrace(self.t0, self.dt, self.samples - other.samples)

    def cut(self, t_stop: float | None = None, t_start: float | None = None) -> "FieldTrace":
        """Samples with ``t_start <= t <= t_stop`` (inclusive, grid-snapped)."""
        t = self.times
        keep = np.ones(t.size, dtype=bool)
        if t_start is not None:
            keep &= t >= t_start - 1e-9 * self.dt
        if t_stop is not None:
            keep &= t <= t_stop + 1e-9 * self.dt
        idx = np.flatnonzero(keep)
        if idx.size == 0:
            raise ValueError("cut leaves an empty trace")
        return FieldTrace(float(t[idx[0]]), self.dt, self.samples[idx].copy())


def _check_grid(a, b) -> None:
    if len(a) != len(b) or not math.isclose(a.dt, b.dt) or not math.isclose(a.t0, b.t0, abs_tol=1e-12):
        raise ValueError("traces live on different time grids")


def drive_alpha(params: ModelParams, envelope: PulseEnvelope, n: int) -> np.ndarray:
    """Input amplitude alpha(t) = W(t)/sqrt(2*gamma1) on an ``n``-point grid."""
    return params.alpha_peak * envelope.sampled(n)


def output_field(
    alpha: np.ndarray,
    trace: BlochTrace,
    gamma1: float,
    phase: float = math.pi / 2,
    v0: float = 1.0,
) -> FieldTrace:
    """Right-going output ``V0*(alpha + exp(i*phase)*sqrt(gamma1/2)*<sigma_->)``."""
    alpha = np.asarray(alpha)
    if alpha.shape != (len(trace),):
        raise ValueError(f"alpha has shape {alpha.shape}, trace has {len(trace)} samples")
    emitted = np.exp(1j * phase) * math.sqrt(gamma1 / 2.0) * trace.sigma_minus
    return FieldTrace(trace.t0, trace.dt, v0 * (alpha + emitted))


def radiation_field(
    trace: BlochTrace, gamma1: float, phase: float = math.pi / 2, v0: float = 1.0
) -> FieldTrace:
    """Qubit-emitted part only (output minus the bare pulse)."""
    emitted = np.exp(1j * phase) * math.sqrt(gamma1 / 2.0) * trace.sigma_minus
    return FieldTrace(trace.t0, trace.dt, v0 * emitted)


def simulate_fields(
    params: ModelParams, envelope: PulseEnvelope, t_end: float | None = None, v0: float = 1.0
) -> tuple[BlochTrace, FieldTrace, FieldTrace]:
    """Integrate and return ``(bloch, output, radiation)``."""
    trace = integrate(params, envelope, t_end)
    alpha = drive_alpha(params, envelope, len(trace))
    out = output_field(alpha, trace, params.gamma1, params.field_phase, v0)
    rad = radiation_field(trace, params.gamma1, params.field_phase, v0)
    return trace, out, rad


def _cross_axis(sx, sy, phase):
    # Re(exp(i*phase) * (sx + i*sy))
    return math.cos(phase) * sx - math.sin(phase) * sy


def right_power(alpha_now, state, gamma1: float, phase: float = math.pi / 2):
    """Photon flux to the right: ``|alpha|^2 + alpha*sqrt(G1/2)*X + G1/2*P_e``.

    ``X = Re(exp(i*phase)*(sx + i*sy))``, which is ``-sy`` for ``phase = pi/2``.
    ``state`` may be a :class:`BlochState` or an ``(..., 3)`` array.
    """
    sx, sy, sz = _components(state)
    pe = 0.5 * (1.0 - sz)
    return (
        alpha_now * alpha_now
        + alpha_now * math.sqrt(gamma1 / 2.0) * _cross_axis(sx, sy, phase)
        + 0.5 * gamma1 * pe
    )


def left_power(state, gamma1: float):
    """Photon flux to the left: ``G1/2 * P_e``."""
    _, _, sz = _components(state)
    return 0.5 * gamma1 * 0.5 * (1.0 - sz)


def _components(state):
    if isinstance(state, BlochState):
        return state.sx, state.sy, state.sz
    s = np.asarray(state)
    return s[..., 0], s[..., 1], s[..., 2]


@dataclass(frozen=True)
class EnergyReport:
    window: tuple[float, float]
    input_photons: float
    transmitted_photons: float
    reflected_photons: float
    deficit: float

    def to_dict(self) -> dict:
        d = asdict(self)
        d["window"] = list(self.window)
        return d


def _window_integral(y: np.ndarray, dt: float, t_start: float, t_end: float) -> float:
    """Trapezoid rule on a uniform grid from 0, with linear end-point interpolation."""
    t = dt * np.arange(y.size)
    inner = (t > t_start) & (t < t_end)
    ts = np.concatenate([[t_start], t[inner], [t_end]])
    ys = np.concatenate([[np.interp(t_start, t, y)], y[inner], [np.interp(t_end, t, y)]])
    return float(np.trapezoid(ys, ts))


def energy_audit(
    params: ModelParams,
    envelope: PulseEnvelope,
    window: tuple[float, float],
    t_end: float | None = None,
) -> EnergyReport:
    """Photon numbers sent in, transmitted right and reflected left over ``window``."""
    t_start, t_stop = window
    t_end = max(envelope.duration, t_stop) if t_end is None else t_end
    if not (0.0 <= t_start < t_stop <= t_end + 1e-9):
        raise ValueError(f"window {window} outside the simulated span [0, {t_end}]")
    trace = integrate(params, envelope, t_end)
    alpha = drive_alpha(params, envelope, len(trace))
    p_in = alpha**2
    p_r = right_power(alpha, trace.states, params.gamma1, params.field_phase)
    p_l = left_power(trace.states, params.gamma1)
    n_in = _window_integral(p_in, trace.dt, t_start, t_stop)
    e_r = _window_integral(p_r, trace.dt, t_start, t_stop)
    e_l = _window_integral(p_l, trace.dt, t_start, t_stop)
    return EnergyReport((t_start, t_stop), n_in, e_r, e_l, n_in - e_r)


def analytic_half_period(params: ModelParams) -> dict:
    """Weak-decay predictions for the first half Rabi period of a rectangular pulse."""
    w = params.rabi_peak
    small = math.pi * params.gamma1 / (4.0 * w)
    n_in = math.pi * params.alpha_peak**2 / w
    return {
        "window": [0.0, math.pi / w],
        "input_photons": n_in,
        "transmitted_photons": n_in - 1.0 + small,
        "reflected_photons": small,
        "deficit": 1.0 - small,
    }
