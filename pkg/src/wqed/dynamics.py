"""Driven, damped two-level atom in the frame rotating at the drive.

Sign conventions: the ground state is ``sz = +1``, ``<sigma_-> = (sx + i sy)/2``
and the density matrix is vectorized as ``[rho_gg, rho_ge, rho_eg, rho_ee]``.
The Bloch equations are

    dsx/dt = -delta*sy - G2*sx
    dsy/dt =  delta*sx + W(t)*sz - G2*sy
    dsz/dt = -W(t)*sy + G1*(1 - sz)

with ``W(t) = rabi_peak * envelope(t)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numba
import numpy as np

from .core import ModelParams, PulseEnvelope

#: Bloch vectors may exceed unit length by this much from round-off.
NORM_SLACK = 1e-9

GROUND = np.array([1.0, 0.0, 0.0, 0.0], dtype=complex)
EXCITED = np.array([0.0, 0.0, 0.0, 1.0], dtype=complex)


@dataclass(frozen=True)
class BlochState:
    sx: float
    sy: float
    sz: float

    @property
    def excited_population(self) -> float:
        return 0.5 * (1.0 - self.sz)

    @property
    def sigma_minus(self) -> complex:
        return 0.5 * complex(self.sx, self.sy)

    def as_array(self) -> np.ndarray:
        return np.array([self.sx, self.sy, self.sz])

    def to_rho_vec(self) -> np.ndarray:
        return bloch_to_rho_vec(self.as_array())


@dataclass(frozen=True, eq=False)
class BlochTrace:
    """Bloch vector sampled at ``t0 + k*dt``; ``states`` has shape ``(n, 3)``."""

    t0: float
    dt: float
    states: np.ndarray

    def __post_init__(self):
        self.states.setflags(write=False)

    def __len__(self):
        return self.states.shape[0]

    @property
    def times(self) -> np.ndarray:
        return self.t0 + self.dt * np.arange(len(self))

    @property
    def sx(self) -> np.ndarray:
        return self.states[:, 0]

    @property
    def sy(self) -> np.ndarray:
        return self.states[:, 1]

    @property
    def sz(self) -> np.ndarray:
        return self.states[:, 2]

    @property
    def sigma_minus(self) -> np.ndarray:
        return 0.5 * (self.states[:, 0] + 1j * self.states[:, 1])

    @property
    def excited_population(self) -> np.ndarray:
        return 0.5 * (1.0 - self.states[:, 2])

    def state(self, k: int) -> BlochState:
        return BlochState(*map(float, self.states[k]))

    def rho_vecs(self) -> np.ndarray:
        return bloch_to_rho_vec(self.states)


def bloch_to_rho_vec(s: np.ndarray) -> np.ndarray:
    """Bloch vector(s) ``[..., 3]`` to vectorized density matrices ``[..., 4]``."""
    s = np.asarray(s, dtype=float)
    out = np.empty(s.shape[:-1] + (4,), dtype=complex)
    coh = 0.5 * (s[..., 0] + 1j * s[..., 1])
    out[..., 0] = 0.5 * (1.0 + s[..., 2])
    out[..., 1] = np.conj(coh)
    out[..., 2] = coh
    out[..., 3] = 0.5 * (1.0 - s[..., 2])
    return out


def rho_vec_to_bloch(v: np.ndarray) -> np.ndarray:
    v = np.asarray(v)
    return np.stack(
        [2.0 * v[..., 2].real, 2.0 * v[..., 2].imag, (v[..., 0] - v[..., 3]).real], axis=-1
    )


def bloch_derivative(
    state: BlochState, rabi_now: float, detuning: float, gamma1: float, gamma2: float
) -> BlochState:
    sx, sy, sz = state.sx, state.sy, state.sz
    return BlochState(
        -detuning * sy - gamma2 * sx,
        detuning * sx + rabi_now * sz - gamma2 * sy,
        -rabi_now * sy + gamma1 * (1.0 - sz),
    )


@numba.njit(cache=True, nogil=True)
def _rk4_kernel(drive, dt, detuning, g1, g2, s0):
    n = drive.shape[0]
    out = np.empty((n, 3))
    sx, sy, sz = s0[0], s0[1], s0[2]
    out[0, 0] = sx
    out[0, 1] = sy
    out[0, 2] = sz
    h2 = 0.5 * dt
    for k in range(n - 1):
        w0 = drive[k]
        w1 = drive[k + 1]
        wm = 0.5 * (w0 + w1)

        ax = -detuning * sy - g2 * sx
        ay = detuning * sx + w0 * sz - g2 * sy
        az = -w0 * sy + g1 * (1.0 - sz)

        x, y, z = sx + h2 * ax, sy + h2 * ay, sz + h2 * az
        bx = -detuning * y - g2 * x
        by = detuning * x + wm * z - g2 * y
        bz = -wm * y + g1 * (1.0 - z)

        x, y, z = sx + h2 * bx, sy + h2 * by, sz + h2 * bz
        cx = -detuning * y - g2 * x
        cy = detuning * x + wm * z - g2 * y
        cz = -wm * y + g1 * (1.0 - z)

        x, y, z = sx + dt * cx, sy + dt * cy, sz + dt * cz
        dx = -detuning * y - g2 * x
        dy = detuning * x + w1 * z - g2 * y
        dz = -w1 * y + g1 * (1.0 - z)

        sx += dt / 6.0 * (ax + 2.0 * bx + 2.0 * cx + dx)
        sy += dt / 6.0 * (ay + 2.0 * by + 2.0 * cy + dy)
        sz += dt / 6.0 * (az + 2.0 * bz + 2.0 * cz + dz)
        out[k + 1, 0] = sx
        out[k + 1, 1] = sy
        out[k + 1, 2] = sz
    return out


def max_stable_dt(params: ModelParams) -> float:
    """Largest step accepted by :func:`integrate`: 2 % of the fastest time scale."""
    scales = []
    if params.rabi_peak > 0:
        scales.append(2 * math.pi / params.rabi_peak)
    if params.gamma2 > 0:
        scales.append(1.0 / params.gamma2)
    return 0.02 * min(scales) if scales else math.inf


def check_step(params: ModelParams, dt: float) -> None:
    limit = max_stable_dt(params)
    if dt > limit * (1 + 1e-12):
        raise ValueError(
            f"dt={dt:g} ns is too large for these rates; use dt <= {limit:.4g} ns "
            f"(2% of min(2*pi/rabi, 1/gamma2))"
        )


def drive_samples(params: ModelParams, envelope: PulseEnvelope, n: int) -> np.ndarray:
    """Instantaneous Rabi frequency on an ``n``-point grid of step ``envelope.dt``."""
    return params.rabi_peak * envelope.sampled(n)


def grid_size(t_end: float, dt: float) -> int:
    return int(round(t_end / dt)) + 1


def integrate(
    params: ModelParams,
    envelope: PulseEnvelope,
    t_end: float | None = None,
    initial: BlochState | None = None,
) -> BlochTrace:
    """Fixed-step RK4 integration from the ground state on the envelope's grid.

    The drive is zero after ``envelope.duration``; between grid points the
    envelope is interpolated linearly.
    """
    t_end = envelope.duration if t_end is None else t_end
    if t_end < envelope.duration - 1e-9:
        raise ValueError("t_end must cover the whole envelope")
    check_step(params, envelope.dt)
    n = grid_size(t_end, envelope.dt)
    s0 = np.array([0.0, 0.0, 1.0]) if initial is None else initial.as_array()
    drive = drive_samples(params, envelope, n)
    states = _rk4_kernel(drive, envelope.dt, params.detuning, params.gamma1, params.gamma2, s0)
    return BlochTrace(0.0, envelope.dt, states)


def steady_state(rabi: float, detuning: float, gamma1: float, gamma2: float) -> BlochState:
    """Fixed point of the Bloch equations for constant drive."""
    if not (gamma1 > 0 and gamma2 > 0):
        raise ValueError("steady state needs gamma1 > 0 and gamma2 > 0")
    # closed form of the 3x3 linear system
    den = gamma1 * (gamma2**2 + detuning**2) + gamma2 * rabi**2
    if den == 0:
        raise ArithmeticError("singular steady-state system")
    sz = gamma1 * (gamma2**2 + detuning**2) / den
    sx = -detuning * rabi * gamma1 / den
    sy = gamma2 * rabi * gamma1 / den
    return BlochState(sx, sy, sz)


# superoperators --------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class Liouvillian:
    """Generator acting on ``[rho_gg, rho_ge, rho_eg, rho_ee]``."""

    matrix: np.ndarray

    @classmethod
    def build(cls, rabi: float, detuning: float, gamma1: float, gamma2: float) -> "Liouvillian":
        return cls(liouvillian_matrix(rabi, detuning, gamma1, gamma2))

    def __matmul__(self, v):
        return self.matrix @ v


def liouvillian_matrix(rabi: float, detuning: float, gamma1: float, gamma2: float) -> np.ndarray:
    h = 0.5j * rabi
    return np.array(
        [
            [0.0, -h, h, gamma1],
            [-h, -1j * detuning - gamma2, 0.0, h],
            [h, 0.0, 1j * detuning - gamma2, -h],
            [0.0, h, -h, -gamma1],
        ],
        dtype=complex,
    )


def expm_taylor(a: np.ndarray) -> np.ndarray:
    """Matrix exponential by scaling and squaring around a Taylor core."""
    a = np.asarray(a, dtype=complex)
    if not np.all(np.isfinite(a)):
        raise ValueError("matrix exponential of a non-finite matrix")
    norm = np.linalg.norm(a, 1)
    s = max(0, int(math.ceil(math.log2(norm / 0.25)))) if norm > 0.25 else 0
    b = a / (2.0**s)
    eye = np.eye(a.shape[0], dtype=complex)
    out = eye.copy()
    term = eye.copy()
    # ||b|| <= 1/4: 18 terms leave a remainder below 1e-18
    for k in range(1, 19):
        term = term @ b / k
        out = out + term
    for _ in range(s):
        out = out @ out
    return out


def propagator(liouvillian: Liouvillian | np.ndarray, delta_t: float) -> np.ndarray:
    """``exp(L * delta_t)`` for a constant generator."""
    if delta_t < 0:
        raise ValueError("delta_t must be non-negative")
    mat = liouvillian.matrix if isinstance(liouvillian, Liouvillian) else np.asarray(liouvillian)
    return expm_taylor(mat * delta_t)


def slice_propagators(
    params: ModelParams, envelope: PulseEnvelope, n: int, stride: int = 1
) -> np.ndarray:
    """Per-slice propagators for ``n`` output points spaced ``stride*dt``.

    Each fine slice ``[t_k, t_k+dt]`` uses the generator frozen at the
    midpoint drive; coarse slices are ordered products of the fine ones.
    Identical drive values share one exponential.
    """
    dt = envelope.dt
    n_fine = (n - 1) * stride + 1
    drive = drive_samples(params, envelope, n_fine)
    mid = 0.5 * (drive[:-1] + drive[1:])
    cache: dict[float, np.ndarray] = {}
    fine = np.empty((n_fine - 1, 4, 4), dtype=complex)
    for k, w in enumerate(mid):
        prop = cache.get(w)
        if prop is None:
            prop = propagator(liouvillian_matrix(w, params.detuning, params.gamma1, params.gamma2), dt)
            cache[w] = prop
        fine[k] = prop
    if stride == 1:
        return fine
    coarse = np.empty((n - 1, 4, 4), dtype=complex)
    for j in range(n - 1):
        acc = fine[j * stride]
        for k in range(j * stride + 1, (j + 1) * stride):
            acc = fine[k] @ acc
        coarse[j] = acc
    return coarse
