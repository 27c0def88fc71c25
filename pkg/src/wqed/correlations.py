"""Two-time field correlations via the quantum regression theorem.

``<sigma_+(t1) sigma_-(t2)> = Tr[sigma_- Lambda(t2, t1)(rho(t1) sigma_+)]`` for
``t2 >= t1``, where ``Lambda`` is the piecewise-constant propagator chain.
``rho(t1)`` is taken from the RK4 Bloch trace so that the equal-time diagonal
reproduces the population trace exactly.
"""

from __future__ import annotations

import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .core import ModelParams, PulseEnvelope, rad_ns_to_mhz
from .dynamics import BlochTrace, grid_size, integrate, slice_propagators

# vectorized index of rho_eg; Tr[sigma_- X] = X_eg
_EG = 2


@dataclass(frozen=True, eq=False)
class TwoTimeGrid:
    """Incoherent ``G(t1, t2)`` on ``t_grid x t_grid`` (``values[i, j] = G(t_i, t_j)``)."""

    t_grid: np.ndarray
    values: np.ndarray

    @property
    def dt(self) -> float:
        return float(self.t_grid[1] - self.t_grid[0])


@dataclass(frozen=True, eq=False)
class IpsdMap:
    t_grid: np.ndarray
    omega_grid: np.ndarray
    magnitudes: np.ndarray  # shape (len(t_grid), len(omega_grid))

    @property
    def freq_mhz(self) -> np.ndarray:
        return rad_ns_to_mhz(self.omega_grid)


def default_threads() -> int:
    env = os.environ.get("WQED_THREADS")
    if env:
        return max(1, int(env))
    return os.cpu_count() or 1


def _times_sigma_plus(rho_vecs: np.ndarray) -> np.ndarray:
    """``rho @ sigma_+`` with ``sigma_+ = |e><g|``: only the g-column survives."""
    out = np.zeros_like(rho_vecs)
    out[:, 0] = rho_vecs[:, 1]  # (rho sigma_+)_gg = rho_ge
    out[:, 2] = rho_vecs[:, 3]  # (rho sigma_+)_eg = rho_ee
    return out


def _rows(props: np.ndarray, seeds: np.ndarray, start: int, stop: int) -> np.ndarray:
    """Upper-triangular block: rows ``start..stop-1``, columns ``start..n-1``."""
    n = seeds.shape[0]
    block = np.zeros((stop - start, n - start), dtype=complex)
    vecs = np.zeros((stop - start, 4), dtype=complex)
    for k in range(start, n):
        if k < stop:
            vecs[k - start] = seeds[k]
        active = min(k + 1, stop) - start
        block[:active, k - start] = vecs[:active, _EG]
        if k + 1 < n:
            vecs[:active] = vecs[:active] @ props[k].T
    return block


def correlator_from_trace(
    params: ModelParams,
    envelope: PulseEnvelope,
    trace: BlochTrace,
    stride: int = 1,
    threads: int | None = None,
) -> tuple[np.ndarray, np.ndarray]:
    """``(t_grid, C)`` with ``C[i, j] = <sigma_+(t_i) sigma_-(t_j)>`` on every ``stride``-th point."""
    if stride < 1:
        raise ValueError("stride must be >= 1")
    if (len(trace) - 1) % stride:
        raise ValueError(f"trace of {len(trace)} samples is not aligned with stride {stride}")
    if not math.isclose(trace.dt, envelope.dt):
        raise ValueError("trace and envelope use different time steps")
    n = (len(trace) - 1) // stride + 1
    props = slice_propagators(params, envelope, n, stride)
    seeds = _times_sigma_plus(trace.rho_vecs()[::stride])

    threads = default_threads() if threads is None else max(1, threads)
    # balance the triangular workload: row i costs ~ (n - i)
    edges = [0]
    if threads > 1:
        for q in range(1, threads):
            edges.append(int(round(n * (1 - math.sqrt(1 - q / threads)))))
    edges.append(n)
    edges = sorted(set(edges))
    chunks = list(zip(edges[:-1], edges[1:]))

    upper = np.zeros((n, n), dtype=complex)
    if len(chunks) == 1:
        blocks = [_rows(props, seeds, 0, n)]
    else:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            blocks = list(pool.map(lambda c: _rows(props, seeds, *c), chunks))
    for (a, b), blk in zip(chunks, blocks):
        upper[a:b, a:] = blk
    full = np.triu(upper) + np.triu(upper, 1).conj().T
    # equal-time entries are real (P_e); drop round-off imaginary parts
    idx = np.arange(n)
    full[idx, idx] = full[idx, idx].real
    return trace.times[::stride].copy(), full


def two_time_correlator(
    params: ModelParams,
    envelope: PulseEnvelope,
    t_end: float,
    stride: int = 1,
    threads: int | None = None,
) -> tuple[np.ndarray, np.ndarray, BlochTrace]:
    """Integrate the dynamics and return ``(t_grid, C, trace)``."""
    trace = integrate(params, envelope, t_end)
    t_grid, c = correlator_from_trace(params, envelope, trace, stride, threads)
    return t_grid, c, trace


def g1_incoherent(
    two_time: np.ndarray,
    sigma_minus: np.ndarray,
    gamma1: float,
    t_grid: np.ndarray,
    v0: float = 1.0,
) -> TwoTimeGrid:
    """Connected correlation ``(V0^2 G1/2) (<s+(t1) s-(t2)> - <s+(t1)><s-(t2)>)``."""
    sm = np.asarray(sigma_minus)
    if two_time.shape != (sm.size, sm.size) or t_grid.size != sm.size:
        raise ValueError("correlator, mean coherence and time grid sizes differ")
    values = 0.5 * v0 * v0 * gamma1 * (two_time - np.outer(sm.conj(), sm))
    return TwoTimeGrid(np.asarray(t_grid, dtype=float), values)


def correlation_grid(
    params: ModelParams,
    envelope: PulseEnvelope,
    t_end: float,
    stride: int = 1,
    threads: int | None = None,
    v0: float = 1.0,
) -> tuple[TwoTimeGrid, BlochTrace]:
    t_grid, c, trace = two_time_correlator(params, envelope, t_end, stride, threads)
    sm = trace.sigma_minus[::stride]
    return g1_incoherent(c, sm, params.gamma1, t_grid, v0), trace


def tau_rows(grid: TwoTimeGrid, rows=None) -> np.ndarray:
    """``D[r, k] = G(t_i, t_i + k*dt)`` for each selected row ``i`` (zero past the end)."""
    n = grid.t_grid.size
    rows = np.arange(n) if rows is None else np.asarray(rows)
    out = np.zeros((rows.size, n), dtype=complex)
    for r, i in enumerate(rows):
        out[r, : n - i] = grid.values[i, i:]
    return out


def ipsd(
    grid: TwoTimeGrid,
    omega_grid: np.ndarray | None = None,
    rows=None,
    pad_factor: int = 4,
    freq_max_mhz: float | None = None,
    chunk: int = 256,
) -> IpsdMap:
    """``|int_0^inf G(t, t+tau) exp(-i*omega*tau) dtau|`` for each row time ``t``.

    Rectangle rule over tau with half weight at ``tau = 0``. Without an
    explicit ``omega_grid`` the FFT grid of the zero-padded tau record is used
    (ascending, optionally cropped to ``|f| <= freq_max_mhz``); its
    resolution is ``2*pi/(pad_factor*tau_span)``.
    """
    dt = grid.dt
    rows = np.arange(grid.t_grid.size) if rows is None else np.asarray(rows)
    n = grid.t_grid.size
    if omega_grid is None:
        m = pad_factor * n
        omega = 2 * np.pi * np.fft.fftfreq(m, dt)
        order = np.argsort(omega)
        if freq_max_mhz is not None:
            order = order[np.abs(omega[order]) <= freq_max_mhz * 2e-3 * np.pi]
        omega = omega[order]
    else:
        omega = np.asarray(omega_grid, dtype=float)
        kernel = np.exp(-1j * np.outer(dt * np.arange(n), omega))
    mags = np.empty((rows.size, omega.size))
    for a in range(0, rows.size, chunk):
        d = tau_rows(grid, rows[a : a + chunk])
        d[:, 0] *= 0.5
        if omega_grid is None:
            spec = np.fft.fft(d, n=m, axis=1)[:, order]
        else:
            spec = d @ kernel
        mags[a : a + chunk] = dt * np.abs(spec)
    return IpsdMap(grid.t_grid[rows], omega, mags)


def steady_psd(
    grid: TwoTimeGrid,
    steady_window: tuple[float, float],
    omega_grid: np.ndarray | None = None,
    pad_factor: int = 4,
) -> tuple[np.ndarray, np.ndarray]:
    """IPSD averaged over row times inside ``steady_window``; returns ``(omega, psd)``.

    Every row in the window is truncated to the tau span available to the
    last row so all rows share one spectral resolution.
    """
    t = grid.t_grid
    rows = np.flatnonzero((t >= steady_window[0]) & (t <= steady_window[1]))
    if rows.size == 0:
        raise ValueError(f"steady window {steady_window} contains no grid points")
    n_tau = t.size - rows[-1]
    sub = TwoTimeGrid(t, grid.values)
    d = tau_rows(sub, rows)[:, :n_tau]
    d[:, 0] *= 0.5
    dt = grid.dt
    if omega_grid is None:
        m = pad_factor * n_tau
        spec = dt * np.fft.fft(d, n=m, axis=1)
        omega = 2 * np.pi * np.fft.fftfreq(m, dt)
        order = np.argsort(omega)
        mags, omega = np.abs(spec[:, order]), omega[order]
    else:
        omega = np.asarray(omega_grid, dtype=float)
        tau = dt * np.arange(n_tau)
        mags = np.abs(dt * (d @ np.exp(-1j * np.outer(tau, omega))))
    return omega, mags.mean(axis=0)


def memory_estimate_mb(n_points: int) -> float:
    """Rough peak memory of an ``n x n`` complex grid plus its working copies."""
    return 3 * 16.0 * n_points * n_points / 2**20


def correlation_points(t_end: float, dt: float, stride: int) -> int:
    return (grid_size(t_end, dt) - 1) // stride + 1
