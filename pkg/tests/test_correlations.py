import math

import numpy as np
import pytest

from conftest import random_params, rectangle
from wqed.core import ModelParams, cosine_taper
from wqed.correlations import (
    TwoTimeGrid,
    correlation_grid,
    correlator_from_trace,
    g1_incoherent,
    ipsd,
    memory_estimate_mb,
    steady_psd,
    two_time_correlator,
)
from wqed.dynamics import BlochState, integrate, liouvillian_matrix, propagator
from wqed.spectra import Spectrum, find_peaks


@pytest.fixture(scope="module")
def short_grid():
    p = ModelParams.from_mhz(gamma1_mhz=0.9, gamma_phi_mhz=0.6, omega_r_mhz=19.8)
    env = cosine_taper(120, 0.02, 0.1)
    grid, trace = correlation_grid(p, env, 600, stride=2)
    return p, env, grid, trace


@pytest.fixture(scope="module")
def long_grid():
    p = ModelParams.from_mhz(gamma1_mhz=0.9, gamma_phi_mhz=0.6, omega_r_mhz=19.8)
    env = cosine_taper(2000, 0.02, 0.5)
    t, c, trace = two_time_correlator(p, env, 2000, stride=2)
    grid = g1_incoherent(c, trace.sigma_minus[::2], p.gamma1, t)
    return p, t, c, grid


def single_exp_correlator(params, trace):
    """Reference: the same regression with one matrix exponential per lag."""
    lmat = liouvillian_matrix(params.rabi_peak, params.detuning, params.gamma1, params.gamma2)
    n = len(trace)
    rho = trace.rho_vecs()
    seeds = np.zeros_like(rho)
    seeds[:, 0], seeds[:, 2] = rho[:, 1], rho[:, 3]
    out = np.zeros((n, n), dtype=complex)
    for lag in range(n):
        phi = propagator(lmat, lag * trace.dt)
        vals = seeds[: n - lag] @ phi.T
        idx = np.arange(n - lag)
        out[idx, idx + lag] = vals[:, 2]
    return out


class TestCorrelator:
    def test_hermitian_and_equal_time(self, short_grid):
        p, env, grid, trace = short_grid
        t, c, _ = two_time_correlator(p, env, 600, stride=2)
        assert np.max(np.abs(c - c.conj().T)) < 1e-9
        np.testing.assert_allclose(np.diag(c).real, trace.excited_population[::2], atol=1e-8)

    def test_connected_diagonal(self, short_grid):
        p, _, grid, trace = short_grid
        d = np.diag(grid.values)
        assert np.all(np.abs(d.imag) == 0)
        expected = 0.5 * p.gamma1 * (trace.excited_population - np.abs(trace.sigma_minus) ** 2)[::2]
        np.testing.assert_allclose(d.real, expected, atol=1e-12)
        assert d.real.min() >= -1e-12

    def test_positive_semidefinite_subgrids(self, short_grid):
        _, _, grid, _ = short_grid
        rng = np.random.default_rng(11)
        n = grid.t_grid.size
        for _ in range(20):
            idx = np.sort(rng.choice(n, 20, replace=False))
            ev = np.linalg.eigvalsh(grid.values[np.ix_(idx, idx)])
            assert ev.min() >= -1e-6 * ev.max()

    def test_undriven_excited_closed_form(self):
        p = ModelParams.from_mhz(gamma1_mhz=0.9, gamma_phi_mhz=0.6)
        env = rectangle(10, 0.1)
        trace = integrate(p, env, 300, initial=BlochState(0, 0, -1))
        t, c = correlator_from_trace(p, env, trace, stride=5)
        t1, t2 = np.meshgrid(t, t, indexing="ij")
        expected = np.exp(-p.gamma1 * t1) * np.exp(-p.gamma2 * (t2 - t1))
        upper = t2 >= t1
        assert np.max(np.abs(c[upper] - expected[upper])) < 1e-8

    @pytest.mark.parametrize("seed", range(3))
    def test_constant_drive_single_exponential(self, seed):
        p = random_params(np.random.default_rng(seed))
        env = rectangle(60, 0.1)
        trace = integrate(p, env)
        _, c = correlator_from_trace(p, env, trace)
        ref = single_exp_correlator(p, trace)
        upper = np.triu(np.ones_like(ref, dtype=bool))
        assert np.max(np.abs(c[upper] - ref[upper])) < 1e-8

    def test_thread_count_invariance(self, ref, ref_pulse):
        trace = integrate(ref, ref_pulse, 200)
        _, one = correlator_from_trace(ref, ref_pulse, trace, stride=4, threads=1)
        _, three = correlator_from_trace(ref, ref_pulse, trace, stride=4, threads=3)
        np.testing.assert_array_equal(one, three)

    def test_misaligned_stride(self, ref, ref_pulse):
        trace = integrate(ref, ref_pulse, 200)
        with pytest.raises(ValueError):
            correlator_from_trace(ref, ref_pulse, trace, stride=7)

    def test_stationary_in_steady_window(self, long_grid):
        _, t, c, _ = long_grid
        rows = np.flatnonzero((t >= 800) & (t <= 1200))
        lags = np.arange(0, 400)
        block = np.array([c[i, i + lags] for i in rows])
        dev = np.max(np.abs(block - block.mean(axis=0)))
        assert dev < 0.02 * np.max(np.abs(block))


class TestIncoherent:
    def test_no_qubit_interaction(self):
        t = np.arange(5) * 0.1
        g = g1_incoherent(np.zeros((5, 5), complex), np.zeros(5, complex), 0.0057, t)
        assert not np.any(g.values)

    def test_shape_mismatch(self):
        with pytest.raises(ValueError):
            g1_incoherent(np.zeros((5, 5), complex), np.zeros(4, complex), 0.0057, np.arange(5.0))

    def test_zeros_at_full_periods_weak_decay(self):
        # gamma1 << rabi: contrast loss over three periods is negligible
        p = ModelParams.from_mhz(gamma1_mhz=0.02, gamma_phi_mhz=0.0133, omega_r_mhz=19.8)
        env = rectangle(200, 0.1)
        grid, _ = correlation_grid(p, env, 200, stride=2)
        g = np.abs(grid.values)
        top = g.max()
        period = 2 * math.pi / p.rabi_peak
        for n in (1, 2, 3):
            i = int(np.argmin(np.abs(grid.t_grid - n * period)))
            assert g[i].max() <= 0.05 * top
            j = int(np.argmin(np.abs(grid.t_grid - (n - 0.5) * period)))
            assert g[j, j] > 0.5 * top

    def test_zeros_fill_in_with_decoherence(self, long_grid):
        p, t, _, grid = long_grid
        period = 2 * math.pi / p.rabi_peak
        diag = np.diag(grid.values).real
        minima = []
        for k in range(int(600 / period)):
            sel = (t >= k * period) & (t < (k + 1) * period)
            minima.append(diag[sel].min())
        assert np.all(np.diff(minima) > -1e-9 * max(minima))
        assert minima[-1] > 0.5 * diag[t > 800].mean()


class TestIpsd:
    def test_zero_grid(self):
        t = np.arange(50) * 0.1
        im = ipsd(TwoTimeGrid(t, np.zeros((50, 50), complex)))
        assert not np.any(im.magnitudes)

    def test_explicit_omega_matches_fft(self, short_grid):
        _, _, grid, _ = short_grid
        fft_map = ipsd(grid, rows=[10, 200])
        sel = slice(0, None, 97)
        direct = ipsd(grid, omega_grid=fft_map.omega_grid[sel], rows=[10, 200])
        np.testing.assert_allclose(direct.magnitudes, fft_map.magnitudes[:, sel], rtol=1e-9, atol=1e-15)
        assert fft_map.magnitudes.min() >= 0

    def test_half_weight_at_zero_lag(self):
        t = np.arange(4) * 1.0
        vals = np.ones((4, 4), complex)
        im = ipsd(TwoTimeGrid(t, vals), omega_grid=np.array([0.0]), rows=[0])
        assert im.magnitudes[0, 0] == pytest.approx(3.5)

    def _peaks(self, im, t0, count=3):
        r = int(np.argmin(np.abs(im.t_grid - t0)))
        return r, find_peaks(Spectrum(im.freq_mhz, im.magnitudes[r]), count)

    def test_triplet_during_drive(self, short_grid):
        _, _, grid, _ = short_grid
        im = ipsd(grid, freq_max_mhz=60)
        _, peaks = self._peaks(im, 20.0)
        assert sorted(f for f, _ in peaks) == pytest.approx([-19.8, 0.0, 19.8], abs=1.0)

    def test_central_peak_only_after_pulse(self, short_grid):
        _, _, grid, _ = short_grid
        im = ipsd(grid, freq_max_mhz=60)
        band = (np.abs(im.freq_mhz) > 15) & (np.abs(im.freq_mhz) < 25)
        r_in, _ = self._peaks(im, 20.0)
        assert im.magnitudes[r_in, band].max() > 0.2 * im.magnitudes[r_in].max()
        for t0 in (150.0, 270.0):
            r, peaks = self._peaks(im, t0, 1)
            assert peaks[0][0] == pytest.approx(0.0, abs=0.1)
            assert im.magnitudes[r, band].max() < 0.1 * im.magnitudes[r].max()


class TestSteadyPsd:
    def test_mollow_triplet(self, long_grid):
        p, _, _, grid = long_grid
        omega, psd = steady_psd(grid, (600, 1400))
        spec = Spectrum(omega / (2e-3 * math.pi), psd)
        peaks = sorted(f for f, _ in find_peaks(spec, 3))
        assert peaks == pytest.approx([-19.8, 0.0, 19.8], abs=spec.bin_mhz)

    def test_empty_window(self, short_grid):
        with pytest.raises(ValueError):
            steady_psd(short_grid[2], (1000.0, 2000.0))

    def test_relaxed_window_is_zero(self, short_grid):
        p, env, _, _ = short_grid
        grid, _ = correlation_grid(p.with_(rabi_peak=0.0), env, 300, stride=3)
        _, psd = steady_psd(grid, (150.0, 250.0))
        assert not np.any(psd)


def test_memory_estimate_scales_quadratically():
    assert memory_estimate_mb(2000) == pytest.approx(4 * memory_estimate_mb(1000))
