import math

import numpy as np
import pytest

from wqed.core import REFERENCE_PARAMS, cosine_taper, mhz_to_rad_ns
from wqed.estimation import (
    DEFAULT_BOUNDS,
    FitProblem,
    _Objective,
    _to_internal,
    fit,
    model_traces,
    objective_from_traces,
    params_to_mhz,
    residual,
    synthetic_scan,
)
from wqed.fields import FieldTrace
from wqed.measurement import ChainConfig
from wqed.spectra import ScanResult

GRID = [-30.0, -15.0, 0.0, 15.0, 30.0]
T_END = 240.0


@pytest.fixture(scope="module")
def env():
    return cosine_taper(120, 0.02, 0.1)


@pytest.fixture(scope="module")
def clean(env):
    return synthetic_scan(REFERENCE_PARAMS, env, GRID, T_END)


@pytest.fixture(scope="module")
def noisy(env):
    chain = ChainConfig(rng_seed=3)
    return chain, synthetic_scan(REFERENCE_PARAMS, env, GRID, T_END, chain)


def perturbed(p, sign=1):
    f = 0.2 * sign
    return p.with_(
        rabi_peak=p.rabi_peak * (1 + f),
        gamma1=p.gamma1 * (1 - f),
        gamma_phi=p.gamma_phi * (1 + f),
        detuning=mhz_to_rad_ns(0.5),
    )


def rel(a, b):
    return abs(a / b - 1)


class TestResidual:
    def test_zero_at_generator(self, clean, env):
        assert residual(REFERENCE_PARAMS, clean, env) < 1e-12

    def test_weights_linear(self, clean, env):
        p = perturbed(REFERENCE_PARAMS)
        r1 = residual(p, clean, env, np.ones(5))
        assert residual(p, clean, env, 2 * np.ones(5)) == pytest.approx(2 * r1, rel=1e-12)

    def test_deterministic(self, noisy, env):
        chain, data = noisy
        p = perturbed(REFERENCE_PARAMS)
        assert residual(p, data, env, chain=chain) == residual(p, data, env, chain=chain)

    def test_grid_mismatch(self, clean):
        with pytest.raises(ValueError):
            residual(REFERENCE_PARAMS, clean, cosine_taper(120, 0.02, 0.05))
        with pytest.raises(ValueError):
            residual(REFERENCE_PARAMS, clean, cosine_taper(120, 0.02, 0.1), weights=np.ones(3))

    def test_locally_convex_at_truth(self, clean, env):
        problem = FitProblem(clean, env, REFERENCE_PARAMS)
        obj = _Objective(problem)
        x0 = _to_internal(params_to_mhz(REFERENCE_PARAMS))
        f0 = obj(x0)
        for j, h in enumerate((1e-2, 1e-3, 1e-3, 1e-3)):
            e = np.zeros(4)
            e[j] = h
            assert (obj(x0 + e) - 2 * f0 + obj(x0 - e)) / h**2 > 0

    def test_global_phase_invariance(self, clean, env):
        model = model_traces(perturbed(REFERENCE_PARAMS), clean.detuning_mhz, env, clean.matrix().shape[1])
        data = clean.matrix()
        w = np.ones(5)
        rot = np.exp(0.7j)
        assert objective_from_traces(rot * model, rot * data, w) == pytest.approx(
            objective_from_traces(model, data, w), rel=1e-12
        )

    def test_gradient_matches_internal_model(self, noisy, env):
        chain, data = noisy
        obj = _Objective(FitProblem(data, env, REFERENCE_PARAMS, chain=chain))
        x0 = _to_internal(params_to_mhz(REFERENCE_PARAMS))
        rng = np.random.default_rng(0)
        for _ in range(10):
            x = x0 + rng.normal(scale=[0.3, 0.02, 0.05, 0.05])
            g_model = obj.model_gradient(x)
            g_fd = np.empty(4)
            for j in range(4):
                h = 1e-5 * max(1.0, abs(x[j]))
                e = np.zeros(4)
                e[j] = h
                g_fd[j] = (obj(x + e) - obj(x - e)) / (2 * h)
            cos = g_model @ g_fd / (np.linalg.norm(g_model) * np.linalg.norm(g_fd))
            assert cos > 0.99


class TestProblemValidation:
    def test_too_few_rows(self, env):
        data = synthetic_scan(REFERENCE_PARAMS, env, [0.0, 10.0, 20.0], T_END)
        with pytest.raises(ValueError, match="at least 4"):
            FitProblem(data, env, REFERENCE_PARAMS)

    def test_bounds_must_contain_guess(self, clean, env):
        bounds = dict(DEFAULT_BOUNDS, omega_r_mhz=(1.0, 10.0))
        with pytest.raises(ValueError, match="omega_r_mhz"):
            FitProblem(clean, env, REFERENCE_PARAMS, bounds=bounds)

    def test_degenerate_data(self, clean, env):
        zeros = ScanResult(clean.detuning_mhz, [FieldTrace(0.0, 0.1, np.zeros(len(clean.traces[0]), complex))] * 5, [])
        with pytest.raises(ValueError, match="degenerate"):
            FitProblem(zeros, env, REFERENCE_PARAMS)


class TestFit:
    @pytest.mark.parametrize("sign", [1, -1])
    def test_noiseless_round_trip(self, clean, env, sign):
        res = fit(FitProblem(clean, env, perturbed(REFERENCE_PARAMS, sign)))
        off, w, g1, gp = params_to_mhz(res.params)
        assert res.converged
        assert rel(w, 19.8) < 0.005 and rel(g1, 0.9) < 0.005 and rel(gp, 0.6) < 0.02
        assert abs(off) < 0.05
        assert all(b <= a * (1 + 1e-12) for a, b in zip(res.history, res.history[1:]))

    def test_noisy_round_trip(self, noisy, env):
        chain, data = noisy
        res = fit(FitProblem(data, env, perturbed(REFERENCE_PARAMS), chain=chain))
        off, w, g1, gp = params_to_mhz(res.params)
        assert res.converged
        assert rel(w, 19.8) < 0.02 and rel(g1, 0.9) < 0.02 and rel(gp, 0.6) < 0.05 and abs(off) < 0.1
        assert all(np.isfinite(list(res.uncertainty.values())))

    def test_start_at_truth(self, noisy, env):
        chain, data = noisy
        res = fit(FitProblem(data, env, REFERENCE_PARAMS, chain=chain))
        floor = math.sqrt(residual(REFERENCE_PARAMS, data, env, chain=chain))
        assert res.converged and res.iterations <= 2
        assert floor * 0.99 <= res.residual_norm <= floor

    def test_non_convergence_is_reported(self, clean, env):
        res = fit(FitProblem(clean, env, perturbed(REFERENCE_PARAMS), max_iter=3, refine=False))
        assert not res.converged
        assert res.residual_norm >= 0

    def test_result_serializes(self, clean, env):
        d = fit(FitProblem(clean, env, REFERENCE_PARAMS)).to_dict()
        assert set(d["params"]) == {"offset_mhz", "omega_r_mhz", "gamma1_mhz", "gamma_phi_mhz"}
        assert d["converged"] is True


def test_synthetic_scan_seeds_rows_independently(env):
    chain = ChainConfig(rng_seed=1)
    a = synthetic_scan(REFERENCE_PARAMS, env, GRID, T_END, chain).matrix()
    b = synthetic_scan(REFERENCE_PARAMS, env, GRID, T_END, chain).matrix()
    np.testing.assert_array_equal(a, b)
    noise = a - synthetic_scan(REFERENCE_PARAMS, env, GRID, T_END, chain.noiseless()).matrix()
    assert abs(np.vdot(noise[0], noise[1])) < 0.2 * np.linalg.norm(noise[0]) * np.linalg.norm(noise[1])
