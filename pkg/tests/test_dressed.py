import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from wqed.core import mhz_to_rad_ns, rad_ns_to_mhz
from wqed.dressed import dressed_prediction, detuning_table, generalized_rabi, sideband_amplitudes

rabi_st = st.floats(1e-3, 1.0)
det_st = st.floats(-1.0, 1.0)


def test_generalized_rabi_limits():
    assert generalized_rabi(0.3, 0.0) == 0.3
    assert generalized_rabi(0.0, -0.2) == 0.2
    assert rad_ns_to_mhz(generalized_rabi(mhz_to_rad_ns(19.8), mhz_to_rad_ns(30))) == pytest.approx(35.95, abs=0.01)


def test_resonant_amplitudes():
    assert sideband_amplitudes(0.1, 0.0) == pytest.approx((-0.25, 0.25))


def test_undefined_without_drive_and_detuning():
    with pytest.raises(ValueError):
        sideband_amplitudes(0.0, 0.0)


@given(rabi=rabi_st, det=st.floats(1e-4, 1.0))
def test_asymmetry_direction(rabi, det):
    lo, up = sideband_amplitudes(rabi, det)
    assert abs(lo) > abs(up)
    lo_m, up_m = sideband_amplitudes(rabi, -det)
    assert abs(up_m) > abs(lo_m)


@given(rabi=rabi_st, det=det_st)
def test_reflection_symmetry(rabi, det):
    lo, up = sideband_amplitudes(rabi, det)
    lo_m, up_m = sideband_amplitudes(rabi, -det)
    assert abs(lo) == pytest.approx(abs(up_m), rel=1e-12)
    assert abs(up) == pytest.approx(abs(lo_m), rel=1e-12)


def test_sum_rule_random_sampling():
    rng = np.random.default_rng(2)
    for _ in range(100):
        rabi, det = rng.uniform(0.01, 1), rng.uniform(-1, 1)
        lo, up = sideband_amplitudes(rabi, det)
        w = generalized_rabi(rabi, det)
        assert lo + up == pytest.approx(-rabi * det / (2 * w * w), rel=1e-9, abs=1e-15)


def test_large_detuning_cubic_decay():
    rabi = 0.1
    dets = rabi * np.geomspace(10, 1000, 5)
    ups = np.array([abs(sideband_amplitudes(rabi, d)[1]) for d in dets])
    slope = np.polyfit(np.log(dets), np.log(ups), 1)[0]
    assert slope == pytest.approx(-3.0, abs=0.01)
    assert ups[-1] == pytest.approx(rabi**3 / (8 * dets[-1] ** 3), rel=1e-3)


@given(rabi=rabi_st, det=det_st)
def test_dressed_basis(rabi, det):
    pred = dressed_prediction(rabi, det)
    w = pred.omega_gen
    a, b = pred.coeff_plus
    assert a * a + b * b == pytest.approx(1.0)
    assert (w + det) / (2 * w) + (w - det) / (2 * w) == pytest.approx(1.0, abs=1e-15)
    assert np.dot(pred.coeff_plus, pred.coeff_minus) == pytest.approx(0.0, abs=1e-12)
    # |g,n+1>, |e,n> block in the drive frame
    block = np.array([[0.0, rabi / 2], [rabi / 2, -det]])
    np.testing.assert_allclose(block @ pred.coeff_plus, 0.5 * (w - det) * np.array(pred.coeff_plus), atol=1e-12)
    np.testing.assert_allclose(block @ pred.coeff_minus, -0.5 * (w + det) * np.array(pred.coeff_minus), atol=1e-12)


def test_detuning_table():
    tab = detuning_table(mhz_to_rad_ns(19.8), mhz_to_rad_ns(np.array([-30.0, 0.0, 30.0])))
    assert tab.shape == (3, 4)
    np.testing.assert_allclose(tab[:, 0], [-30, 0, 30])
    assert tab[0, 1] == pytest.approx(35.95, abs=0.01)
    assert tab[1, 2:].tolist() == pytest.approx([-0.25, 0.25])
