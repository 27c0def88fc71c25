import math

import numpy as np
import pytest
from hypothesis import settings

from wqed.core import REFERENCE_PARAMS, ModelParams, PulseEnvelope, cosine_taper

settings.register_profile("default", deadline=None, max_examples=40)
settings.load_profile("default")


def rectangle(duration: float, dt: float) -> PulseEnvelope:
    return cosine_taper(duration, 0.0, dt)


@pytest.fixture
def ref():
    return REFERENCE_PARAMS


@pytest.fixture
def ref_pulse():
    return cosine_taper(120.0, 0.02, 0.1)


@pytest.fixture
def lossless():
    """Resonant drive with vanishing decay (gamma1 must stay positive)."""
    return ModelParams(gamma1=1e-12, gamma_phi=0.0, rabi_peak=2 * math.pi * 0.0198)


def random_params(rng: np.random.Generator) -> ModelParams:
    return ModelParams.from_mhz(
        gamma1_mhz=rng.uniform(0.2, 3.0),
        gamma_phi_mhz=rng.uniform(0.0, 2.0),
        detuning_mhz=rng.uniform(-30, 30),
        omega_r_mhz=rng.uniform(1.0, 30.0),
    )


ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)
