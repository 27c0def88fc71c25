"""Dressed-state predictions for the sideband structure of the emitted field."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .core import rad_ns_to_mhz


def generalized_rabi(rabi: float, detuning: float) -> float:
    return math.hypot(rabi, detuning)


def sideband_amplitudes(rabi: float, detuning: float) -> tuple[float, float]:
    """Signed amplitudes of the lines at ``w_d - W`` and ``w_d + W``.

    ``(-rabi*(W + delta)/(4 W^2), rabi*(W - delta)/(4 W^2))`` with
    ``W = sqrt(rabi^2 + delta^2)``.
    """
    if rabi == 0 and detuning == 0:
        raise ValueError("sideband amplitudes are undefined without drive and detuning")
    w = generalized_rabi(rabi, detuning)
    return -rabi * (w + detuning) / (4 * w * w), rabi * (w - detuning) / (4 * w * w)


@dataclass(frozen=True)
class DressedPrediction:
    omega_gen: float
    coeff_plus: tuple[float, float]
    coeff_minus: tuple[float, float]
    amp_lower: float
    amp_upper: float


def dressed_prediction(rabi: float, detuning: float) -> DressedPrediction:
    """Hybridized basis of ``|g,n+1>`` and ``|e,n>`` plus sideband amplitudes.

    ``coeff_plus`` holds the ``(|g,n+1>, |e,n>)`` amplitudes of ``|+n>``.
    """
    lower, upper = sideband_amplitudes(rabi, detuning)
    w = generalized_rabi(rabi, detuning)
    a = math.sqrt((w + detuning) / (2 * w))
    b = math.sqrt(max(w - detuning, 0.0) / (2 * w))
    return DressedPrediction(w, (a, b), (b, -a), lower, upper)


def detuning_table(rabi: float, detunings) -> np.ndarray:
    """Rows of ``(detuning_mhz, omega_mhz, amp_lower, amp_upper)``."""
    rows = []
    for d in np.asarray(detunings, dtype=float):
        lo, up = sideband_amplitudes(rabi, d)
        rows.append((rad_ns_to_mhz(d), rad_ns_to_mhz(generalized_rabi(rabi, d)), lo, up))
    return np.array(rows)
