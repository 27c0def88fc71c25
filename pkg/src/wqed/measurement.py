"""Heterodyne measurement-chain emulator: noise, shot averaging, IF stage, low-pass."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.signal import fftconvolve, firwin

from .fields import FieldTrace

#: Per-shot SNR of a single emitted photon quoted for the setup.
SINGLE_SHOT_SNR_DB = -40.0
#: Shots averaged per voltage trace.
N_AVG_TRACES = 17_000_000


@dataclass(frozen=True)
class ChainConfig:
    """Measurement-chain settings.

    ``snr_db=None`` disables noise, ``if_freq=0`` disables the IF stage and
    ``lpf_cutoff=None`` bypasses the low-pass filter. ``reference_power``
    overrides the signal power the SNR refers to (default: peak power of the
    clean trace, i.e. the qubit emission when fed a radiation trace).
    """

    snr_db: float | None = SINGLE_SHOT_SNR_DB
    n_avg: int = N_AVG_TRACES
    lpf_cutoff: float | None = 50.0  # MHz
    if_freq: float = 0.0  # MHz
    rng_seed: int = 0
    reference_power: float | None = None
    min_taps: int = 201
    explicit_shots: bool = False

    def __post_init__(self):
        if int(self.n_avg) != self.n_avg or self.n_avg < 1:
            raise ValueError("n_avg must be an integer >= 1")
        if self.lpf_cutoff is not None and not self.lpf_cutoff > 0:
            raise ValueError("lpf_cutoff must be positive")
        if self.if_freq < 0:
            raise ValueError("if_freq must be non-negative")
        if self.explicit_shots and self.n_avg > 10_000:
            raise ValueError("explicit_shots is limited to n_avg <= 1e4")

    @property
    def net_snr_db(self) -> float:
        return self.snr_db + 10 * math.log10(self.n_avg)

    def noiseless(self) -> "ChainConfig":
        return ChainConfig(None, 1, self.lpf_cutoff, self.if_freq, self.rng_seed, None, self.min_taps)


def fir_taps(cutoff_mhz: float, dt_ns: float, min_taps: int = 201) -> np.ndarray:
    """Hamming-windowed sinc low-pass with unit DC gain.

    The length is at least ``min_taps`` and is raised (odd) until the kernel
    spans sixteen periods of the cutoff; on a 0.1 ns grid a 201-tap kernel
    would be far shorter than one period of a 50 MHz cutoff.
    """
    fs = 1e3 / dt_ns  # MHz
    nyq = 0.5 * fs
    if cutoff_mhz >= nyq:
        raise ValueError(f"cutoff {cutoff_mhz} MHz is not below the Nyquist frequency {nyq:g} MHz")
    n = max(min_taps, int(math.ceil(16 * fs / cutoff_mhz)))
    n += 1 - n % 2
    return firwin(n, cutoff_mhz, fs=fs)


def lowpass(x: np.ndarray, cutoff_mhz: float, dt_ns: float, min_taps: int = 201) -> np.ndarray:
    """Zero-phase application of :func:`fir_taps` with edge reflection."""
    h = fir_taps(cutoff_mhz, dt_ns, min_taps)
    half = h.size // 2
    padded = np.pad(x, half, mode="reflect")
    return fftconvolve(padded, h, mode="valid")


def _rng(seed: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(key=seed))


def complex_noise(rng: np.random.Generator, n: int, variance: float, shots: int = 1) -> np.ndarray:
    """Circular complex Gaussian noise, ``E|z|^2 = variance``; averaged over ``shots`` draws."""
    sigma = math.sqrt(variance / 2.0)
    if shots == 1:
        return sigma * (rng.standard_normal(n) + 1j * rng.standard_normal(n))
    acc = np.zeros(n, dtype=complex)
    for _ in range(shots):
        acc += rng.standard_normal(n) + 1j * rng.standard_normal(n)
    return sigma * acc / shots


def noise_variance(config: ChainConfig, reference_power: float) -> float:
    """Noise variance left after averaging: ``P_ref * 10^(-snr/10) / n_avg``."""
    if config.snr_db is None:
        return 0.0
    return reference_power * 10 ** (-config.snr_db / 10) / config.n_avg


def apply_chain(clean: FieldTrace, config: ChainConfig) -> FieldTrace:
    """Pass a clean trace through the emulated heterodyne chain."""
    x = np.asarray(clean.samples, dtype=complex)
    if x.size == 0:
        raise ValueError("empty trace")
    if config.lpf_cutoff is not None:
        # validate before doing any work
        fir_taps(config.lpf_cutoff, clean.dt, config.min_taps)
    t = clean.times

    if config.if_freq > 0:
        w_if = 2 * math.pi * config.if_freq * 1e-3
        carrier = np.exp(1j * w_if * t)
        passband = (x * carrier).real  # real digitizer record at the IF
        x = 2.0 * passband * carrier.conj()  # image at -2*IF is left for the filter

    # noise is referred to baseband, after demodulation
    if config.snr_db is not None:
        p_ref = config.reference_power
        if p_ref is None:
            p_ref = float(np.max(np.abs(clean.samples) ** 2))
        rng = _rng(config.rng_seed)
        if config.explicit_shots:
            var = noise_variance(config, p_ref) * config.n_avg
            x = x + complex_noise(rng, x.size, var, config.n_avg)
        else:
            x = x + complex_noise(rng, x.size, noise_variance(config, p_ref))

    if config.lpf_cutoff is not None:
        x = lowpass(x, config.lpf_cutoff, clean.dt, config.min_taps)
    return FieldTrace(clean.t0, clean.dt, x)


def measured_snr_db(noisy: np.ndarray, clean: np.ndarray, reference_power: float | None = None) -> float:
    """SNR of a measured record against its clean counterpart."""
    resid = np.asarray(noisy) - np.asarray(clean)
    p_ref = float(np.max(np.abs(clean) ** 2)) if reference_power is None else reference_power
    return 10 * math.log10(p_ref / float(np.mean(np.abs(resid) ** 2)))
