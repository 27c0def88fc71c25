"""Magnitude spectra of complex field traces, detuning scans and peak picking.

Frequencies are reported in MHz relative to the drive carrier. A trace
component ``exp(+i*nu*t)`` in the rotating frame corresponds to a field at
``w_d - nu``, so it shows up at ``-nu/2pi``: post-pulse emission of a qubit
detuned by ``delta`` therefore sits at ``-delta``.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np
from scipy.signal import find_peaks as _local_maxima
from scipy.signal import get_window

from .core import ModelParams, PulseEnvelope, rad_ns_to_mhz
from .correlations import default_threads
from .dynamics import integrate
from .fields import FieldTrace, radiation_field


@dataclass(frozen=True, eq=False)
class Spectrum:
    freq_mhz: np.ndarray
    magnitudes: np.ndarray

    @property
    def bin_mhz(self) -> float:
        return float(self.freq_mhz[1] - self.freq_mhz[0])


def trace_spectrum(
    trace: FieldTrace, zero_pad_factor: int = 4, window: str | None = None
) -> Spectrum:
    """``|dt * sum_k x_k exp(+2i*pi*f*t_k)|`` on the zero-padded FFT grid.

    Without padding or window, ``sum |x|^2 dt == sum |X|^2 df``.
    """
    if len(trace) == 0:
        raise ValueError("empty trace")
    if zero_pad_factor < 1:
        raise ValueError("zero_pad_factor must be >= 1")
    x = np.asarray(trace.samples, dtype=complex)
    if window is not None:
        x = x * get_window(window, x.size, fftbins=False)
    m = zero_pad_factor * x.size
    spec = trace.dt * np.fft.fft(x, n=m)
    # exp(+i w t) convention: bin f of the e^{-i} transform lands at -f
    freq = -np.fft.fftfreq(m, trace.dt) * 1e3
    order = np.argsort(freq)
    return Spectrum(freq[order], np.abs(spec[order]))


def find_peaks(spectrum: Spectrum, expected_count: int = 1, rel_height: float = 0.05):
    """Local maxima above ``rel_height * max``, strongest first, parabolically refined.

    Returns at most ``expected_count`` ``(freq_mhz, magnitude)`` pairs; fewer
    if fewer peaks qualify.
    """
    if expected_count < 1:
        raise ValueError("expected_count must be >= 1")
    mag = spectrum.magnitudes
    top = float(mag.max()) if mag.size else 0.0
    if top <= 0:
        return []
    idx, _ = _local_maxima(mag, height=rel_height * top)
    df = spectrum.bin_mhz
    peaks = []
    for i in idx:
        if 0 < i < mag.size - 1:
            a, b, c = mag[i - 1], mag[i], mag[i + 1]
            den = a - 2 * b + c
            off = 0.5 * (a - c) / den if den != 0 else 0.0
            peaks.append((spectrum.freq_mhz[i] + off * df, b - 0.25 * (a - c) * off))
        else:
            peaks.append((spectrum.freq_mhz[i], mag[i]))
    peaks.sort(key=lambda p: -p[1])
    return [(float(f), float(m)) for f, m in peaks[:expected_count]]


@dataclass(frozen=True, eq=False)
class ScanResult:
    detuning_mhz: np.ndarray
    traces: list  # FieldTrace per detuning (radiation only)
    spectra: list  # Spectrum per detuning

    @property
    def times(self) -> np.ndarray:
        return self.traces[0].times

    def row(self, detuning_mhz: float) -> int:
        return int(np.argmin(np.abs(self.detuning_mhz - detuning_mhz)))

    def matrix(self) -> np.ndarray:
        return np.stack([tr.samples for tr in self.traces])


def radiation_trace(params: ModelParams, envelope: PulseEnvelope, t_end: float, v0: float = 1.0) -> FieldTrace:
    trace = integrate(params, envelope, t_end)
    return radiation_field(trace, params.gamma1, params.field_phase, v0)


def detuning_scan(
    params: ModelParams,
    envelope: PulseEnvelope,
    detuning_mhz,
    t_end: float | None = None,
    zero_pad_factor: int = 4,
    cut_at_pulse_end: bool = False,
    threads: int | None = None,
    v0: float = 1.0,
) -> ScanResult:
    """Radiation traces and spectra for each detuning (MHz) of the grid."""
    grid = np.asarray(detuning_mhz, dtype=float).ravel()
    if grid.size == 0:
        raise ValueError("empty detuning grid")
    t_end = envelope.duration if t_end is None else t_end

    def work(d):
        try:
            p = params.with_(detuning=d * 2e-3 * math.pi)
            return radiation_trace(p, envelope, t_end, v0)
        except ValueError as exc:
            raise ValueError(f"detuning {d:g} MHz: {exc}") from exc

    threads = default_threads() if threads is None else max(1, threads)
    if threads == 1:
        traces = [work(d) for d in grid]
    else:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            traces = list(pool.map(work, grid))
    spectra = []
    for tr in traces:
        src = tr.cut(envelope.duration) if cut_at_pulse_end else tr
        spectra.append(trace_spectrum(src, zero_pad_factor))
    return ScanResult(grid, traces, spectra)


def sideband_ridges(
    scan: ScanResult,
    pulse_end: float,
    zero_pad_factor: int = 8,
    window: str = "blackman",
    exclude_mhz: float | None = None,
) -> tuple[np.ndarray, np.ndarray]:
    """Drive-period sideband positions per detuning row.

    The in-pulse segment of each radiation trace is windowed and transformed;
    the strongest peak on each side of the carrier, ignoring the constant
    offset line within ``exclude_mhz`` of 0, is returned (NaN when absent).
    ``exclude_mhz`` defaults to half the natural resolution ``1/T`` of the segment.
    """
    lower = np.full(scan.detuning_mhz.size, np.nan)
    upper = np.full(scan.detuning_mhz.size, np.nan)
    for r, tr in enumerate(scan.traces):
        seg = tr.cut(pulse_end)
        excl = exclude_mhz if exclude_mhz is not None else 0.5e3 / (seg.dt * len(seg))
        spec = trace_spectrum(seg, zero_pad_factor, window)
        for f, _ in find_peaks(spec, expected_count=16):
            if f < -excl and np.isnan(lower[r]):
                lower[r] = f
            elif f > excl and np.isnan(upper[r]):
                upper[r] = f
    return lower, upper


def emission_ridge(
    scan: ScanResult, pulse_end: float, zero_pad_factor: int = 8
) -> np.ndarray:
    """Post-pulse emission line position per detuning row (MHz)."""
    out = np.empty(scan.detuning_mhz.size)
    for r, tr in enumerate(scan.traces):
        seg = tr.cut(t_start=pulse_end)
        peaks = find_peaks(trace_spectrum(seg, zero_pad_factor), expected_count=1)
        out[r] = peaks[0][0] if peaks else np.nan
    return out


def tone(freq_mhz: float, n: int, dt: float) -> FieldTrace:
    """Unit complex tone that appears at ``freq_mhz`` in :func:`trace_spectrum`."""
    t = dt * np.arange(n)
    return FieldTrace(0.0, dt, np.exp(-2j * math.pi * freq_mhz * 1e-3 * t))


def spectral_resolution_mhz(trace: FieldTrace) -> float:
    """Natural resolution ``1/T`` of a record (before zero padding)."""
    return 1e3 / (trace.dt * len(trace))

