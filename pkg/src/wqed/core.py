"""Parameter records, pulse envelopes and photon-number calibration.

All rates are stored as angular quantities in rad/ns and times in ns.
Ordinary frequencies (MHz) only appear at the I/O boundary and are
converted with :func:`mhz_to_rad_ns` / :func:`rad_ns_to_mhz`.
"""

from __future__ import annotations

import configparser
import math
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

TWO_PI = 2.0 * math.pi

#: (rad/ns) per MHz
MHZ = TWO_PI * 1e-3


def mhz_to_rad_ns(f_mhz: float) -> float:
    return f_mhz * MHZ


def rad_ns_to_mhz(w: float) -> float:
    return w / MHZ


@dataclass(frozen=True)
class ModelParams:
    """Two-level atom and drive parameters (angular units, rad/ns)."""

    gamma1: float
    gamma_phi: float = 0.0
    detuning: float = 0.0
    rabi_peak: float = 0.0
    field_phase: float = math.pi / 2
    qubit_frequency: float = 0.0  # GHz, bookkeeping only

    def __post_init__(self):
        if not self.gamma1 > 0:
            raise ValueError(f"gamma1 must be positive, got {self.gamma1}")
        if self.gamma_phi < 0:
            raise ValueError(f"gamma_phi must be non-negative, got {self.gamma_phi}")
        if self.rabi_peak < 0:
            raise ValueError(f"rabi_peak must be non-negative, got {self.rabi_peak}")
        for name in ("gamma1", "gamma_phi", "detuning", "rabi_peak", "field_phase"):
            if not math.isfinite(getattr(self, name)):
                raise ValueError(f"{name} must be finite")

    @property
    def gamma2(self) -> float:
        return 0.5 * self.gamma1 + self.gamma_phi

    @property
    def alpha_peak(self) -> float:
        """Drive amplitude sqrt(photons/ns) at the envelope maximum."""
        return self.rabi_peak / math.sqrt(2.0 * self.gamma1)

    def with_(self, **changes) -> "ModelParams":
        return replace(self, **changes)

    @classmethod
    def from_mhz(
        cls,
        gamma1_mhz: float,
        gamma_phi_mhz: float = 0.0,
        detuning_mhz: float = 0.0,
        omega_r_mhz: float = 0.0,
        field_phase: float = math.pi / 2,
        qubit_frequency: float = 0.0,
    ) -> "ModelParams":
        return cls(
            gamma1=mhz_to_rad_ns(gamma1_mhz),
            gamma_phi=mhz_to_rad_ns(gamma_phi_mhz),
            detuning=mhz_to_rad_ns(detuning_mhz),
            rabi_peak=mhz_to_rad_ns(omega_r_mhz),
            field_phase=field_phase,
            qubit_frequency=qubit_frequency,
        )

    def to_mhz(self) -> dict:
        return {
            "omega_r_mhz": rad_ns_to_mhz(self.rabi_peak),
            "gamma1_mhz": rad_ns_to_mhz(self.gamma1),
            "gamma_phi_mhz": rad_ns_to_mhz(self.gamma_phi),
            "detuning_mhz": rad_ns_to_mhz(self.detuning),
            "field_phase": self.field_phase,
            "qubit_frequency_ghz": self.qubit_frequency,
        }


#: Fitted values quoted for the 120 ns detuning scan.
REFERENCE_PARAMS = ModelParams.from_mhz(
    gamma1_mhz=0.9, gamma_phi_mhz=0.6, detuning_mhz=0.0, omega_r_mhz=19.8,
    qubit_frequency=4.835,
)


@dataclass(frozen=True, eq=False)
class PulseEnvelope:
    """Normalized drive envelope sampled on ``t = k * dt``."""

    duration: float
    taper_fraction: float
    dt: float
    samples: np.ndarray = field(repr=False)

    def __post_init__(self):
        self.samples.setflags(write=False)

    @property
    def times(self) -> np.ndarray:
        return self.dt * np.arange(self.samples.size)

    def sampled(self, n: int) -> np.ndarray:
        """Envelope on an ``n``-point grid of the same ``dt``, zero after the pulse."""
        out = np.zeros(n)
        m = min(n, self.samples.size)
        out[:m] = self.samples[:m]
        return out

    def integral(self) -> float:
        return float(np.trapezoid(self.samples, dx=self.dt))


def cosine_taper(duration: float, taper_fraction: float, dt: float) -> PulseEnvelope:
    """Tukey-window pulse: raised-cosine ramps of ``taper_fraction*duration/2`` each.

    >>> env = cosine_taper(120.0, 0.02, 0.1)
    >>> env.samples.size, env.samples[600]
    (1201, 1.0)
    """
    if not duration > 0 or not dt > 0:
        raise ValueError("duration and dt must be positive")
    if not 0.0 <= taper_fraction < 1.0:
        raise ValueError(f"taper_fraction must lie in [0, 1), got {taper_fraction}")
    if dt > duration / 10:
        raise ValueError(f"dt={dt} too coarse for a {duration} ns pulse (need dt <= duration/10)")
    n = int(round(duration / dt)) + 1
    t = dt * np.arange(n)
    samples = np.ones(n)
    ramp = 0.5 * taper_fraction * duration
    if ramp > 0:
        rise = t < ramp
        samples[rise] = 0.5 * (1.0 - np.cos(math.pi * t[rise] / ramp))
        fall = t > duration - ramp
        samples[fall] = 0.5 * (1.0 - np.cos(math.pi * (duration - t[fall]) / ramp))
        samples[-1] = 0.0
    return PulseEnvelope(duration, taper_fraction, dt, samples)


@dataclass(frozen=True)
class CalibrationParams:
    """Optional physical scale for field amplitudes; defaults give V0 = 1."""

    hbar_omega: float = 1.0
    z0: float = 1.0
    gain: float = 1.0

    def __post_init__(self):
        if not (self.hbar_omega > 0 and self.z0 > 0 and self.gain > 0):
            raise ValueError("calibration constants must be positive")

    @property
    def v0(self) -> float:
        return math.sqrt(self.gain * self.hbar_omega * self.z0)


def photon_rate_from_rabi(rabi: float, gamma1: float) -> float:
    """Photon rate nu = rabi**2 / (2 gamma1) of a coherent drive."""
    if not gamma1 > 0:
        raise ValueError("gamma1 must be positive")
    return rabi * rabi / (2.0 * gamma1)


def photon_rate_from_amplitude_ratio(vp_over_vq: float, gamma1: float) -> float:
    """Photon rate from the pulse-to-radiation amplitude ratio: gamma1/8 * (Vp/Vq)**2."""
    if vp_over_vq < 0:
        raise ValueError("amplitude ratio must be non-negative")
    if not gamma1 > 0:
        raise ValueError("gamma1 must be positive")
    return gamma1 / 8.0 * vp_over_vq**2


def kappa_magnitude(hbar_omega_q: float, z0: float, gamma1: float) -> float:
    """|kappa| = sqrt(hbar*omega_q * Z0 * gamma1 / 2), the emitted-field prefactor."""
    if not (hbar_omega_q > 0 and z0 > 0 and gamma1 > 0):
        raise ValueError("kappa_magnitude needs positive arguments")
    return math.sqrt(hbar_omega_q * z0 * gamma1 / 2.0)


# configuration --------------------------------------------------------------

CONFIG_KEYS = {
    "omega_r_mhz": 19.8,
    "gamma1_mhz": 0.9,
    "gamma_phi_mhz": 0.6,
    "detuning_mhz": 0.0,
    "duration_ns": 120.0,
    "taper_fraction": 0.02,
    "dt_ns": 0.1,
    "field_phase": math.pi / 2,
}


class ConfigError(ValueError):
    """Bad or unknown configuration key."""


def parse_phase(value) -> float:
    if isinstance(value, (int, float)):
        return float(value)
    text = str(value).strip().lower().replace(" ", "")
    named = {"pi/2": math.pi / 2, "pi": math.pi, "0": 0.0}
    if text in named:
        return named[text]
    try:
        return float(text)
    except ValueError:
        raise ConfigError(f"field_phase: cannot parse {value!r}") from None


def read_config(path: str | Path, known: dict | None = None) -> dict:
    """Read a flat ``key = value`` file (``#`` comments) into a dict of floats.

    Keys not present in ``known`` (default :data:`CONFIG_KEYS`) are rejected.
    """
    known = CONFIG_KEYS if known is None else known
    parser = configparser.ConfigParser(inline_comment_prefixes=("#", ";"))
    text = Path(path).read_text()
    try:
        parser.read_string("[params]\n" + text)
    except configparser.Error as exc:
        raise ConfigError(f"{path}: {exc}") from None
    out = {}
    for key, raw in parser["params"].items():
        if key not in known:
            raise ConfigError(f"{path}: unknown key {key!r}")
        if key == "field_phase":
            out[key] = parse_phase(raw)
            continue
        try:
            out[key] = type(known[key])(float(raw)) if not isinstance(known[key], str) else raw
        except ValueError:
            raise ConfigError(f"{path}: key {key!r} has non-numeric value {raw!r}") from None
    return out


def params_from_config(cfg: dict) -> tuple[ModelParams, PulseEnvelope]:
    """Build ``(ModelParams, PulseEnvelope)`` from MHz/ns config values."""
    full = {**CONFIG_KEYS, **cfg}
    try:
        params = ModelParams.from_mhz(
            gamma1_mhz=full["gamma1_mhz"],
            gamma_phi_mhz=full["gamma_phi_mhz"],
            detuning_mhz=full["detuning_mhz"],
            omega_r_mhz=full["omega_r_mhz"],
            field_phase=parse_phase(full["field_phase"]),
        )
        env = cosine_taper(full["duration_ns"], full["taper_fraction"], full["dt_ns"])
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    return params, env
