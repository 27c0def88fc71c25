"""Pulsed coherent drive of a two-level atom in a one-dimensional waveguide.

Bloch dynamics, input-output fields, two-time correlations, spectra, an
emulated heterodyne chain and parameter estimation. Internal units are ns
and rad/ns; user-facing frequencies are MHz.
"""

__version__ = "0.1.0"

from .core import (  # noqa: E402
    MHZ,
    REFERENCE_PARAMS,
    CalibrationParams,
    ModelParams,
    PulseEnvelope,
    cosine_taper,
    mhz_to_rad_ns,
    rad_ns_to_mhz,
)
from .dynamics import BlochState, BlochTrace, integrate, steady_state  # noqa: E402
from .fields import FieldTrace, energy_audit, simulate_fields  # noqa: E402
