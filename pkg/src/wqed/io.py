"""Delimited-text and JSON import/export for traces, grids, scans and reports.

Floats are written with ``repr`` (shortest round-trip form) so that reading
a file back and writing it again reproduces it byte for byte.
"""

from __future__ import annotations

import csv
import hashlib
import json
from pathlib import Path

import numpy as np

from .core import rad_ns_to_mhz
from .dynamics import BlochTrace
from .fields import FieldTrace
from .spectra import ScanResult, Spectrum


def _fmt(x) -> str:
    return repr(float(x))


def write_table(path, header: list[str], columns) -> Path:
    path = Path(path)
    cols = [np.asarray(c).ravel() for c in columns]
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in zip(*cols):
            w.writerow([_fmt(v) for v in row])
    return path


def read_table(path) -> tuple[list[str], np.ndarray]:
    with Path(path).open(newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise ValueError(f"{path}: empty file")
    header, body = rows[0], rows[1:]
    data = np.array([[float(v) for v in r] for r in body], dtype=float).reshape(len(body), len(header))
    return header, data


def _expect(header, expected, path):
    if header != expected:
        raise ValueError(f"{path}: expected columns {expected}, found {header}")


def write_bloch(path, trace: BlochTrace) -> Path:
    sm = trace.sigma_minus
    return write_table(
        path,
        ["t_ns", "sx", "sy", "sz", "re_sm", "im_sm"],
        [trace.times, trace.sx, trace.sy, trace.sz, sm.real, sm.imag],
    )


def read_bloch(path) -> BlochTrace:
    header, d = read_table(path)
    _expect(header, ["t_ns", "sx", "sy", "sz", "re_sm", "im_sm"], path)
    return BlochTrace(float(d[0, 0]), float(d[1, 0] - d[0, 0]), d[:, 1:4].copy())


def write_field(path, trace: FieldTrace) -> Path:
    return write_table(path, ["t_ns", "re_v", "im_v"], [trace.times, trace.samples.real, trace.samples.imag])


def read_field(path) -> FieldTrace:
    header, d = read_table(path)
    _expect(header, ["t_ns", "re_v", "im_v"], path)
    return FieldTrace(float(d[0, 0]), float(d[1, 0] - d[0, 0]), d[:, 1] + 1j * d[:, 2])


def write_spectrum(path, spec: Spectrum) -> Path:
    return write_table(path, ["freq_mhz", "magnitude"], [spec.freq_mhz, spec.magnitudes])


def write_scan_time(path, scan: ScanResult) -> Path:
    t = scan.times
    det = np.repeat(scan.detuning_mhz, t.size)
    tt = np.tile(t, scan.detuning_mhz.size)
    m = scan.matrix().ravel()
    return write_table(path, ["detuning_mhz", "t_ns", "re_v", "im_v"], [det, tt, m.real, m.imag])


def write_scan_spectra(path, scan: ScanResult) -> Path:
    f = scan.spectra[0].freq_mhz
    det = np.repeat(scan.detuning_mhz, f.size)
    ff = np.tile(f, scan.detuning_mhz.size)
    mags = np.concatenate([s.magnitudes for s in scan.spectra])
    return write_table(path, ["detuning_mhz", "freq_mhz", "magnitude"], [det, ff, mags])


def read_scan_time(path) -> ScanResult:
    header, d = read_table(path)
    _expect(header, ["detuning_mhz", "t_ns", "re_v", "im_v"], path)
    dets, idx = np.unique(d[:, 0], return_index=True)
    dets = d[np.sort(idx), 0]
    traces = []
    for det in dets:
        rows = d[d[:, 0] == det]
        traces.append(FieldTrace(float(rows[0, 1]), float(rows[1, 1] - rows[0, 1]), rows[:, 2] + 1j * rows[:, 3]))
    if len({len(t) for t in traces}) != 1:
        raise ValueError(f"{path}: detuning rows have different lengths")
    return ScanResult(np.asarray(dets), traces, [])


def write_g1_long(path, grid) -> Path:
    t = grid.t_grid
    n = t.size
    return write_table(
        path,
        ["t1_ns", "t2_ns", "re_g", "im_g"],
        [np.repeat(t, n), np.tile(t, n), grid.values.real.ravel(), grid.values.imag.ravel()],
    )


def write_g1_matrix(path, grid, part: str = "real") -> Path:
    """Compact form: first row holds t2, first column t1; ``part`` is 'real' or 'imag'."""
    vals = grid.values.real if part == "real" else grid.values.imag
    path = Path(path)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["t1_ns\\t2_ns"] + [_fmt(v) for v in grid.t_grid])
        for t1, row in zip(grid.t_grid, vals):
            w.writerow([_fmt(t1)] + [_fmt(v) for v in row])
    return path


def write_ipsd(path, ipsd_map) -> Path:
    nt, nf = ipsd_map.magnitudes.shape
    return write_table(
        path,
        ["t_ns", "freq_mhz", "magnitude"],
        [np.repeat(ipsd_map.t_grid, nf), np.tile(rad_ns_to_mhz(ipsd_map.omega_grid), nt), ipsd_map.magnitudes.ravel()],
    )


def write_psd(path, omega, psd) -> Path:
    return write_table(path, ["freq_mhz", "magnitude"], [rad_ns_to_mhz(np.asarray(omega)), psd])


def write_json(path, obj) -> Path:
    path = Path(path)
    path.write_text(json.dumps(_plain(obj), indent=2, sort_keys=True) + "\n")
    return path


def _plain(obj):
    if isinstance(obj, dict):
        return {str(k): _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _plain(obj.tolist())
    if isinstance(obj, np.generic):
        return obj.item()
    return obj


def sha256_file(path) -> str:
    h = hashlib.sha256()
    with Path(path).open("rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 16), b""):
            h.update(chunk)
    return h.hexdigest()
