"""Percentile quantizer: offline calibration, online b-bit symbol assignment.

Calibration computes, per output dimension, the 2^b - 1 empirical
percentiles of a reference set at 100*k/2^b for k = 1..2^b-1 (linear
interpolation between closest ranks), bracketed by the observed min and
max. Those break-points split each axis into 2^b equal-mass buckets.

Online, a coordinate's symbol is the number of break-points strictly
below it, so values tied with a break-point fall into the lower bucket
and out-of-range values still land in [0, 2^b).

Retrieval over codes goes through ``dequantize``: each symbol maps back
to its bucket's mean reference value (midpoint for empty buckets), which
keeps cosine scoring meaningful on the reconstructed vectors.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np

from .embio import FORMAT_VERSION, QuantizedCodes
from .errors import CorruptionError, DimensionError, FormatError, ValidationError
from .linalg import as_matrix

EMBC_MAGIC = b"EMBC"
_CAL_HEADER = struct.Struct("<4sIIB")  # magic, version, dims, bits


@dataclass
class QuantizerCalibration:
    """Per-dimension break-points and bucket representatives."""

    bits: int
    breakpoints: np.ndarray  # (dims, 2^b - 1), non-decreasing per row
    bucket_reps: np.ndarray  # (dims, 2^b)
    mins: np.ndarray         # (dims,)
    maxs: np.ndarray         # (dims,)

    def __post_init__(self):
        if not 1 <= self.bits <= 8:
            raise ValidationError(f"bits must be in 1..8, got {self.bits}")
        self.breakpoints = np.asarray(self.breakpoints, dtype=np.float64)
        self.bucket_reps = np.asarray(self.bucket_reps, dtype=np.float64)
        self.mins = np.asarray(self.mins, dtype=np.float64)
        self.maxs = np.asarray(self.maxs, dtype=np.float64)
        levels = 1 << self.bits
        if self.breakpoints.shape != (self.dims, levels - 1):
            raise ValidationError("breakpoints shape does not match dims/bits")
        if self.bucket_reps.shape != (self.dims, levels):
            raise ValidationError("bucket_reps shape does not match dims/bits")
        if np.any(np.diff(self.breakpoints, axis=1) < 0):
            raise ValidationError("breakpoints must be non-decreasing per dimension")

    @property
    def dims(self) -> int:
        return self.breakpoints.shape[0]

    @property
    def levels(self) -> int:
        return 1 << self.bits


def calibrate(reference, bits: int) -> QuantizerCalibration:
    """Fit per-dimension percentile break-points on a reference matrix.

    Percentiles use linear interpolation between closest ranks
    (position (S-1)*q/100). Bucket representatives are the mean of the
    reference values landing in each bucket; empty buckets fall back to
    the bucket interval midpoint.
    """
    ref = np.asarray(as_matrix(reference), dtype=np.float64)
    if not 1 <= bits <= 8:
        raise ValidationError(f"bits must be in 1..8, got {bits}")
    levels = 1 << bits
    rows, dims = ref.shape
    if rows < levels:
        raise ValidationError(
            f"reference has {rows} rows; need at least 2^bits = {levels}"
        )
    if not np.all(np.isfinite(ref)):
        raise ValidationError("reference contains non-finite values")

    qs = 100.0 * np.arange(1, levels) / levels
    breakpoints = np.percentile(ref, qs, axis=0, method="linear").T  # (dims, levels-1)
    mins = ref.min(axis=0)
    maxs = ref.max(axis=0)

    # Bucket edges for midpoints of empty buckets: [min, t_1, ..., t_{L-1}, max].
    edges = np.concatenate([mins[:, None], breakpoints, maxs[:, None]], axis=1)
    midpoints = 0.5 * (edges[:, :-1] + edges[:, 1:])

    symbols = _assign_symbols(ref, breakpoints)
    bucket_reps = midpoints.copy()
    for j in range(dims):
        counts = np.bincount(symbols[:, j], minlength=levels)
        sums = np.bincount(symbols[:, j], weights=ref[:, j], minlength=levels)
        filled = counts > 0
        bucket_reps[j, filled] = sums[filled] / counts[filled]

    return QuantizerCalibration(bits, breakpoints, bucket_reps, mins, maxs)


def _assign_symbols(values: np.ndarray, breakpoints: np.ndarray) -> np.ndarray:
    """Symbol = count of break-points strictly below the value, per dim."""
    rows, dims = values.shape
    out = np.empty((rows, dims), dtype=np.uint8)
    for j in range(dims):
        # searchsorted 'left' counts entries < value, matching a strict
        # greater-than indicator sum even with duplicated break-points.
        out[:, j] = np.searchsorted(breakpoints[j], values[:, j], side="left")
    return out


def quantize(cal: QuantizerCalibration, matrix) -> QuantizedCodes:
    """Map every coordinate to its b-bit symbol."""
    m = np.asarray(as_matrix(matrix), dtype=np.float64)
    if m.shape[1] != cal.dims:
        raise DimensionError(
            f"matrix has {m.shape[1]} dims, calibration expects {cal.dims}"
        )
    return QuantizedCodes(bits=cal.bits, symbols=_assign_symbols(m, cal.breakpoints))


def dequantize(cal: QuantizerCalibration, codes: QuantizedCodes) -> np.ndarray:
    """Reconstruct a float32 matrix of bucket representatives."""
    if codes.dims != cal.dims:
        raise DimensionError(
            f"codes have {codes.dims} dims, calibration expects {cal.dims}"
        )
    if codes.bits != cal.bits:
        raise DimensionError(
            f"codes use {codes.bits} bits, calibration expects {cal.bits}"
        )
    if codes.symbols.size and int(codes.symbols.max()) >= cal.levels:
        raise CorruptionError("symbol out of range for calibration bit width")
    cols = np.arange(cal.dims)[None, :]
    return cal.bucket_reps[cols, codes.symbols].astype(np.float32)


def write_calibration(cal: QuantizerCalibration, path) -> None:
    """EMBC layout: header, then per dimension min, max, break-points,
    representatives, all little-endian float32."""
    with open(path, "wb") as f:
        f.write(_CAL_HEADER.pack(EMBC_MAGIC, FORMAT_VERSION, cal.dims, cal.bits))
        per_dim = np.concatenate(
            [cal.mins[:, None], cal.maxs[:, None], cal.breakpoints, cal.bucket_reps],
            axis=1,
        )
        f.write(np.ascontiguousarray(per_dim, dtype="<f4").tobytes())


def read_calibration(path) -> QuantizerCalibration:
    with open(path, "rb") as f:
        raw = f.read()
    if len(raw) < _CAL_HEADER.size:
        raise CorruptionError(f"{path}: shorter than the calibration header")
    magic, version, dims, bits = _CAL_HEADER.unpack_from(raw)
    if magic != EMBC_MAGIC:
        raise FormatError(f"{path}: bad magic {magic!r}, expected {EMBC_MAGIC!r}")
    if version != FORMAT_VERSION:
        raise FormatError(f"{path}: unsupported version {version}")
    if not 1 <= bits <= 8:
        raise FormatError(f"{path}: bits must be in 1..8, got {bits}")
    levels = 1 << bits
    per_dim_vals = 2 + (levels - 1) + levels
    expected = _CAL_HEADER.size + 4 * dims * per_dim_vals
    if len(raw) != expected:
        raise CorruptionError(f"{path}: {len(raw)} bytes, {expected} expected")
    table = np.frombuffer(raw, dtype="<f4", offset=_CAL_HEADER.size)
    table = table.reshape(dims, per_dim_vals).astype(np.float64)
    mins = table[:, 0]
    maxs = table[:, 1]
    breakpoints = table[:, 2:2 + levels - 1]
    bucket_reps = table[:, 2 + levels - 1:]
    return QuantizerCalibration(bits, breakpoints, bucket_reps, mins, maxs)
