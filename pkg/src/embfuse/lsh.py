"""Random-projection LSH baseline: sign codes plus Hamming-based scoring.

Rows are projected through a seeded Gaussian matrix (entries scaled by
1/sqrt(d_proj)) and binarized at zero with a strict greater-than, so a
zero projection maps to bit 0. Similarity between codes is the standard
sign-hash cosine estimator cos(pi * hamming / d_proj), which keeps LSH
scores comparable with cosine runs in the shared evaluation harness.

The projection matrix is regenerated from (d_in, d_proj, seed) rather
than persisted; the descriptor file stores just those three values.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np

from .embio import QuantizedCodes, pack_symbols, row_payload_bytes, unpack_symbols
from .errors import CorruptionError, DimensionError, FormatError, ValidationError
from .linalg import as_matrix

EMBL_MAGIC = b"EMBL"
_PROJ_HEADER = struct.Struct("<4sIIQ")  # magic, d_in, d_proj, seed


@dataclass(frozen=True)
class LshProjector:
    d_in: int
    d_proj: int
    seed: int

    def __post_init__(self):
        if self.d_in < 1 or self.d_proj < 1:
            raise ValidationError("projector dims must be positive")

    def projection_matrix(self) -> np.ndarray:
        """(d_proj, d_in) Gaussian matrix, bit-reproducible from the seed."""
        rng = np.random.default_rng(self.seed)
        return rng.standard_normal((self.d_proj, self.d_in)) / np.sqrt(self.d_proj)


@dataclass
class BitCodes:
    """Sign bits of projected rows, packed MSB-first per row."""

    d_proj: int
    packed: np.ndarray  # (rows, ceil(d_proj / 8)) uint8

    def __post_init__(self):
        self.packed = np.asarray(self.packed, dtype=np.uint8)
        if self.packed.ndim != 2 or self.packed.shape[1] != row_payload_bytes(self.d_proj, 1):
            raise ValidationError("packed shape does not match d_proj")

    @property
    def rows(self) -> int:
        return self.packed.shape[0]

    def to_codes(self) -> QuantizedCodes:
        """View as 1-bit quantized codes for EMBQ persistence."""
        return QuantizedCodes(bits=1, symbols=unpack_symbols(self.packed, self.d_proj, 1))

    @classmethod
    def from_codes(cls, codes: QuantizedCodes) -> "BitCodes":
        if codes.bits != 1:
            raise ValidationError(f"bit codes need bits=1, got {codes.bits}")
        return cls(d_proj=codes.dims, packed=pack_symbols(codes.symbols, 1))


def project_and_binarize(projector: LshProjector, matrix) -> BitCodes:
    """bit(i, j) = [projected coordinate j of row i > 0]."""
    m = np.asarray(as_matrix(matrix), dtype=np.float64)
    if m.shape[1] != projector.d_in:
        raise DimensionError(
            f"matrix has {m.shape[1]} dims, projector expects {projector.d_in}"
        )
    projected = m @ projector.projection_matrix().T
    bits = (projected > 0.0).astype(np.uint8)
    return BitCodes(d_proj=projector.d_proj, packed=pack_symbols(bits, 1))


def hamming_distance_matrix(queries: BitCodes, docs: BitCodes) -> np.ndarray:
    """Pairwise Hamming distances between query and doc codes."""
    if queries.d_proj != docs.d_proj:
        raise DimensionError(
            f"code lengths differ: {queries.d_proj} vs {docs.d_proj}"
        )
    out = np.empty((queries.rows, docs.rows), dtype=np.int64)
    for i in range(queries.rows):
        out[i] = np.bitwise_count(docs.packed ^ queries.packed[i]).sum(axis=1)
    return out


def hamming_similarity(a, b, d_proj: int | None = None) -> float:
    """Cosine estimate cos(pi * hamming(a, b) / d_proj) for two bit rows.

    Accepts unpacked 0/1 vectors (d_proj inferred from the length) or
    packed uint8 rows with an explicit d_proj.
    """
    a = np.asarray(a, dtype=np.uint8).ravel()
    b = np.asarray(b, dtype=np.uint8).ravel()
    if a.shape != b.shape:
        raise DimensionError(f"code length mismatch: {a.size} vs {b.size}")
    if d_proj is None:
        d_proj = a.size  # unpacked form
        dist = int(np.count_nonzero(a != b))
    else:
        dist = int(np.bitwise_count(a ^ b).sum())
    return float(np.cos(np.pi * dist / d_proj))


def hamming_similarity_matrix(queries: BitCodes, docs: BitCodes) -> np.ndarray:
    """Pairwise cosine estimates from Hamming distances."""
    dist = hamming_distance_matrix(queries, docs)
    return np.cos(np.pi * dist / queries.d_proj)


def compression_factor(d_in: int, float_bits: int, d_proj: int) -> float:
    """Storage ratio (d_in * float_bits) / d_proj of raw floats vs sign bits."""
    if d_in < 1 or float_bits < 1 or d_proj < 1:
        raise ValidationError("compression_factor needs positive arguments")
    return (d_in * float_bits) / d_proj


def write_projector(projector: LshProjector, path) -> None:
    with open(path, "wb") as f:
        f.write(_PROJ_HEADER.pack(EMBL_MAGIC, projector.d_in, projector.d_proj,
                                  projector.seed))


def read_projector(path) -> LshProjector:
    with open(path, "rb") as f:
        raw = f.read()
    if len(raw) != _PROJ_HEADER.size:
        raise CorruptionError(f"{path}: expected {_PROJ_HEADER.size} bytes, got {len(raw)}")
    magic, d_in, d_proj, seed = _PROJ_HEADER.unpack(raw)
    if magic != EMBL_MAGIC:
        raise FormatError(f"{path}: bad magic {magic!r}, expected {EMBL_MAGIC!r}")
    return LshProjector(d_in=d_in, d_proj=d_proj, seed=seed)
