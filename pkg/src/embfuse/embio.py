"""Bit-exact file formats: EMBF matrices, EMBQ codes, TREC qrels and runs.

EMBF layout: magic ``EMBF`` | version u32 | rows u64 | dims u32 | dtype u8,
all little-endian, followed by rows*dims float32 values in row-major order.
Dtype code 0 is 32-bit IEEE-754; nothing else is accepted.

EMBQ layout: magic ``EMBQ`` | version u32 | rows u64 | dims u32 | bits u8,
followed by the b-bit symbols of each row packed most-significant-bit
first, every row padded out to a byte boundary so rows stay independently
addressable.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field

import numpy as np

from .errors import (
    CorruptionError,
    FormatError,
    ParseError,
    UnsupportedDtypeError,
    ValidationError,
)
from .linalg import as_matrix

EMBF_MAGIC = b"EMBF"
EMBQ_MAGIC = b"EMBQ"
FORMAT_VERSION = 1

_HEADER = struct.Struct("<4sIQIB")  # magic, version, rows, dims, dtype/bits


def _read_header(raw: bytes, magic: bytes, path) -> tuple[int, int, int]:
    if len(raw) < _HEADER.size:
        raise CorruptionError(f"{path}: file shorter than the {_HEADER.size}-byte header")
    got_magic, version, rows, dims, code = _HEADER.unpack_from(raw)
    if got_magic != magic:
        raise FormatError(f"{path}: bad magic {got_magic!r}, expected {magic!r}")
    if version != FORMAT_VERSION:
        raise FormatError(f"{path}: unsupported version {version}")
    if dims < 1:
        raise FormatError(f"{path}: dims must be >= 1, got {dims}")
    return rows, dims, code


def read_embeddings(path) -> np.ndarray:
    """Load an EMBF file as an (rows, dims) float32 matrix, values verbatim."""
    with open(path, "rb") as f:
        raw = f.read()
    rows, dims, dtype = _read_header(raw, EMBF_MAGIC, path)
    if dtype != 0:
        raise UnsupportedDtypeError(f"{path}: dtype code {dtype} not supported (only 0 = float32)")
    expected = rows * dims * 4
    payload = raw[_HEADER.size:]
    if len(payload) != expected:
        raise CorruptionError(
            f"{path}: payload is {len(payload)} bytes, {expected} expected for {rows}x{dims}"
        )
    return np.frombuffer(payload, dtype="<f4").reshape(rows, dims).copy()


def write_embeddings(m, path) -> None:
    """Write a matrix as EMBF; values are stored as little-endian float32."""
    m = as_matrix(m)
    if not np.all(np.isfinite(m)):
        raise ValidationError("matrix contains non-finite values; refusing to write")
    rows, dims = m.shape
    if dims == 0:
        dims = 1  # empty corpus: keep the header invariant dims >= 1
    payload = np.ascontiguousarray(m, dtype="<f4").tobytes()
    with open(path, "wb") as f:
        f.write(_HEADER.pack(EMBF_MAGIC, FORMAT_VERSION, rows, dims, 0))
        f.write(payload)


@dataclass
class QuantizedCodes:
    """Per-coordinate b-bit symbols for a matrix of embeddings."""

    bits: int
    symbols: np.ndarray  # (rows, dims) uint8, every value < 2**bits

    def __post_init__(self):
        self.symbols = np.asarray(self.symbols, dtype=np.uint8)
        if self.symbols.ndim != 2:
            raise ValidationError("symbols must be a 2-D matrix")
        if not 1 <= self.bits <= 8:
            raise ValidationError(f"bits must be in 1..8, got {self.bits}")
        if self.symbols.size and int(self.symbols.max()) >= (1 << self.bits):
            raise ValidationError(f"symbol out of range for {self.bits}-bit codes")

    @property
    def rows(self) -> int:
        return self.symbols.shape[0]

    @property
    def dims(self) -> int:
        return self.symbols.shape[1]


def row_payload_bytes(dims: int, bits: int) -> int:
    """Packed bytes per row: dims*bits bits rounded up to whole bytes."""
    return (dims * bits + 7) // 8


def pack_symbols(symbols: np.ndarray, bits: int) -> np.ndarray:
    """Pack (rows, dims) symbols into (rows, row_bytes) uint8, MSB first."""
    symbols = np.asarray(symbols, dtype=np.uint8)
    rows, dims = symbols.shape
    if symbols.size and int(symbols.max()) >= (1 << bits):
        raise ValidationError(f"symbol out of range for {bits}-bit packing")
    shifts = np.arange(bits - 1, -1, -1, dtype=np.uint8)
    bit_planes = (symbols[:, :, None] >> shifts) & 1  # (rows, dims, bits)
    flat = bit_planes.reshape(rows, dims * bits)
    pad = row_payload_bytes(dims, bits) * 8 - dims * bits
    if pad:
        flat = np.pad(flat, ((0, 0), (0, pad)))
    return np.packbits(flat.astype(np.uint8), axis=1)


def unpack_symbols(packed: np.ndarray, dims: int, bits: int) -> np.ndarray:
    """Inverse of pack_symbols; returns (rows, dims) uint8 symbols."""
    packed = np.asarray(packed, dtype=np.uint8)
    rows = packed.shape[0]
    flat = np.unpackbits(packed, axis=1)[:, : dims * bits]
    planes = flat.reshape(rows, dims, bits)
    weights = (1 << np.arange(bits - 1, -1, -1, dtype=np.uint16))
    return (planes.astype(np.uint16) @ weights).astype(np.uint8)


def read_codes(path) -> QuantizedCodes:
    """Load an EMBQ file of packed b-bit symbols."""
    with open(path, "rb") as f:
        raw = f.read()
    rows, dims, bits = _read_header(raw, EMBQ_MAGIC, path)
    if not 1 <= bits <= 8:
        raise FormatError(f"{path}: bits must be in 1..8, got {bits}")
    rb = row_payload_bytes(dims, bits)
    payload = raw[_HEADER.size:]
    if len(payload) != rows * rb:
        raise CorruptionError(
            f"{path}: payload is {len(payload)} bytes, {rows * rb} expected"
        )
    packed = np.frombuffer(payload, dtype=np.uint8).reshape(rows, rb)
    return QuantizedCodes(bits=bits, symbols=unpack_symbols(packed, dims, bits))


def write_codes(codes: QuantizedCodes, path) -> None:
    """Write quantized codes as EMBQ with per-row MSB-first bit packing."""
    packed = pack_symbols(codes.symbols, codes.bits)
    with open(path, "wb") as f:
        f.write(_HEADER.pack(EMBQ_MAGIC, FORMAT_VERSION, codes.rows, codes.dims, codes.bits))
        f.write(packed.tobytes())


@dataclass(frozen=True)
class QrelEntry:
    query_id: str
    doc_id: str
    relevance: int


@dataclass
class Qrels:
    """Relevance judgments in TREC convention: ``qid 0 docid rel``."""

    entries: list[QrelEntry] = field(default_factory=list)

    def by_query(self) -> dict[str, dict[str, int]]:
        out: dict[str, dict[str, int]] = {}
        for e in self.entries:
            out.setdefault(e.query_id, {})[e.doc_id] = e.relevance
        return out

    def query_ids(self) -> set[str]:
        return {e.query_id for e in self.entries}


def read_qrels(path) -> Qrels:
    """Parse whitespace-separated qrels; rejects duplicates and bad fields."""
    entries: list[QrelEntry] = []
    seen: set[tuple[str, str]] = set()
    with open(path, "r", encoding="utf-8") as f:
        for lineno, line in enumerate(f, start=1):
            line = line.strip()
            if not line:
                continue
            fields = line.split()
            if len(fields) != 4:
                raise ParseError(f"expected 4 fields, got {len(fields)}", line=lineno)
            qid, _, docid, rel_text = fields
            try:
                rel = int(rel_text)
            except ValueError:
                raise ParseError(f"relevance {rel_text!r} is not an integer", line=lineno)
            if rel < 0:
                raise ParseError(f"relevance must be non-negative, got {rel}", line=lineno)
            if (qid, docid) in seen:
                raise ParseError(f"duplicate judgment for ({qid}, {docid})", line=lineno)
            seen.add((qid, docid))
            entries.append(QrelEntry(qid, docid, rel))
    return Qrels(entries)


def write_qrels(qrels: Qrels, path) -> None:
    with open(path, "w", encoding="utf-8") as f:
        for e in qrels.entries:
            f.write(f"{e.query_id} 0 {e.doc_id} {e.relevance}\n")


@dataclass(frozen=True)
class RunEntry:
    query_id: str
    doc_id: str
    rank: int
    score: float
    tag: str


@dataclass
class RunFile:
    """Ranked retrieval output in TREC convention: ``qid Q0 docid rank score tag``."""

    entries: list[RunEntry] = field(default_factory=list)

    def by_query(self) -> dict[str, list[RunEntry]]:
        out: dict[str, list[RunEntry]] = {}
        for e in self.entries:
            out.setdefault(e.query_id, []).append(e)
        for qid in out:
            out[qid].sort(key=lambda e: e.rank)
        return out


def validate_run(run: RunFile) -> None:
    """Enforce 1..k contiguous ranks and non-increasing scores per query."""
    for qid, entries in run.by_query().items():
        ranks = [e.rank for e in entries]
        if ranks != list(range(1, len(ranks) + 1)):
            raise ValidationError(f"query {qid}: ranks {ranks} are not contiguous from 1")
        scores = [e.score for e in entries]
        for a, b in zip(scores, scores[1:]):
            if b > a:
                raise ValidationError(
                    f"query {qid}: score {b} at a worse rank exceeds {a}"
                )


def write_run(run: RunFile, path) -> None:
    """Serialize a validated run; scores keep 6 decimal places."""
    validate_run(run)
    with open(path, "w", encoding="utf-8") as f:
        for e in run.entries:
            f.write(f"{e.query_id} Q0 {e.doc_id} {e.rank} {e.score:.6f} {e.tag}\n")


def read_run(path) -> RunFile:
    entries: list[RunEntry] = []
    with open(path, "r", encoding="utf-8") as f:
        for lineno, line in enumerate(f, start=1):
            line = line.strip()
            if not line:
                continue
            fields = line.split()
            if len(fields) != 6:
                raise ParseError(f"expected 6 fields, got {len(fields)}", line=lineno)
            qid, _, docid, rank_text, score_text, tag = fields
            try:
                rank = int(rank_text)
                score = float(score_text)
            except ValueError:
                raise ParseError("rank or score is not numeric", line=lineno)
            entries.append(RunEntry(qid, docid, rank, score, tag))
    run = RunFile(entries)
    validate_run(run)
    return run
