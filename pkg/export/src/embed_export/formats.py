"""Writers for the embedding-toolkit file formats this package emits.

EMBF layout (little-endian): magic ``EMBF`` | version u32 | rows u64 |
dims u32 | dtype u8 (0 = float32), then rows*dims float32 values in
row-major order. Implemented here from the format contract on purpose:
the consuming toolkit's reader then serves as an independent check of
every file we write.
"""

from __future__ import annotations

import struct

import numpy as np

_EMBF_HEADER = struct.Struct("<4sIQIB")


class ExportError(Exception):
    """Any condition that must abort an export."""


def write_embf(matrix: np.ndarray, path) -> None:
    matrix = np.asarray(matrix)
    if matrix.ndim != 2:
        raise ExportError(f"embedding matrix must be 2-D, got ndim={matrix.ndim}")
    if not np.all(np.isfinite(matrix)):
        raise ExportError("embedding matrix contains non-finite values")
    rows, dims = matrix.shape
    with open(path, "wb") as f:
        f.write(_EMBF_HEADER.pack(b"EMBF", 1, rows, max(dims, 1), 0))
        f.write(np.ascontiguousarray(matrix, dtype="<f4").tobytes())


def write_qrels(entries, path) -> None:
    """TREC text convention: ``qid 0 docid rel`` per judged pair."""
    with open(path, "w", encoding="utf-8") as f:
        for qid, docid, rel in entries:
            f.write(f"{qid} 0 {docid} {int(rel)}\n")


def write_ids(ids, path) -> None:
    with open(path, "w", encoding="utf-8") as f:
        for item in ids:
            f.write(f"{item}\n")
