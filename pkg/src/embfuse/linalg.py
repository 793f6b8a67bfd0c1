"""Dense matrix/vector kernels shared by every other module.

Matrices are plain 2-D numpy arrays, row-major, one embedding per row.
Values are stored in 32-bit floats on disk; every reduction here (dot
products, norms) accumulates in 64-bit to keep 1536-dim sums stable.
"""

from __future__ import annotations

import numpy as np

from .errors import DimensionError, NormalizationError, UndefinedSimilarityError


def as_matrix(m) -> np.ndarray:
    """Validate that `m` is a 2-D numeric array and return it as ndarray."""
    a = np.asarray(m)
    if a.ndim != 2:
        raise DimensionError(f"expected a 2-D matrix, got ndim={a.ndim}")
    return a


def concat(parts) -> np.ndarray:
    """Horizontally stack matrices that share a row count.

    Row i of the result is the concatenation of row i of each part, in
    list order.
    """
    parts = [as_matrix(p) for p in parts]
    if not parts:
        raise DimensionError("concat needs at least one matrix")
    rows = parts[0].shape[0]
    for p in parts[1:]:
        if p.shape[0] != rows:
            raise DimensionError(
                f"row count mismatch: {rows} vs {p.shape[0]}"
            )
    return np.hstack(parts)


def truncate(m, k: int) -> np.ndarray:
    """Copy of the first `k` columns of `m`."""
    m = as_matrix(m)
    if not 1 <= k <= m.shape[1]:
        raise DimensionError(
            f"truncation width {k} out of range for {m.shape[1]} columns"
        )
    return m[:, :k].copy()


def row_norms(m) -> np.ndarray:
    """L2 norm of every row, accumulated in float64."""
    m = as_matrix(m).astype(np.float64, copy=False)
    return np.sqrt(np.einsum("ij,ij->i", m, m))


def l2_normalize_rows(m) -> np.ndarray:
    """Scale each row to unit L2 norm; preserves the input dtype."""
    m = as_matrix(m)
    norms = row_norms(m)
    zero = np.flatnonzero(norms == 0.0)
    if zero.size:
        raise NormalizationError(
            f"cannot normalize all-zero rows at indices {zero[:8].tolist()}"
        )
    return (m / norms[:, None].astype(m.dtype)).astype(m.dtype, copy=False)


def cosine(u, v) -> float:
    """Cosine similarity of two vectors, accumulated in float64."""
    u = np.asarray(u, dtype=np.float64).ravel()
    v = np.asarray(v, dtype=np.float64).ravel()
    if u.shape != v.shape:
        raise DimensionError(f"vector length mismatch: {u.size} vs {v.size}")
    nu = float(np.dot(u, u)) ** 0.5
    nv = float(np.dot(v, v)) ** 0.5
    if nu == 0.0 or nv == 0.0:
        raise UndefinedSimilarityError("cosine of a zero vector is undefined")
    return float(np.dot(u, v)) / (nu * nv)


def unit_rows(m) -> np.ndarray:
    """Rows of `m` scaled to unit norm, as a contiguous float64 matrix.

    Raises if any row is all-zero; callers rely on this to keep cosines
    well defined.
    """
    m = np.ascontiguousarray(as_matrix(m), dtype=np.float64)
    norms = np.sqrt(np.einsum("ij,ij->i", m, m))
    zero = np.flatnonzero(norms == 0.0)
    if zero.size:
        raise UndefinedSimilarityError(
            f"zero rows at indices {zero[:8].tolist()} have no direction"
        )
    return m / norms[:, None]


def cosine_matrix(a, b) -> np.ndarray:
    """All pairwise cosines between rows of `a` and rows of `b` (float64)."""
    a = as_matrix(a)
    b = as_matrix(b)
    if a.shape[1] != b.shape[1]:
        raise DimensionError(
            f"column mismatch: {a.shape[1]} vs {b.shape[1]}"
        )
    return unit_rows(a) @ unit_rows(b).T
