"""Synthetic corpora and retrieval tasks for desk-scale experiments.

Three families:

* low-rank corpora, whose pairwise cosines are exactly representable in
  ``rank`` output dimensions, so a similarity-preserving decoder can be
  driven to near-zero loss;
* planted-neighbor tasks, where each query is a noisy copy of exactly one
  document, giving a known ideal ranking (mean nDCG@10 of 1.0 for clean
  cosine retrieval when the noise is small);
* complementary source families, where each "model" observes a different
  slice of a shared latent code plus independent noise, so concatenating
  more sources adds signal that survives aggressive compression.
"""

from __future__ import annotations

import numpy as np

from .embio import QrelEntry, Qrels
from .evaluation import RetrievalTask
from .linalg import concat


def low_rank_corpus(rows: int, dims: int, rank: int, seed: int = 0) -> np.ndarray:
    """Random matrix of the given rank: (rows, rank) @ (rank, dims)."""
    rng = np.random.default_rng(seed)
    factors = rng.normal(size=(rows, rank))
    basis = rng.normal(size=(rank, dims))
    return (factors @ basis).astype(np.float32)


def planted_neighbor_task(docs: np.ndarray, n_queries: int, noise: float = 0.05,
                          seed: int = 0, k: int = 10) -> RetrievalTask:
    """Queries are noisy copies of sampled docs; the source doc is the one
    relevant document per query."""
    rng = np.random.default_rng(seed)
    docs = np.asarray(docs)
    n_docs = docs.shape[0]
    chosen = rng.choice(n_docs, size=n_queries, replace=False)
    scale = np.sqrt(np.mean(docs.astype(np.float64) ** 2))
    queries = docs[chosen] + (noise * scale) * rng.normal(size=(n_queries, docs.shape[1]))
    doc_ids = [f"d{i:05d}" for i in range(n_docs)]
    query_ids = [f"q{i:05d}" for i in range(n_queries)]
    qrels = Qrels([QrelEntry(query_ids[i], doc_ids[chosen[i]], 1)
                   for i in range(n_queries)])
    return RetrievalTask(query_ids, queries.astype(np.float32), doc_ids,
                         docs.astype(np.float32), qrels, k=k)


def complementary_source_family(n_docs: int, n_queries: int, n_sources: int,
                                source_dim: int = 32, noise: float = 1.0,
                                seed: int = 0, k: int = 10):
    """Per-source doc/query matrices over a shared latent code.

    Source s observes its own slice of the latent code; query copies add
    independent per-source noise, so concatenating more sources raises the
    effective signal-to-noise ratio of the joint representation.

    Returns ``(doc_parts, query_parts, qrels, doc_ids, query_ids)`` with
    one (docs, queries) matrix pair per source.
    """
    rng = np.random.default_rng(seed)
    latent = rng.normal(size=(n_docs, n_sources * source_dim))
    chosen = rng.choice(n_docs, size=n_queries, replace=False)
    doc_parts = []
    query_parts = []
    for s in range(n_sources):
        view = latent[:, s * source_dim:(s + 1) * source_dim]
        doc_parts.append(view.astype(np.float32))
        q = view[chosen] + noise * rng.normal(size=(n_queries, source_dim))
        query_parts.append(q.astype(np.float32))
    doc_ids = [f"d{i:05d}" for i in range(n_docs)]
    query_ids = [f"q{i:05d}" for i in range(n_queries)]
    qrels = Qrels([QrelEntry(query_ids[i], doc_ids[chosen[i]], 1)
                   for i in range(n_queries)])
    return doc_parts, query_parts, qrels, doc_ids, query_ids


def family_task(doc_parts, query_parts, qrels, doc_ids, query_ids,
                n_sources: int, k: int = 10) -> RetrievalTask:
    """Concatenate the first `n_sources` sources into one retrieval task."""
    return RetrievalTask(query_ids, concat(query_parts[:n_sources]),
                         doc_ids, concat(doc_parts[:n_sources]), qrels, k=k)
