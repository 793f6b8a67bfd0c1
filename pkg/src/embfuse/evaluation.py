"""Brute-force top-k retrieval and nDCG@k scoring against qrels.

Every document is scored for every query (no index structures); ties are
broken by ascending doc id so runs are byte-stable across schedules. DCG
uses linear gains (rel / log2(rank + 1)) to match the trec_eval
convention; exponential gains are available behind a flag for
cross-checks. Queries with no relevant documents are excluded from the
mean rather than scored zero.
"""

from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from math import log2

import numpy as np

from . import decoder as _decoder
from . import lsh as _lsh
from . import quantizer as _quantizer
from .embio import Qrels, RunEntry, RunFile
from .errors import DimensionError, EmbfuseError, ValidationError
from .linalg import as_matrix, cosine_matrix, l2_normalize_rows, truncate


@dataclass
class RetrievalTask:
    query_ids: list[str]
    queries: np.ndarray
    doc_ids: list[str]
    docs: np.ndarray
    qrels: Qrels
    k: int = 10

    def __post_init__(self):
        self.queries = as_matrix(self.queries)
        self.docs = as_matrix(self.docs)
        if len(self.query_ids) != self.queries.shape[0]:
            raise ValidationError("query id count does not match query rows")
        if len(self.doc_ids) != self.docs.shape[0]:
            raise ValidationError("doc id count does not match doc rows")
        if len(set(self.query_ids)) != len(self.query_ids):
            raise ValidationError("query ids must be unique")
        if len(set(self.doc_ids)) != len(self.doc_ids):
            raise ValidationError("doc ids must be unique")
        if self.k < 1:
            raise ValidationError(f"cutoff k must be >= 1, got {self.k}")


@dataclass
class EvalReport:
    label: str
    k: int
    per_query: dict[str, float]
    mean: float
    run: RunFile | None = None  # ranked output backing the scores, when available


def cosine_scores(query_rows, doc_rows) -> np.ndarray:
    """Default scorer: pairwise cosine similarity matrix."""
    return cosine_matrix(query_rows, doc_rows)


def _query_slice(rep, i):
    if isinstance(rep, _lsh.BitCodes):
        return _lsh.BitCodes(d_proj=rep.d_proj, packed=rep.packed[i:i + 1])
    return rep[i:i + 1]


def search(task: RetrievalTask, scorer=None, tag: str = "embfuse",
           threads: int | None = None, queries_rep=None, docs_rep=None) -> RunFile:
    """Score all docs per query and keep the top k by descending score.

    Queries are independent, so scoring may fan out over a thread pool
    (``threads`` > 1, or the EMBFUSE_THREADS env var); output is assembled
    in query order and identical for any schedule. `queries_rep`/`docs_rep`
    override the task matrices when retrieval runs over a transformed
    representation (e.g. bit codes with a Hamming scorer).
    """
    scorer = scorer or cosine_scores
    q_rep = task.queries if queries_rep is None else queries_rep
    d_rep = task.docs if docs_rep is None else docs_rep
    n_docs = len(task.doc_ids)
    if n_docs == 0:
        raise ValidationError("cannot search an empty document set")
    if threads is None:
        threads = int(os.environ.get("EMBFUSE_THREADS", "1"))
    if threads < 1:
        raise ValidationError(f"thread count must be >= 1, got {threads}")

    doc_id_arr = np.array(task.doc_ids)
    k = min(task.k, n_docs)

    def score_one(i: int) -> np.ndarray:
        try:
            scores = np.asarray(scorer(_query_slice(q_rep, i), d_rep)).ravel()
        except EmbfuseError as exc:
            raise type(exc)(f"query {task.query_ids[i]}: {exc}") from exc
        if scores.shape != (n_docs,):
            raise ValidationError(
                f"scorer returned {scores.shape}, expected ({n_docs},)"
            )
        return scores

    if threads == 1:
        per_query_scores = [score_one(i) for i in range(len(task.query_ids))]
    else:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            per_query_scores = list(pool.map(score_one, range(len(task.query_ids))))

    entries: list[RunEntry] = []
    for qid, scores in zip(task.query_ids, per_query_scores):
        order = np.lexsort((doc_id_arr, -scores))[:k]
        for rank, di in enumerate(order, start=1):
            entries.append(RunEntry(qid, task.doc_ids[di], rank, float(scores[di]), tag))
    return RunFile(entries)


def _dcg(gains, k: int, exponential: bool) -> float:
    total = 0.0
    for i, rel in enumerate(gains[:k], start=1):
        gain = (2.0 ** rel - 1.0) if exponential else float(rel)
        total += gain / log2(i + 1)
    return total


def ndcg_at_k(run: RunFile, qrels: Qrels, k: int, exponential: bool = False,
              label: str = "") -> EvalReport:
    """Per-query and mean nDCG@k for a run against relevance judgments."""
    if k < 1:
        raise ValidationError(f"cutoff k must be >= 1, got {k}")
    if not qrels.entries:
        raise ValidationError("qrels are empty")
    judged = qrels.by_query()
    per_query: dict[str, float] = {}
    for qid, entries in run.by_query().items():
        if qid not in judged:
            raise ValidationError(f"run query {qid} has no qrels entry")
        rels = judged[qid]
        ideal = sorted(rels.values(), reverse=True)
        if not ideal or ideal[0] == 0:
            continue  # no relevant docs: excluded from the mean
        gains = [rels.get(e.doc_id, 0) for e in entries]
        idcg = _dcg(ideal, k, exponential)
        per_query[qid] = _dcg(gains, k, exponential) / idcg
    if not per_query:
        raise ValidationError("no run query has relevant judgments")
    mean = sum(per_query.values()) / len(per_query)
    return EvalReport(label=label, k=k, per_query=per_query, mean=mean)


# --- representation transforms -------------------------------------------

@dataclass(frozen=True)
class Raw:
    label: str = "raw"

    def apply(self, matrix):
        return matrix


@dataclass(frozen=True)
class Truncated:
    k: int

    @property
    def label(self) -> str:
        return f"truncate[:{self.k}]"

    def apply(self, matrix):
        return truncate(matrix, self.k)


@dataclass(frozen=True)
class Decoder:
    model: _decoder.DecoderModel
    stop: int | None = None
    normalize: bool = True

    @property
    def label(self) -> str:
        stop = self.stop if self.stop is not None else self.model.d_out
        return f"decoder[:{stop}]"

    def apply(self, matrix):
        if self.stop is not None and not 1 <= self.stop <= self.model.d_out:
            raise DimensionError(
                f"stop {self.stop} out of range for decoder output width {self.model.d_out}"
            )
        m = l2_normalize_rows(matrix) if self.normalize else matrix
        decoded = _decoder.forward(self.model, m)
        if self.stop is not None and self.stop < self.model.d_out:
            decoded = truncate(decoded, self.stop)
        return decoded


@dataclass(frozen=True)
class Quantized:
    cal: _quantizer.QuantizerCalibration

    @property
    def label(self) -> str:
        return f"quantize[b={self.cal.bits}]"

    def apply(self, matrix):
        codes = _quantizer.quantize(self.cal, matrix)
        return _quantizer.dequantize(self.cal, codes)


@dataclass(frozen=True)
class Lsh:
    projector: _lsh.LshProjector

    @property
    def label(self) -> str:
        return f"lsh[{self.projector.d_proj}]"

    def apply(self, matrix):
        return _lsh.project_and_binarize(self.projector, matrix)

    @staticmethod
    def scorer(query_codes, doc_codes):
        return _lsh.hamming_similarity_matrix(query_codes, doc_codes)


def _as_chain(representation):
    if isinstance(representation, (list, tuple)):
        return list(representation)
    return [representation]


def chain_label(representation) -> str:
    return "+".join(t.label for t in _as_chain(representation))


def evaluate_pipeline(task: RetrievalTask, representation, exponential: bool = False,
                      threads: int | None = None, tag: str = "embfuse"):
    """Transform queries and docs through a representation chain, then
    search and score nDCG@k.

    `representation` is one transform or a sequence applied in order; a
    bit-code stage must be last since Hamming scoring replaces cosine.
    The report is labeled with the transform chain and carries the run.
    """
    chain = _as_chain(representation)
    if not chain:
        raise ValidationError("representation chain is empty")
    q_rep, d_rep = task.queries, task.docs
    for idx, transform in enumerate(chain):
        if isinstance(q_rep, _lsh.BitCodes):
            raise ValidationError(
                f"stage {transform.label}: bit codes must be the final stage"
            )
        try:
            q_rep = transform.apply(q_rep)
            d_rep = transform.apply(d_rep)
        except EmbfuseError as exc:
            raise type(exc)(f"stage {idx + 1} ({transform.label}): {exc}") from exc
    scorer = Lsh.scorer if isinstance(q_rep, _lsh.BitCodes) else cosine_scores
    run = search(task, scorer=scorer, tag=tag, threads=threads,
                 queries_rep=q_rep, docs_rep=d_rep)
    report = ndcg_at_k(run, task.qrels, task.k, exponential=exponential,
                       label=chain_label(chain))
    report.run = run
    return report


def write_report(report: EvalReport, path, task_name: str = "task") -> None:
    """Summary TSV: task, transform, mean_ndcg."""
    with open(path, "w", encoding="utf-8") as f:
        f.write("task\ttransform\tmean_ndcg\n")
        f.write(f"{task_name}\t{report.label}\t{report.mean:.6f}\n")


def write_per_query(report: EvalReport, path) -> None:
    with open(path, "w", encoding="utf-8") as f:
        f.write("query_id\tndcg\n")
        for qid in sorted(report.per_query):
            f.write(f"{qid}\t{report.per_query[qid]:.6f}\n")
