"""BEIR-style dataset exports.

Reads a locally mirrored dataset directory in the BEIR layout::

    <data_dir>/<task>/corpus.jsonl       {"_id", "title", "text"}
    <data_dir>/<task>/queries.jsonl      {"_id", "text"}
    <data_dir>/<task>/qrels/test.tsv     query-id <tab> corpus-id <tab> score

and emits a document EMBF, a query EMBF, a whitespace qrels file, and
newline-delimited id lists, all directly consumable by the evaluation
CLI. Queries are restricted to those with judgments in the chosen qrels
split. The environment this runs in has no downloader; datasets must be
present locally.
"""

from __future__ import annotations

import json
from pathlib import Path

from .corpus import check_expected_dim, encode_in_batches
from .encoders import resolve_encoder
from .formats import ExportError, write_embf, write_ids, write_qrels
from .manifest import ExportManifest, content_digest, write_sidecar

SUPPORTED_TASKS = ("nfcorpus", "scifact", "arguana", "scidocs",
                   "ailastatutes", "quoraretrieval")


def _load_jsonl(path, required_fields):
    records = []
    with open(path, "r", encoding="utf-8") as f:
        for lineno, line in enumerate(f, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                record = json.loads(line)
            except json.JSONDecodeError as exc:
                raise ExportError(f"{path}:{lineno}: bad JSON ({exc})")
            for field in required_fields:
                if field not in record:
                    raise ExportError(f"{path}:{lineno}: missing field {field!r}")
            records.append(record)
    return records


def _load_beir_qrels(path):
    entries = []
    with open(path, "r", encoding="utf-8") as f:
        for lineno, line in enumerate(f, start=1):
            line = line.strip()
            if not line:
                continue
            fields = line.split("\t")
            if lineno == 1 and fields and not fields[-1].lstrip("-").isdigit():
                continue  # header row
            if len(fields) != 3:
                raise ExportError(f"{path}:{lineno}: expected 3 tab fields")
            qid, docid, score = fields
            entries.append((qid, docid, int(score)))
    if not entries:
        raise ExportError(f"{path}: no judgments found")
    return entries


def export_beir_task(task: str, model: str, data_dir, out_dir,
                     batch_size: int = 32, max_tokens: int = 512,
                     split: str = "test") -> dict:
    """Export one task; returns the paths of everything written."""
    if task not in SUPPORTED_TASKS:
        raise ExportError(
            f"unknown task {task!r}; supported tasks: {', '.join(SUPPORTED_TASKS)}"
        )
    task_dir = Path(data_dir) / task
    corpus_path = task_dir / "corpus.jsonl"
    queries_path = task_dir / "queries.jsonl"
    qrels_path = task_dir / "qrels" / f"{split}.tsv"
    for path in (corpus_path, queries_path, qrels_path):
        if not path.exists():
            raise ExportError(
                f"task {task!r}: {path} is missing; provide a local BEIR-layout copy"
            )

    docs = _load_jsonl(corpus_path, ("_id", "text"))
    queries = _load_jsonl(queries_path, ("_id", "text"))
    judgments = _load_beir_qrels(qrels_path)

    doc_ids = [str(d["_id"]) for d in docs]
    doc_texts = [f"{d.get('title', '')} {d['text']}".strip() for d in docs]
    judged_queries = {qid for qid, _, _ in judgments}
    queries = [q for q in queries if str(q["_id"]) in judged_queries]
    query_ids = [str(q["_id"]) for q in queries]
    query_texts = [q["text"] for q in queries]

    known_docs = set(doc_ids)
    known_queries = set(query_ids)
    for qid, docid, _ in judgments:
        if docid not in known_docs:
            raise ExportError(f"qrels reference unknown document {docid!r}")
        if qid not in known_queries:
            raise ExportError(f"qrels reference unknown query {qid!r}")

    encoder = resolve_encoder(model)
    manifest = ExportManifest(model=model, source=f"{task}:{split}",
                              batch_size=batch_size, max_tokens=max_tokens)
    check_expected_dim(encoder, manifest)

    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    stem = f"{task}.{model.replace('/', '_').replace(':', '_')}"
    paths = {
        "docs": out_dir / f"{stem}.docs.embf",
        "queries": out_dir / f"{stem}.queries.embf",
        "qrels": out_dir / f"{stem}.qrels.tsv",
        "doc_ids": out_dir / f"{stem}.docs.ids",
        "query_ids": out_dir / f"{stem}.queries.ids",
    }

    doc_matrix = encode_in_batches(encoder, doc_texts, batch_size, max_tokens)
    query_matrix = encode_in_batches(encoder, query_texts, batch_size,
                                     max_tokens, is_query=True)
    write_embf(doc_matrix, paths["docs"])
    write_embf(query_matrix, paths["queries"])
    write_qrels(judgments, paths["qrels"])
    write_ids(doc_ids, paths["doc_ids"])
    write_ids(query_ids, paths["query_ids"])
    write_sidecar(paths["docs"], manifest, encoder, rows=len(doc_texts),
                  role="documents", digest=content_digest(doc_texts),
                  extra={"task": task, "split": split})
    write_sidecar(paths["queries"], manifest, encoder, rows=len(query_texts),
                  role="queries", digest=content_digest(query_texts),
                  extra={"task": task, "split": split})
    return paths
