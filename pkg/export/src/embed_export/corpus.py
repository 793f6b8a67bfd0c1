"""Corpus exports: batch-encode a text corpus into an EMBF file.

Accepts newline-delimited plain text (one passage per line) or JSONL
with ``_id``/``text`` (and optional ``title``) fields. Batches are cut
deterministically in corpus order, so the spot check can re-encode just
the batches containing sampled rows and compare bit-exactly.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from .encoders import resolve_encoder
from .formats import ExportError, write_embf, write_ids
from .manifest import ExportManifest, content_digest, write_sidecar


def load_corpus(path) -> tuple[list[str], list[str] | None]:
    """Returns (texts, ids); ids is None for plain text corpora."""
    path = Path(path)
    if not path.exists():
        raise ExportError(f"corpus {path} does not exist")
    if path.suffix == ".jsonl":
        texts, ids = [], []
        with open(path, "r", encoding="utf-8") as f:
            for lineno, line in enumerate(f, start=1):
                line = line.strip()
                if not line:
                    continue
                try:
                    record = json.loads(line)
                except json.JSONDecodeError as exc:
                    raise ExportError(f"{path}:{lineno}: bad JSON ({exc})")
                if "_id" not in record or "text" not in record:
                    raise ExportError(f"{path}:{lineno}: needs _id and text fields")
                title = record.get("title", "")
                text = f"{title} {record['text']}".strip() if title else record["text"]
                texts.append(text)
                ids.append(str(record["_id"]))
        return texts, ids
    with open(path, "r", encoding="utf-8") as f:
        texts = [line.rstrip("\n") for line in f if line.strip()]
    return texts, None


def encode_in_batches(encoder, texts, batch_size: int, max_tokens: int,
                      is_query: bool = False) -> np.ndarray:
    parts = []
    for start in range(0, len(texts), batch_size):
        batch = texts[start:start + batch_size]
        parts.append(encoder.encode(batch, batch_size=batch_size,
                                    max_tokens=max_tokens, is_query=is_query))
    if not parts:
        return np.zeros((0, encoder.dim), dtype=np.float32)
    return np.vstack(parts)


def check_expected_dim(encoder, manifest: ExportManifest) -> None:
    if manifest.expected_dim is not None and encoder.dim != manifest.expected_dim:
        raise ExportError(
            f"manifest expects {manifest.expected_dim} dims but model "
            f"{manifest.model!r} outputs {encoder.dim}; aborting before writing"
        )


def export_corpus(manifest: ExportManifest, out_path) -> Path:
    """Encode the manifest's corpus and write EMBF + sidecar (+ ids for JSONL)."""
    encoder = resolve_encoder(manifest.model)
    check_expected_dim(encoder, manifest)
    texts, ids = load_corpus(manifest.source)
    matrix = encode_in_batches(encoder, texts, manifest.batch_size,
                               manifest.max_tokens)
    out_path = Path(out_path)
    write_embf(matrix, out_path)
    if ids is not None:
        write_ids(ids, out_path.with_suffix(out_path.suffix + ".ids"))
    write_sidecar(out_path, manifest, encoder, rows=len(texts), role="corpus",
                  digest=content_digest(texts))
    return out_path


def spot_check(manifest: ExportManifest, embf_rows: np.ndarray, texts,
               sample: int = 5, seed: int = 0, is_query: bool = False) -> None:
    """Re-encode the batches containing `sample` random rows and compare
    against the stored rows bit-exactly."""
    encoder = resolve_encoder(manifest.model)
    check_expected_dim(encoder, manifest)
    rng = np.random.default_rng(seed)
    rows = len(texts)
    if rows == 0:
        return
    picks = rng.choice(rows, size=min(sample, rows), replace=False)
    for row in sorted(int(p) for p in picks):
        start = (row // manifest.batch_size) * manifest.batch_size
        batch = texts[start:start + manifest.batch_size]
        fresh = encoder.encode(batch, batch_size=manifest.batch_size,
                               max_tokens=manifest.max_tokens, is_query=is_query)
        if not np.array_equal(fresh[row - start], embf_rows[row]):
            raise ExportError(
                f"row {row} of the stored file does not match a re-embedding"
            )
