"""Export manifests and their provenance sidecars.

Every EMBF written gets a JSON sidecar recording the manifest verbatim
plus everything needed to regenerate the file on the same
hardware/software stack: the resolved backend, prefix conventions,
row/dim counts, and a content hash of the source text.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import asdict, dataclass
from pathlib import Path


@dataclass
class ExportManifest:
    model: str                 # registry key, hub id, or hash:<dim>
    source: str                # corpus path or dataset task name
    batch_size: int = 32
    max_tokens: int = 512
    normalize: bool = False    # recorded only; exports always emit raw outputs
    expected_dim: int | None = None  # abort if the backend disagrees

    def __post_init__(self):
        if self.batch_size < 1:
            raise ValueError("batch_size must be positive")
        if self.max_tokens < 1:
            raise ValueError("max_tokens must be positive")


def content_digest(texts) -> str:
    h = hashlib.sha256()
    for text in texts:
        h.update(text.encode("utf-8"))
        h.update(b"\x00")
    return h.hexdigest()


def sidecar_path(embf_path) -> Path:
    return Path(str(embf_path) + ".json")


def write_sidecar(embf_path, manifest: ExportManifest, encoder, rows: int,
                  role: str, digest: str, extra: dict | None = None) -> Path:
    record = {
        "manifest": asdict(manifest),
        "encoder": {
            "name": encoder.name,
            "hub_name": encoder.hub_name,
            "dim": encoder.dim,
            "query_prefix": encoder.query_prefix,
            "passage_prefix": encoder.passage_prefix,
        },
        "role": role,
        "rows": rows,
        "dims": encoder.dim,
        "source_sha256": digest,
    }
    if extra:
        record.update(extra)
    path = sidecar_path(embf_path)
    with open(path, "w", encoding="utf-8") as f:
        json.dump(record, f, indent=2, sort_keys=True)
        f.write("\n")
    return path


def read_sidecar(embf_path) -> dict:
    with open(sidecar_path(embf_path), "r", encoding="utf-8") as f:
        return json.load(f)
