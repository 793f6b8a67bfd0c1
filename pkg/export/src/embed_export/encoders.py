"""Encoder backends and the pretrained-model registry.

Registry keys name the models by the shorthand used across the
experiments; each entry records the hub id, the expected output width,
and the query/passage prefix conventions from the model cards. A
deterministic offline backend (``hash:<dim>``) exists for tests and dry
runs on machines without model weights: it feature-hashes word unigrams
and bigrams into a fixed-width vector, so identical text always encodes
to identical bytes regardless of batching.

No backend L2-normalizes its output; normalization policy belongs to the
consuming toolkit.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass

import numpy as np

from .formats import ExportError


@dataclass(frozen=True)
class ModelSpec:
    key: str
    hub_name: str
    dim: int
    query_prefix: str = ""
    passage_prefix: str = ""


_SEARCH_PREFIX = "Represent this sentence for searching relevant passages: "

MODEL_REGISTRY = {
    "s1": ModelSpec("s1", "intfloat/e5-small-v2", 384,
                    query_prefix="query: ", passage_prefix="passage: "),
    "s2": ModelSpec("s2", "avsolatorio/NoInstruct-small-Embedding-v0", 384),
    "s3": ModelSpec("s3", "thenlper/gte-small", 384),
    "s5": ModelSpec("s5", "BAAI/bge-small-en-v1.5", 384,
                    query_prefix=_SEARCH_PREFIX),
    "m1": ModelSpec("m1", "Snowflake/snowflake-arctic-embed-m", 768,
                    query_prefix=_SEARCH_PREFIX),
    "t1": ModelSpec("t1", "mixedbread-ai/mxbai-embed-large-v1", 1024,
                    query_prefix=_SEARCH_PREFIX),
}


class HashEncoder:
    """Deterministic offline encoder: feature-hashed word n-grams."""

    def __init__(self, dim: int):
        if dim < 1:
            raise ExportError(f"hash encoder width must be positive, got {dim}")
        self.dim = dim
        self.name = f"hash:{dim}"
        self.hub_name = self.name
        self.query_prefix = ""
        self.passage_prefix = ""

    def _embed_one(self, text: str, max_tokens: int) -> np.ndarray:
        tokens = text.split()[:max_tokens]
        vec = np.zeros(self.dim, dtype=np.float32)
        features = tokens + [f"{a} {b}" for a, b in zip(tokens, tokens[1:])]
        for feature in features:
            digest = hashlib.blake2b(feature.encode("utf-8"), digest_size=8).digest()
            value = int.from_bytes(digest, "little")
            index = value % self.dim
            sign = 1.0 if (value >> 63) & 1 else -1.0
            vec[index] += sign
        return vec

    def encode(self, texts, batch_size: int = 32, max_tokens: int = 512,
               is_query: bool = False) -> np.ndarray:
        del batch_size, is_query  # output is batch- and role-independent
        out = np.zeros((len(texts), self.dim), dtype=np.float32)
        for i, text in enumerate(texts):
            out[i] = self._embed_one(text, max_tokens)
        return out


class SentenceTransformerEncoder:
    """Pretrained sentence-encoder backend (loaded lazily, CPU, eval mode)."""

    def __init__(self, spec: ModelSpec):
        try:
            import torch
            from sentence_transformers import SentenceTransformer
        except ImportError as exc:
            raise ExportError(
                f"model {spec.key!r} needs the sentence-transformers backend; "
                f"install the 'models' extra ({exc})"
            )
        torch.manual_seed(0)
        torch.set_num_threads(1)  # keeps batched inference reproducible
        try:
            self._model = SentenceTransformer(spec.hub_name, device="cpu")
        except Exception as exc:
            raise ExportError(
                f"could not load {spec.hub_name!r}; weights must be available "
                f"locally or via the hub ({exc})"
            )
        self._model.eval()
        self.dim = int(self._model.get_sentence_embedding_dimension())
        self.name = spec.key
        self.hub_name = spec.hub_name
        self.query_prefix = spec.query_prefix
        self.passage_prefix = spec.passage_prefix

    def encode(self, texts, batch_size: int = 32, max_tokens: int = 512,
               is_query: bool = False) -> np.ndarray:
        prefix = self.query_prefix if is_query else self.passage_prefix
        self._model.max_seq_length = max_tokens
        out = self._model.encode([prefix + t for t in texts],
                                 batch_size=batch_size,
                                 convert_to_numpy=True,
                                 normalize_embeddings=False,
                                 show_progress_bar=False)
        return np.asarray(out, dtype=np.float32)


def resolve_encoder(model_id: str):
    """Map a model id to a backend: registry key, ``hash:<dim>``, or hub id."""
    if model_id.startswith("hash:"):
        try:
            return HashEncoder(int(model_id.split(":", 1)[1]))
        except ValueError:
            raise ExportError(f"bad hash encoder spec {model_id!r}")
    if model_id in MODEL_REGISTRY:
        return SentenceTransformerEncoder(MODEL_REGISTRY[model_id])
    if "/" in model_id:
        return SentenceTransformerEncoder(ModelSpec(model_id, model_id, dim=0))
    raise ExportError(
        f"unknown model {model_id!r}; use one of {sorted(MODEL_REGISTRY)}, "
        f"a hub id, or hash:<dim>"
    )
