"""embed-export: batch-inference exports of sentence embeddings into the
EMBF/qrels/id file formats consumed by the fusion toolkit."""

from .beir import SUPPORTED_TASKS, export_beir_task
from .corpus import export_corpus, load_corpus, spot_check
from .encoders import MODEL_REGISTRY, HashEncoder, resolve_encoder
from .formats import ExportError, write_embf, write_ids, write_qrels
from .manifest import ExportManifest, read_sidecar, sidecar_path

__version__ = "0.1.0"
