"""embfuse: fuse embedding spaces by concatenation, compress them with a
similarity-preserving decoder, quantize the outputs, and evaluate
retrieval quality against raw and LSH baselines."""

from .decoder import (
    DEFAULT_STOPS,
    Checkpoint,
    DecoderModel,
    TrainConfig,
    forward,
    load_checkpoint,
    mrl_loss,
    mrl_loss_grad,
    save_checkpoint,
    sim_loss,
    train,
)
from .embio import (
    Qrels,
    QuantizedCodes,
    RunFile,
    read_codes,
    read_embeddings,
    read_qrels,
    read_run,
    write_codes,
    write_embeddings,
    write_qrels,
    write_run,
)
from .evaluation import (
    EvalReport,
    RetrievalTask,
    evaluate_pipeline,
    ndcg_at_k,
    search,
)
from .linalg import concat, cosine, l2_normalize_rows, truncate
from .lsh import (
    BitCodes,
    LshProjector,
    compression_factor,
    hamming_similarity,
    project_and_binarize,
)
from .quantizer import (
    QuantizerCalibration,
    calibrate,
    dequantize,
    quantize,
    read_calibration,
    write_calibration,
)

__version__ = "0.1.0"
