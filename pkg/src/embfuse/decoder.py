"""Single-layer decoder trained to preserve pairwise cosine similarities.

The decoder is a pure affine map from the concatenated input space to a
lower-dimensional output. Training minimizes the batch similarity loss

    sim_loss(H, Z) = (1 / (B(B-1))) * sum_{i != j} (cos(h_i, h_j) - cos(z_i, z_j))^2

averaged over a strictly increasing list of prefix widths ("stops"): each
stop truncates the decoder output to its first columns and compares those
truncated cosines against the full-dimensional input cosines, so every
prefix of the output stays independently useful.

All loss and gradient arithmetic runs in float64; checkpoints store the
parameters as float64 so training round-trips bit-exactly.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field

import numpy as np

from .errors import (
    BatchSizeError,
    CorruptionError,
    DimensionError,
    FormatError,
    TrainingDivergedError,
    ValidationError,
)
from .linalg import as_matrix, l2_normalize_rows, unit_rows

# Default output width and prefix stops for a 768-dim decoder.
DEFAULT_STOPS = (32, 64, 128, 200, 256, 300, 384, 512, 768)

EMBD_MAGIC = b"EMBD"
_CKPT_HEADER = struct.Struct("<4sIIII")  # magic, version, d_in, d_out, n_stops


def validate_stops(stops, d_out: int) -> tuple[int, ...]:
    stops = tuple(int(s) for s in stops)
    if not stops:
        raise ValidationError("stops must be non-empty")
    if any(s <= 0 for s in stops):
        raise ValidationError(f"stops must be positive, got {stops}")
    if any(b <= a for a, b in zip(stops, stops[1:])):
        raise ValidationError(f"stops must be strictly increasing, got {stops}")
    if stops[-1] != d_out:
        raise ValidationError(
            f"last stop must equal the output width: {stops[-1]} != {d_out}"
        )
    return stops


@dataclass
class DecoderModel:
    """Affine decoder: output = input @ weights.T + bias."""

    weights: np.ndarray  # (d_out, d_in) float64
    bias: np.ndarray     # (d_out,) float64
    stops: tuple[int, ...]

    def __post_init__(self):
        self.weights = np.ascontiguousarray(self.weights, dtype=np.float64)
        self.bias = np.ascontiguousarray(self.bias, dtype=np.float64)
        if self.weights.ndim != 2 or self.bias.ndim != 1:
            raise ValidationError("weights must be 2-D and bias 1-D")
        if self.bias.shape[0] != self.weights.shape[0]:
            raise DimensionError(
                f"bias length {self.bias.shape[0]} != output width {self.weights.shape[0]}"
            )
        if not (np.all(np.isfinite(self.weights)) and np.all(np.isfinite(self.bias))):
            raise ValidationError("decoder parameters must be finite")
        self.stops = validate_stops(self.stops, self.weights.shape[0])

    @property
    def d_in(self) -> int:
        return self.weights.shape[1]

    @property
    def d_out(self) -> int:
        return self.weights.shape[0]

    def copy(self) -> "DecoderModel":
        return DecoderModel(self.weights.copy(), self.bias.copy(), self.stops)


@dataclass
class TrainConfig:
    batch_size: int = 256
    epochs: int = 100
    learning_rate: float = 1e-3
    optimizer: str = "adam"  # "adam" or "sgd"
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_eps: float = 1e-8
    sgd_momentum: float = 0.0
    seed: int = 0
    validation_fraction: float = 0.05
    normalize_inputs: bool = True

    def __post_init__(self):
        if self.batch_size < 2:
            raise BatchSizeError("pairwise loss needs batch_size >= 2")
        if self.learning_rate <= 0:
            raise ValidationError("learning_rate must be positive")
        if not 0 <= self.validation_fraction < 1:
            raise ValidationError("validation_fraction must be in [0, 1)")
        if self.optimizer not in ("adam", "sgd"):
            raise ValidationError(f"unknown optimizer {self.optimizer!r}")


@dataclass
class Checkpoint:
    model: DecoderModel
    train_loss_history: list[float] = field(default_factory=list)
    val_loss_history: list[float] = field(default_factory=list)


def forward(model: DecoderModel, batch) -> np.ndarray:
    """Decode a batch: rows map through the affine transform (float64 out)."""
    z = np.ascontiguousarray(as_matrix(batch), dtype=np.float64)
    if z.shape[1] != model.d_in:
        raise DimensionError(
            f"input width {z.shape[1]} != decoder input width {model.d_in}"
        )
    return z @ model.weights.T + model.bias


def sim_loss(decoded_batch, input_batch) -> float:
    """Mean squared gap between decoded and input pairwise cosines.

    Both batches must have the same number of rows B >= 2; the sum runs
    over ordered pairs i != j and is divided by B(B-1).
    """
    h = as_matrix(decoded_batch)
    z = as_matrix(input_batch)
    if h.shape[0] != z.shape[0]:
        raise DimensionError(f"batch sizes differ: {h.shape[0]} vs {z.shape[0]}")
    b = h.shape[0]
    if b < 2:
        raise BatchSizeError(f"pairwise loss needs at least 2 rows, got {b}")
    hu = unit_rows(h)
    zu = unit_rows(z)
    err = hu @ hu.T - zu @ zu.T
    np.fill_diagonal(err, 0.0)
    return float(np.einsum("ij,ij->", err, err)) / (b * (b - 1))


def mrl_loss(model: DecoderModel, input_batch) -> float:
    """Average of sim_loss over every stop's truncated decoder output.

    Each stop compares the first columns of the decoded batch against the
    full-dimensional input cosines.
    """
    z = np.ascontiguousarray(as_matrix(input_batch), dtype=np.float64)
    decoded = forward(model, z)
    total = 0.0
    for stop in model.stops:
        total += sim_loss(np.ascontiguousarray(decoded[:, :stop]), z)
    return total / len(model.stops)


def mrl_loss_grad(model: DecoderModel, input_batch):
    """Loss plus its exact analytic gradient w.r.t. weights and bias.

    Returns ``(loss, grad_weights, grad_bias)`` where the loss value is
    bit-identical to :func:`mrl_loss` on the same inputs.

    For one stop with truncated rows u_i (norms n_i, unit rows su_i) the
    derivative of the squared cosine gap through cos(u_i, u_j) is

        dL/du_i = (2 / n_i) * sum_j A_ij (su_j - C_ij su_i),

    with C the decoded cosine matrix and A = 2 (C - T) / (B(B-1)) the
    off-diagonal loss derivative against the target cosines T.
    """
    z = np.ascontiguousarray(as_matrix(input_batch), dtype=np.float64)
    decoded = forward(model, z)
    b = z.shape[0]
    if b < 2:
        raise BatchSizeError(f"pairwise loss needs at least 2 rows, got {b}")
    zu = unit_rows(z)
    targets = zu @ zu.T

    n_stops = len(model.stops)
    d_decoded = np.zeros_like(decoded)
    total = 0.0
    for stop in model.stops:
        u = np.ascontiguousarray(decoded[:, :stop])
        # Re-derive the per-stop loss through sim_loss so the returned
        # value shares its exact floating-point path.
        total += sim_loss(u, z)

        norms = np.sqrt(np.einsum("ij,ij->i", u, u))
        su = u / norms[:, None]
        cosines = su @ su.T
        err = cosines - targets
        np.fill_diagonal(err, 0.0)
        coeff = (2.0 / (b * (b - 1))) * err
        grad_u = 2.0 * (coeff @ su - (coeff * cosines).sum(axis=1)[:, None] * su)
        grad_u /= norms[:, None]
        d_decoded[:, :stop] += grad_u / n_stops

    loss = total / n_stops
    grad_weights = d_decoded.T @ z
    grad_bias = d_decoded.sum(axis=0)
    return loss, grad_weights, grad_bias


def init_model(d_in: int, d_out: int, stops, rng: np.random.Generator) -> DecoderModel:
    """Fan-in-scaled uniform init; bias starts at zero."""
    bound = 1.0 / np.sqrt(d_in)
    weights = rng.uniform(-bound, bound, size=(d_out, d_in))
    return DecoderModel(weights, np.zeros(d_out), validate_stops(stops, d_out))


class _Adam:
    def __init__(self, shapes, lr, beta1, beta2, eps):
        self.lr, self.b1, self.b2, self.eps = lr, beta1, beta2, eps
        self.m = [np.zeros(s) for s in shapes]
        self.v = [np.zeros(s) for s in shapes]
        self.t = 0

    def step(self, params, grads):
        self.t += 1
        for p, g, m, v in zip(params, grads, self.m, self.v):
            m *= self.b1
            m += (1 - self.b1) * g
            v *= self.b2
            v += (1 - self.b2) * g * g
            m_hat = m / (1 - self.b1 ** self.t)
            v_hat = v / (1 - self.b2 ** self.t)
            p -= self.lr * m_hat / (np.sqrt(v_hat) + self.eps)


class _Sgd:
    def __init__(self, shapes, lr, momentum):
        self.lr, self.momentum = lr, momentum
        self.vel = [np.zeros(s) for s in shapes]

    def step(self, params, grads):
        for p, g, v in zip(params, grads, self.vel):
            v *= self.momentum
            v -= self.lr * g
            p += v


def train(corpus, config: TrainConfig, stops=DEFAULT_STOPS, progress=None) -> Checkpoint:
    """Train a decoder on a corpus of concatenated embeddings.

    Deterministic for a fixed seed: initialization, the validation split,
    and per-epoch shuffling all flow from one seeded generator. When a
    validation split is configured the returned parameters are the ones
    from the best validation epoch. `progress`, when given, is called as
    ``progress(epoch, train_loss, val_loss)`` after every epoch
    (``val_loss`` is None without a validation split).
    """
    corpus = as_matrix(corpus)
    n, d_in = corpus.shape
    stops = validate_stops(stops, stops[-1] if stops else 0)
    if n < 2 * config.batch_size:
        raise ValidationError(
            f"corpus has {n} rows; need at least 2*batch_size = {2 * config.batch_size}"
        )
    if config.normalize_inputs:
        corpus = l2_normalize_rows(corpus)
    corpus = np.ascontiguousarray(corpus, dtype=np.float64)

    rng = np.random.default_rng(config.seed)
    model = init_model(d_in, stops[-1], stops, rng)

    split = rng.permutation(n)
    n_val = int(config.validation_fraction * n)
    if n_val < 2:
        n_val = 0  # a pairwise validation loss needs at least two rows
    val_idx = split[:n_val]
    train_idx = split[n_val:]

    params = [model.weights, model.bias]
    shapes = [p.shape for p in params]
    if config.optimizer == "adam":
        opt = _Adam(shapes, config.learning_rate, config.adam_beta1,
                    config.adam_beta2, config.adam_eps)
    else:
        opt = _Sgd(shapes, config.learning_rate, config.sgd_momentum)

    train_hist: list[float] = []
    val_hist: list[float] = []
    best_val = np.inf
    best_params = None

    for epoch in range(1, config.epochs + 1):
        order = rng.permutation(train_idx)
        batch_losses = []
        for start in range(0, order.size, config.batch_size):
            batch = order[start:start + config.batch_size]
            if batch.size < 2:
                continue  # a trailing single row cannot form a pair
            with np.errstate(over="ignore", invalid="ignore"):
                # overflow surfaces through the finite checks below
                loss, grad_w, grad_b = mrl_loss_grad(model, corpus[batch])
            if not np.isfinite(loss):
                raise TrainingDivergedError(epoch, "non-finite batch loss")
            opt.step(params, [grad_w, grad_b])
            if not (np.all(np.isfinite(model.weights)) and np.all(np.isfinite(model.bias))):
                raise TrainingDivergedError(epoch, "non-finite parameters after update")
            batch_losses.append(loss)
        train_loss = float(np.mean(batch_losses))
        train_hist.append(train_loss)

        val_loss = None
        if n_val:
            val_loss = mrl_loss(model, corpus[val_idx])
            val_hist.append(val_loss)
            if val_loss < best_val:
                best_val = val_loss
                best_params = (model.weights.copy(), model.bias.copy())
        if progress is not None:
            progress(epoch, train_loss, val_loss)

    if best_params is not None:
        model = DecoderModel(best_params[0], best_params[1], stops)
    return Checkpoint(model, train_hist, val_hist)


def save_checkpoint(model: DecoderModel, path) -> None:
    """Write an EMBD checkpoint; float64 parameters round-trip bit-exactly."""
    with open(path, "wb") as f:
        f.write(_CKPT_HEADER.pack(EMBD_MAGIC, 1, model.d_in,
                                  model.d_out, len(model.stops)))
        f.write(struct.pack(f"<{len(model.stops)}I", *model.stops))
        f.write(np.ascontiguousarray(model.weights, dtype="<f8").tobytes())
        f.write(np.ascontiguousarray(model.bias, dtype="<f8").tobytes())


def load_checkpoint(path) -> DecoderModel:
    with open(path, "rb") as f:
        raw = f.read()
    if len(raw) < _CKPT_HEADER.size:
        raise CorruptionError(f"{path}: shorter than the checkpoint header")
    magic, version, d_in, d_out, n_stops = _CKPT_HEADER.unpack_from(raw)
    if magic != EMBD_MAGIC:
        raise FormatError(f"{path}: bad magic {magic!r}, expected {EMBD_MAGIC!r}")
    if version != 1:
        raise FormatError(f"{path}: unsupported checkpoint version {version}")
    offset = _CKPT_HEADER.size
    expected = offset + 4 * n_stops + 8 * d_out * d_in + 8 * d_out
    if len(raw) != expected:
        raise CorruptionError(f"{path}: {len(raw)} bytes, {expected} expected")
    stops = struct.unpack_from(f"<{n_stops}I", raw, offset)
    offset += 4 * n_stops
    weights = np.frombuffer(raw, dtype="<f8", count=d_out * d_in, offset=offset)
    offset += 8 * d_out * d_in
    bias = np.frombuffer(raw, dtype="<f8", count=d_out, offset=offset)
    return DecoderModel(weights.reshape(d_out, d_in).copy(), bias.copy(), stops)
