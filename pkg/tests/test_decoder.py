import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from embfuse.decoder import (
    DEFAULT_STOPS,
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
from embfuse.errors import (
    BatchSizeError,
    DimensionError,
    TrainingDivergedError,
    UndefinedSimilarityError,
    ValidationError,
)
from embfuse.linalg import truncate
from embfuse.synthetic import low_rank_corpus

from oracles import central_difference, sim_loss_brute


def make_model(rng, d_in, d_out, stops):
    return DecoderModel(rng.normal(size=(d_out, d_in)), rng.normal(size=d_out), stops)


def test_default_stops_end_at_768():
    assert DEFAULT_STOPS == (32, 64, 128, 200, 256, 300, 384, 512, 768)


def test_stops_validation():
    with pytest.raises(ValidationError):
        DecoderModel(np.eye(4), np.zeros(4), (4, 2))
    with pytest.raises(ValidationError):
        DecoderModel(np.eye(4), np.zeros(4), (2, 3))
    with pytest.raises(ValidationError):
        DecoderModel(np.eye(4), np.zeros(4), ())


def test_forward_identity_weights():
    model = DecoderModel(np.eye(3), np.zeros(3), (3,))
    z = np.array([[1.0, 2.0, 3.0], [4.0, 5.0, 6.0]])
    assert np.array_equal(forward(model, z), z)


def test_forward_hand_case():
    model = DecoderModel(np.array([[1.0, 0.0], [0.0, 2.0]]), np.array([1.0, 0.0]),
                         (2,))
    out = forward(model, np.array([[3.0, 4.0]]))
    assert np.array_equal(out, [[4.0, 8.0]])


def test_forward_empty_batch():
    model = DecoderModel(np.eye(2), np.zeros(2), (2,))
    assert forward(model, np.zeros((0, 2))).shape == (0, 2)


def test_forward_dim_mismatch():
    model = DecoderModel(np.eye(2), np.zeros(2), (2,))
    with pytest.raises(DimensionError):
        forward(model, np.zeros((1, 3)))


def test_sim_loss_identity_is_zero():
    rng = np.random.default_rng(0)
    z = rng.normal(size=(5, 4))
    assert sim_loss(z, z) == 0.0


def test_sim_loss_hand_case_b2():
    z = np.array([[1.0, 0.0], [0.0, 1.0]])
    h = np.array([[1.0, 0.0], [1.0, 0.0]])
    assert sim_loss(h, z) == pytest.approx(1.0, abs=1e-12)


def test_sim_loss_too_small_batch():
    with pytest.raises(BatchSizeError):
        sim_loss(np.ones((1, 2)), np.ones((1, 2)))


def test_sim_loss_zero_row_rejected():
    z = np.array([[1.0, 0.0], [0.0, 0.0]])
    with pytest.raises(UndefinedSimilarityError):
        sim_loss(z, np.eye(2))


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 2 ** 32 - 1))
def test_sim_loss_matches_brute_force(seed):
    rng = np.random.default_rng(seed)
    b = int(rng.integers(2, 9))
    d = int(rng.integers(2, 17))
    h = rng.normal(size=(b, d))
    z = rng.normal(size=(b, d))
    fast = sim_loss(h, z)
    slow = sim_loss_brute(h.tolist(), z.tolist())
    assert abs(fast - slow) <= 1e-10 * max(1.0, abs(slow))


@settings(max_examples=15, deadline=None)
@given(st.integers(0, 2 ** 32 - 1))
def test_sim_loss_row_permutation_symmetry(seed):
    rng = np.random.default_rng(seed)
    h = rng.normal(size=(6, 5))
    z = rng.normal(size=(6, 5))
    perm = rng.permutation(6)
    assert sim_loss(h[perm], z[perm]) == pytest.approx(sim_loss(h, z), abs=1e-12)


@settings(max_examples=15, deadline=None)
@given(st.integers(0, 2 ** 32 - 1))
def test_sim_loss_per_row_rescale_invariance(seed):
    rng = np.random.default_rng(seed)
    h = rng.normal(size=(5, 4))
    z = rng.normal(size=(5, 4))
    scales = rng.uniform(0.1, 10.0, size=(5, 1))
    assert sim_loss(h * scales, z) == pytest.approx(sim_loss(h, z), abs=1e-6)


def test_mrl_loss_zero_when_identity_achievable():
    rng = np.random.default_rng(1)
    z = rng.normal(size=(6, 4))
    model = DecoderModel(np.eye(4), np.zeros(4), (4,))
    assert mrl_loss(model, z) == 0.0


def test_mrl_loss_hand_case_two_stops():
    # identity decoder, rows (1,0) and (1,1): full-width cosine matches, the
    # one-column prefix forces cosine 1 against target 1/sqrt(2)
    model = DecoderModel(np.eye(2), np.zeros(2), (1, 2))
    z = np.array([[1.0, 0.0], [1.0, 1.0]])
    expected = 0.75 - np.sqrt(2.0) / 2.0
    assert mrl_loss(model, z) == pytest.approx(expected, abs=1e-14)


def test_mrl_loss_compositional_identity():
    rng = np.random.default_rng(2)
    for _ in range(5):
        model = make_model(rng, 6, 4, (2, 3, 4))
        z = rng.normal(size=(5, 6))
        decoded = forward(model, z)
        per_stop = [sim_loss(truncate(decoded, s), z) for s in model.stops]
        assert mrl_loss(model, z) == sum(per_stop) / len(per_stop)


def test_mrl_loss_zero_truncated_row_is_hard_error():
    # weights whose leading output coordinate is zero make the one-column
    # prefix of every row vanish; silently skipping pairs would bias the loss
    weights = np.vstack([np.zeros((1, 3)), np.ones((1, 3))])
    model = DecoderModel(weights, np.zeros(2), (1, 2))
    z = np.array([[1.0, 0.0, 0.0], [0.0, 1.0, 0.0]])
    with pytest.raises(UndefinedSimilarityError):
        mrl_loss(model, z)
    with pytest.raises(UndefinedSimilarityError):
        mrl_loss_grad(model, z)


def test_grad_zero_at_perfect_configuration():
    rng = np.random.default_rng(3)
    z = rng.normal(size=(6, 4))
    model = DecoderModel(np.eye(4), np.zeros(4), (4,))
    loss, grad_w, grad_b = mrl_loss_grad(model, z)
    assert loss == 0.0
    assert np.linalg.norm(grad_w) < 1e-8
    assert np.linalg.norm(grad_b) < 1e-8


def test_grad_matches_finite_differences():
    rng = np.random.default_rng(4)
    for _ in range(3):
        model = make_model(rng, 6, 4, (2, 4))
        z = rng.normal(size=(5, 6))
        loss, grad_w, grad_b = mrl_loss_grad(model, z)
        assert loss == mrl_loss(model, z)
        for param, grad in ((model.weights, grad_w), (model.bias, grad_b)):
            it = np.nditer(param, flags=["multi_index"])
            for _ in it:
                idx = it.multi_index
                numeric = central_difference(lambda: mrl_loss(model, z), param, idx)
                denom = max(abs(grad[idx]), abs(numeric), 1e-8)
                assert abs(grad[idx] - numeric) / denom <= 1e-4


def test_bias_gradient_is_nonzero_in_general():
    # shifting all rows equally does change cosines, so the bias gradient
    # must not vanish on generic inputs
    rng = np.random.default_rng(5)
    model = make_model(rng, 4, 3, (3,))
    z = rng.normal(size=(5, 4))
    _, _, grad_b = mrl_loss_grad(model, z)
    assert np.linalg.norm(grad_b) > 1e-6


def test_train_determinism_bit_identical():
    corpus = low_rank_corpus(80, 12, 4, seed=6)
    cfg = TrainConfig(batch_size=16, epochs=5, seed=9)
    a = train(corpus, cfg, stops=(4, 8))
    b = train(corpus, cfg, stops=(4, 8))
    assert np.array_equal(a.model.weights, b.model.weights)
    assert np.array_equal(a.model.bias, b.model.bias)
    assert a.train_loss_history == b.train_loss_history
    assert a.val_loss_history == b.val_loss_history


def test_train_low_rank_converges():
    corpus = low_rank_corpus(300, 16, 4, seed=7)
    cfg = TrainConfig(batch_size=64, epochs=60, seed=1, validation_fraction=0.1)
    ckpt = train(corpus, cfg, stops=(4, 8))
    assert min(ckpt.val_loss_history) < 1e-2
    assert ckpt.train_loss_history[-1] < ckpt.train_loss_history[0] / 10
    assert all(np.isfinite(ckpt.train_loss_history))


def test_train_corpus_too_small():
    corpus = low_rank_corpus(30, 8, 2, seed=8)
    with pytest.raises(ValidationError, match="2\\*batch_size"):
        train(corpus, TrainConfig(batch_size=16, epochs=1), stops=(4,))


def test_train_divergence_guard_raises_cleanly():
    # a step size near the float64 ceiling overflows the forward pass within
    # an epoch; the guard must surface a diverged error naming the epoch, not
    # propagate NaNs into the checkpoint (cosine losses are bounded, so only
    # parameter overflow can actually produce a non-finite loss)
    corpus = low_rank_corpus(40, 8, 2, seed=9)
    cfg = TrainConfig(batch_size=8, epochs=3, learning_rate=1e308, seed=0)
    with pytest.raises(TrainingDivergedError) as err:
        train(corpus, cfg, stops=(4,))
    assert err.value.epoch >= 1


def test_train_config_validation():
    with pytest.raises(BatchSizeError):
        TrainConfig(batch_size=1)
    with pytest.raises(ValidationError):
        TrainConfig(learning_rate=0.0)
    with pytest.raises(ValidationError):
        TrainConfig(validation_fraction=1.0)
    with pytest.raises(ValidationError):
        TrainConfig(optimizer="lbfgs")


def test_sgd_optimizer_also_trains():
    corpus = low_rank_corpus(200, 12, 3, seed=10)
    cfg = TrainConfig(batch_size=32, epochs=40, learning_rate=0.5,
                      optimizer="sgd", sgd_momentum=0.9, seed=2)
    ckpt = train(corpus, cfg, stops=(3, 6))
    assert ckpt.train_loss_history[-1] < ckpt.train_loss_history[0]


def test_checkpoint_round_trip_bit_exact(tmp_path):
    rng = np.random.default_rng(11)
    model = make_model(rng, 7, 5, (2, 5))
    path = tmp_path / "model.embd"
    save_checkpoint(model, path)
    loaded = load_checkpoint(path)
    assert np.array_equal(loaded.weights, model.weights)
    assert np.array_equal(loaded.bias, model.bias)
    assert loaded.stops == model.stops
    save_checkpoint(loaded, tmp_path / "again.embd")
    assert (tmp_path / "again.embd").read_bytes() == path.read_bytes()
