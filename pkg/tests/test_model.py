import math
from dataclasses import replace

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from nvi_engine.model.checkpoint import Checkpoint, CheckpointError
from nvi_engine.model.gradcheck import TINY, gradient_check
from nvi_engine.model.layers import Dropout, GraphError, LayerNorm
from nvi_engine.model.train import AdamW, TrainConfig, cosine_lr, predict, train
from nvi_engine.model.transformer import ModelConfig, ShapeError, TransformerLite, combined_loss, param_count
from nvi_engine.synth import gen_dataset

SMALL = ModelConfig(d_model=16, heads=2, layers=1, ffn_dim=32, seq_len=60, patch=100, head_dim=8)


@pytest.fixture(scope="module")
def small_data():
    d = gen_dataset(40, seed=3)
    return d.model_arrays("train"), d.model_arrays("val")


def windows(n, cfg, seed=0):
    return np.random.default_rng(seed).normal(size=(n, cfg.window_len, cfg.in_channels))


# --- config and parameter count --------------------------------------------------------

def test_config_validation():
    with pytest.raises(ValueError):
        ModelConfig(d_model=130, heads=4)
    with pytest.raises(ValueError):
        ModelConfig(dropout=1.0)
    with pytest.raises(ValueError):
        ModelConfig(patch=0)


def test_param_count_full_sequence():
    cfg = ModelConfig(seq_len=6000, patch=1)
    assert param_count(cfg) == 1_038_273
    assert 1_000_000 <= param_count(cfg) <= 1_400_000
    assert TransformerLite(cfg).n_parameters() == param_count(cfg)


def test_param_count_no_layers():
    cfg = ModelConfig(layers=0)
    d = cfg.d_model
    assert param_count(cfg) == (4 * d + d + 2 * d) + cfg.seq_len * d + (d * 32 + 32 + 32 + 1)
    assert TransformerLite(cfg).n_parameters() == param_count(cfg)


def test_param_count_ffn_doubling():
    a, b = ModelConfig(), ModelConfig(ffn_dim=512)
    assert param_count(b) - param_count(a) == 2 * (2 * 128 * 256 + 256)


@settings(max_examples=15)
@given(st.integers(1, 4), st.sampled_from([4, 8, 16]), st.integers(0, 3), st.integers(1, 64), st.integers(1, 10))
def test_param_count_matches_allocation(heads, per_head, layers, ffn, seq):
    cfg = ModelConfig(d_model=heads * per_head, heads=heads, layers=layers, ffn_dim=ffn, seq_len=seq, patch=2,
                      head_dim=5)
    assert TransformerLite(cfg).n_parameters() == param_count(cfg)


# --- forward --------------------------------------------------------------------------

def test_forward_shapes_and_range():
    m = TransformerLite(SMALL)
    pred, logit = m.forward(windows(3, SMALL))
    assert pred.shape == logit.shape == (3,)
    assert np.all((pred >= 0) & (pred <= 100))
    assert np.allclose(pred, 100 / (1 + np.exp(-logit)))


def test_shape_error_names_expected_shape():
    m = TransformerLite(SMALL)
    with pytest.raises(ShapeError, match="6000"):
        m.forward(np.zeros((2, 5999, 4)))
    with pytest.raises(ValueError):
        m.forward(np.full((1, 6000, 4), np.nan))


def test_eval_deterministic_and_dropout_identity():
    m = TransformerLite(replace(SMALL, dropout=0.5))
    x = windows(4, SMALL)
    a, b = m.forward(x), m.forward(x)
    assert a[1].tobytes() == b[1].tobytes()
    d = Dropout(0.5, np.random.default_rng(0))
    z = np.random.default_rng(1).normal(size=(3, 5))
    assert d.forward(z, train=False) is z
    assert not np.array_equal(m.forward(x, "train", record=False)[1], a[1])


def test_attention_rows_sum_to_one():
    m = TransformerLite(replace(SMALL, layers=2))
    m.forward(windows(3, SMALL))
    for att in m.attention_maps():
        assert att.shape == (3, 2, 60, 60)
        assert np.max(np.abs(att.sum(axis=-1) - 1)) < 1e-6


def test_batch_permutation():
    m = TransformerLite(SMALL)
    x = windows(6, SMALL)
    perm = np.array([4, 2, 0, 5, 1, 3])
    _, a = m.forward(x)
    _, b = m.forward(x[perm])
    assert np.allclose(a[perm], b, rtol=0, atol=1e-12)


def test_backward_needs_recorded_forward():
    m = TransformerLite(SMALL)
    with pytest.raises(GraphError):
        m.backward(np.zeros(2))
    m.forward(windows(2, SMALL))
    with pytest.raises(GraphError):
        m.backward(np.zeros(2))


# --- gradients ----------------------------------------------------------------------

def test_gradient_check_tiny_config():
    errors = gradient_check(TransformerLite(TINY), eps=1e-3)
    assert set(errors) == set(TransformerLite(TINY).state_dict())
    assert max(errors.values()) < 1e-4


def test_zero_weight_term_contributes_nothing():
    logit = np.array([-1.0, 0.5, 2.0])
    lab = np.array([1, 0, 0])
    pred = 100 / (1 + np.exp(-logit))
    # with the MSE weight at zero the gradient cannot depend on the regression target
    g1 = combined_loss(pred, logit, [10, 20, 30], lab, mix=(0.0, 1.0))[1]
    g2 = combined_loss(pred, logit, [90, 80, 70], lab, mix=(0.0, 1.0))[1]
    assert np.array_equal(g1, g2)
    # with the BCE weight at zero it cannot depend on the label
    h1 = combined_loss(pred, logit, [10, 20, 30], [1, 1, 1], mix=(1.0, 0.0))[1]
    h2 = combined_loss(pred, logit, [10, 20, 30], [0, 0, 0], mix=(1.0, 0.0))[1]
    assert np.array_equal(h1, h2)


def test_layernorm_input_gradient_sums_to_zero():
    rng = np.random.default_rng(0)
    ln = LayerNorm(12)
    ln.params["weight"] = rng.normal(size=12)
    ln.forward(rng.normal(size=(5, 7, 12)), record=True)
    dx = ln.backward(rng.normal(size=(5, 7, 12)))
    assert np.max(np.abs(dx.sum(axis=-1))) < 1e-12


# --- loss and schedule ----------------------------------------------------------------

def test_bce_at_zero_logit():
    loss, _ = combined_loss([50, 50], [0, 0], [50, 50], [1, 0], mix=(0.0, 1.0))
    assert loss == pytest.approx(math.log(2), abs=1e-12)
    loss, _ = combined_loss([50], [0], [50], [1], pos_weight=3.0, mix=(0.0, 1.0))
    assert loss == pytest.approx(3 * math.log(2), abs=1e-12)


def test_loss_at_optimum():
    # NVI label 1 pairs with a large negative logit (low score); stable with a large positive one
    logit = np.array([-30.0, 30.0])
    pred = 100 / (1 + np.exp(-logit))
    loss, _ = combined_loss(pred, logit, pred, [1, 0])
    assert loss < 1e-9 + 1e-12


def test_loss_rejects_non_finite():
    with pytest.raises(ValueError):
        combined_loss([50], [np.inf], [50], [1])
    with pytest.raises(ValueError):
        combined_loss([50], [0], [50], [1], pos_weight=0)
    with pytest.raises(ValueError):
        TrainConfig(loss_mix=(0.5, 0.6))


def test_cosine_schedule():
    assert cosine_lr(0) == pytest.approx(1e-3, abs=1e-15)
    assert cosine_lr(100) == pytest.approx(1e-5, abs=1e-15)
    assert cosine_lr(50) == pytest.approx(5.05e-4, abs=1e-15)


def test_adamw_decoupled_decay():
    p = {"w": np.array([2.0])}
    opt = AdamW(p, weight_decay=0.1)
    opt.step(p, {"w": np.array([0.0])}, lr=0.01)
    assert p["w"][0] == pytest.approx(2.0 * (1 - 0.001), abs=1e-15)
    q = {"w": np.array([1.0])}
    AdamW(q, weight_decay=0.0).step(q, {"w": np.array([5.0])}, lr=0.01)
    # first bias-corrected Adam step moves by lr regardless of gradient scale
    assert q["w"][0] == pytest.approx(0.99, abs=1e-9)


# --- training ------------------------------------------------------------------------

def test_patience_zero_stops_at_first_non_improvement(small_data):
    tr, va = small_data
    r = train(tr, va, SMALL, TrainConfig(patience=0, max_epochs=20, batch_size=8))
    aucs = [h["val_auc"] for h in r.history]
    first_bad = next((i for i in range(1, len(aucs)) if aucs[i] <= max(aucs[:i])), None)
    if first_bad is None:
        assert len(aucs) == 20
    else:
        assert len(aucs) == first_bad + 1 and r.stopped_early


def test_training_is_deterministic(small_data):
    tr, va = small_data
    cfg = TrainConfig(max_epochs=3, batch_size=8, seed=4)
    a, b = train(tr, va, SMALL, cfg), train(tr, va, SMALL, cfg)
    assert a.history_jsonl() == b.history_jsonl()
    assert [set(h) for h in a.history][0] == {"epoch", "train_loss", "val_auc", "lr"}


def test_training_rejects_bad_splits(small_data):
    tr, va = small_data
    with pytest.raises(ValueError):
        train(tr, (va[0][:0], va[1][:0], va[2][:0]), SMALL)
    one_class = (tr[0][tr[1] == 1], tr[1][tr[1] == 1], tr[2][tr[1] == 1])
    with pytest.raises(ValueError):
        train(one_class, va, SMALL)


def test_checkpoint_round_trip(small_data, tmp_path):
    tr, va = small_data
    r = train(tr, va, SMALL, TrainConfig(max_epochs=2, batch_size=8))
    p = tmp_path / "m.ckpt"
    Checkpoint.from_training(r).save(p)
    ck = Checkpoint.load(p)
    assert ck.model_cfg == SMALL and ck.epoch == r.best_epoch
    a = predict(r.model, va[0])[1]
    b = predict(ck.build_model(), va[0])[1]
    assert a.tobytes() == b.tobytes()
    assert ck.build_optimizer().step_count == r.optimizer.step_count


def test_checkpoint_rejects_garbage(tmp_path):
    p = tmp_path / "bad.ckpt"
    p.write_bytes(b"not a checkpoint")
    with pytest.raises(CheckpointError):
        Checkpoint.load(p)
