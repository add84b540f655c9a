import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra import numpy as hnp

from tweetaffect.datasets import EI_REG, synth_task_dataset
from tweetaffect.embeddings import EmbeddingMatrix
from tweetaffect.model import ModelConfig, TaskHead, init_model, model_forward
from tweetaffect.text import build_vocab, encode, tokenize
from tweetaffect.training import (
    RD,
    TL_FR,
    TL_FT,
    AdamState,
    Example,
    TrainConfig,
    TrainingError,
    adam_step,
    check_compatible,
    class_weights,
    clip_grad_norm,
    dev_loss,
    global_norm,
    train,
    transfer,
    write_history,
)


def test_class_weights_examples():
    assert np.array_equal(class_weights([0] * 10 + [1] * 10, 2), [1.0, 1.0])
    np.testing.assert_allclose(class_weights([0] * 10 + [1] * 30 + [2] * 60, 3), [100 / 30, 100 / 90, 100 / 180], rtol=1e-15)
    assert np.array_equal(class_weights([0, 0, 0], 1), [1.0])


def test_class_weights_absent_class():
    with pytest.raises(ValueError, match="class 1"):
        class_weights([0, 2, 2], 3)
    with pytest.raises(ValueError):
        class_weights([0, 5], 3)


@given(st.lists(st.integers(0, 3), min_size=4, max_size=30), st.randoms(use_true_random=False))
def test_class_weights_permutation_invariant(labels, rnd):
    if len(set(labels)) < 4:
        return
    shuffled = list(labels)
    rnd.shuffle(shuffled)
    assert np.array_equal(class_weights(labels, 4), class_weights(shuffled, 4))


def test_clip_examples():
    g = {"a": np.array([0.3, 0.4])}
    assert clip_grad_norm(g, 1.0)["a"] is g["a"]
    out = clip_grad_norm({"a": np.array([3.0, 4.0])}, 1.0)
    np.testing.assert_allclose(out["a"], [0.6, 0.8], rtol=0, atol=1e-15)
    z = clip_grad_norm({"a": np.zeros(3), "b": np.zeros((2, 2))}, 1.0)
    assert all(np.all(v == 0) for v in z.values())
    with pytest.raises(ValueError):
        clip_grad_norm(g, 0.0)


@settings(max_examples=200)
@given(
    st.lists(hnp.arrays(np.float64, st.integers(1, 5), elements=st.floats(-1e6, 1e6)), min_size=1, max_size=4),
    st.floats(1e-3, 10.0),
)
def test_clip_bound_property(arrays, max_norm):
    grads = {f"g{i}": a for i, a in enumerate(arrays)}
    out = clip_grad_norm(grads, max_norm)
    assert global_norm(out) <= max_norm + 1e-9


def test_adam_zero_gradient_noop():
    p = {"w": np.array([1.0, -2.0])}
    adam_step(p, {"w": np.zeros(2)}, AdamState())
    assert np.array_equal(p["w"], [1.0, -2.0])


@pytest.mark.parametrize("g", [3.0, -0.02, 1e-3])
def test_adam_first_step(g):
    lr = 1e-3
    p = {"w": np.array([0.5])}
    state = AdamState()
    adam_step(p, {"w": np.array([g])}, state, lr=lr)
    assert abs(p["w"][0] - (0.5 - lr * math.copysign(1, g))) <= lr * 1e-5
    assert state.t == 1


def test_adam_reference_two_steps():
    # textbook update written out by hand
    p = {"w": np.array([1.0])}
    st_ = AdamState()
    gs = [0.5, -0.25]
    w, m, v = 1.0, 0.0, 0.0
    for t, g in enumerate(gs, 1):
        adam_step(p, {"w": np.array([g])}, st_, lr=0.1, beta1=0.9, beta2=0.999, eps=1e-8)
        m = 0.9 * m + 0.1 * g
        v = 0.999 * v + 0.001 * g * g
        w -= 0.1 * (m / (1 - 0.9 ** t)) / (math.sqrt(v / (1 - 0.999 ** t)) + 1e-8)
    assert p["w"][0] == pytest.approx(w, abs=1e-15)


def test_adam_only_updates_given_tensors():
    p = {"a": np.ones(2), "b": np.ones(2)}
    adam_step(p, {"a": np.ones(2)}, AdamState())
    assert np.array_equal(p["b"], np.ones(2)) and not np.array_equal(p["a"], np.ones(2))
    with pytest.raises(ValueError):
        adam_step(p, {"a": np.ones(3)}, AdamState())


def test_train_config_validation():
    for bad in ({"batch_size": 0}, {"clip_norm": 0}, {"patience": 0}, {"mode": "XX"}):
        with pytest.raises(ValueError):
            TrainConfig(**bad)


def small_setup(task=EI_REG, size=16, seed=0, head=TaskHead.regression(), **cfg_kw):
    ds = synth_task_dataset(task, size, seed=seed)
    vocab = build_vocab([tokenize(t) for t in ds.texts()], 1)
    emb = EmbeddingMatrix(vocab, np.random.default_rng(seed).normal(size=(len(vocab), 6)))
    cfg = ModelConfig(embed_dim=6, lstm_size=3, head=head, **cfg_kw)
    data = [Example(encode(tokenize(ex.text), vocab), ex.target) for ex in ds.examples]
    return init_model(cfg, emb, seed), data


def test_train_deterministic_and_frozen_embedding():
    model, data = small_setup()
    emb_before = model.embedding.vectors.copy()
    cfg = TrainConfig(batch_size=4, max_epochs=3, seed=1)
    a, ha = train(model, data[:12], data[12:], cfg)
    b, hb = train(model, data[:12], data[12:], cfg)
    assert all(a.params[n].tobytes() == b.params[n].tobytes() for n in a.params)
    assert [r.train_loss for r in ha] == [r.train_loss for r in hb]
    assert a.embedding.vectors.tobytes() == emb_before.tobytes()
    # the input model is left untouched
    fresh, _ = small_setup()
    assert all(model.params[n].tobytes() == fresh.params[n].tobytes() for n in model.params)


def test_best_model_has_lowest_dev_loss():
    model, data = small_setup(size=20)
    best, hist = train(model, data[:14], data[14:], TrainConfig(batch_size=4, max_epochs=6, patience=2, lr=0.05))
    assert dev_loss(best, data[14:]) == pytest.approx(min(r.dev_loss for r in hist), abs=1e-12)


def test_patience_one_stops_after_two_epochs():
    model, data = small_setup(size=12)
    # dev target opposite to train targets: the first step makes dev worse
    train_set = [Example(ex.indices, 1.0) for ex in data[:6]]
    dev_set = [Example(ex.indices, 0.0) for ex in data[:6]]
    best, hist = train(model, train_set, dev_set, TrainConfig(batch_size=6, max_epochs=10, patience=1, lr=0.05))
    assert len(hist) == 2
    assert hist[1].dev_loss >= hist[0].dev_loss
    assert dev_loss(best, dev_set) == pytest.approx(hist[0].dev_loss, abs=1e-12)


def test_train_empty_sets():
    model, data = small_setup()
    with pytest.raises(ValueError):
        train(model, [], data, TrainConfig())


def test_non_finite_loss_aborts():
    model, data = small_setup()
    bad = [Example(data[0].indices, float("nan"))]
    with pytest.raises((TrainingError, ValueError)):
        train(model, bad, data[:2], TrainConfig(max_epochs=1))


def test_write_history(tmp_path):
    model, data = small_setup()
    _, hist = train(model, data[:8], data[8:], TrainConfig(batch_size=4, max_epochs=2))
    write_history(hist, tmp_path / "h.csv")
    lines = (tmp_path / "h.csv").read_text().splitlines()
    assert lines[0] == "epoch,train_loss,dev_loss,dev_metric"
    assert len(lines) == 1 + len(hist)


def changed(a, b, names):
    return [n for n in names if a.params[n].tobytes() != b.params[n].tobytes()]


def test_transfer_contract():
    model, data = small_setup(head=TaskHead.ordinal(3), size=16, task="pretrain-sentiment")
    tl_head = TaskHead.multilabel(11)
    for mode in (TL_FR, TL_FT):
        m = transfer(model, tl_head, mode, seed=0)
        assert m.params["head.W"].shape == (6, 11)
        assert all(m.params[n].tobytes() == model.params[n].tobytes() for n in model.encoder_names)
        assert m.trainable == (m.head_names if mode == TL_FR else list(m.params))
    with pytest.raises(ValueError):
        transfer(model, tl_head, RD)


def test_transfer_training_freeze():
    pre, data = small_setup(head=TaskHead.ordinal(3), task="pretrain-sentiment", size=16)
    reg_data = [Example(ex.indices, 0.2 + 0.3 * (ex.target / 2)) for ex in data]
    cfg = dict(batch_size=4, max_epochs=2, patience=5, lr=0.01)
    start = transfer(pre, TaskHead.regression(), TL_FR, seed=0)
    fr, _ = train(start, reg_data[:12], reg_data[12:], TrainConfig(mode=TL_FR, **cfg))
    assert changed(fr, start, fr.encoder_names) == []
    assert changed(fr, start, fr.head_names) != []
    start = transfer(pre, TaskHead.regression(), TL_FT, seed=0)
    ft, _ = train(start, reg_data[:12], reg_data[12:], TrainConfig(mode=TL_FT, **cfg))
    assert changed(ft, start, ft.encoder_names) != []
    assert ft.embedding.vectors.tobytes() == pre.embedding.vectors.tobytes()


def test_tl_fr_mode_freezes_even_without_transfer():
    model, data = small_setup()
    out, _ = train(model, data[:8], data[8:], TrainConfig(mode=TL_FR, max_epochs=1, batch_size=4))
    assert changed(out, model, model.encoder_names) == []


def test_check_compatible_lists_tensors():
    pre, _ = small_setup()
    other = ModelConfig(embed_dim=6, lstm_size=4, head=TaskHead.regression())
    with pytest.raises(ValueError, match="lstm.0.fwd.W"):
        check_compatible(pre, other)


def test_ordinal_class_weights_used():
    model, data = small_setup(head=TaskHead.ordinal(4), task="EI-oc", size=12)
    w = np.array([1.0, 2.0, 3.0, 4.0])
    a = dev_loss(model, data)
    b = dev_loss(model, data, w)
    assert b > a
