import math

import numpy as np
import pytest

from tweetaffect.baselines import (
    CLASSIFICATION,
    REGRESSION,
    LinearModel,
    _hinge_objective,
    fit_tfidf,
    nbow_features,
    nbow_matrix,
    predict,
    tfidf_features,
    train_linear_svm,
    train_multilabel_svm,
)
from tweetaffect.embeddings import EmbeddingMatrix
from tweetaffect.lexicon import AffectiveLexicon
from tweetaffect.text import build_vocab, tokenize


def separable(n=40, seed=0, margin=0.5, classes=2):
    rng = np.random.default_rng(seed)
    centers = np.array([[3.0, 0.0], [-3.0, 0.0], [0.0, 3.0]])[:classes]
    y = np.arange(n) % classes
    X = centers[y] + rng.uniform(-margin, margin, size=(n, 2))
    return X, y


def test_idf_formula():
    docs = [["a", "b"], ["a"], ["a", "c", "c"]]
    m = fit_tfidf(docs)
    assert m.idf[m.vocab["a"]] == pytest.approx(1.0, abs=1e-15)
    assert m.idf[m.vocab["c"]] == pytest.approx(math.log(4 / 2) + 1, abs=1e-15)
    X = tfidf_features(docs, m)
    raw = np.array([2 * (math.log(2) + 1), 1.0])  # counts of c and a in doc 3 times idf
    expect = raw / np.linalg.norm(raw)
    assert X[2, m.vocab["c"]] == pytest.approx(expect[0]) and X[2, m.vocab["a"]] == pytest.approx(expect[1])
    np.testing.assert_allclose(np.linalg.norm(X, axis=1), 1.0)


def test_tfidf_empty_and_single():
    m = fit_tfidf([["a", "b"], ["b"]])
    X = tfidf_features([[], ["a"]], m)
    assert np.all(X[0] == 0)
    assert np.count_nonzero(X[1]) == 1 and X[1].max() == 1.0


def test_tfidf_no_leakage():
    m = fit_tfidf([tokenize("happy day"), tokenize("sad day")])
    a = tfidf_features([tokenize("happy unseenword")], m)
    b = tfidf_features([tokenize("happy")], m)
    assert np.array_equal(a, b)
    assert "unseenword" not in m.vocab


def emb_and_lex():
    vocab = build_vocab([["good", "bad", "meh"]], 1)
    rng = np.random.default_rng(0)
    emb = EmbeddingMatrix(vocab, rng.normal(size=(len(vocab), 300)))
    lex = AffectiveLexicon({"good": np.full(10, 0.5)})
    return emb, lex


def test_nbow_examples():
    emb, lex = emb_and_lex()
    assert np.array_equal(nbow_features(["good"], emb), emb["good"])
    with_lex = nbow_features(["good"], emb, lex)
    assert with_lex.shape == (310,)
    np.testing.assert_array_equal(with_lex, np.concatenate([emb["good"], np.full(10, 0.5)]))
    assert np.array_equal(nbow_features(["nope", "nada"], emb), np.zeros(300))
    M = nbow_matrix([["good", "bad"], []], emb, lex)
    assert M.shape == (2, 310)
    assert M.shape[1] == nbow_matrix([["good"]], emb).shape[1] + 10


def test_svm_separable_binary_and_multiclass():
    for classes in (2, 3):
        X, y = separable(classes=classes)
        m = train_linear_svm(X, y, C=0.6)
        assert np.array_equal(predict(m, X), y)


def test_svm_deterministic():
    X, y = separable(seed=3)
    a, b = train_linear_svm(X, y), train_linear_svm(X.copy(), y.copy())
    assert a.W.tobytes() == b.W.tobytes() and a.b.tobytes() == b.b.tobytes()


def test_svm_c_zero_collapses():
    X, y = separable()
    m = train_linear_svm(X, y, C=0.0)
    assert np.all(m.W == 0)
    assert np.all(predict(m, X) == predict(m, X)[0])


def test_svm_small_c_shrinks_weights():
    X, y = separable()
    norms = [np.linalg.norm(train_linear_svm(X, y, C=c).W) for c in (1.0, 0.1, 0.01, 0.001)]
    assert norms == sorted(norms, reverse=True)


def test_svm_objective_non_increasing():
    rng = np.random.default_rng(1)
    X = rng.normal(size=(30, 4))
    y = (X[:, 0] + 0.5 * rng.normal(size=30) > 0).astype(int)
    m = train_linear_svm(X, y, epochs=200)
    hist = m.objective_history[0]
    assert all(b <= a for a, b in zip(hist, hist[1:]))
    assert hist[-1] < hist[0]
    # the binary model scores class 1 with +f
    w, b = m.W[1], m.b[1]
    assert _hinge_objective(w, b, X, np.where(y == 1, 1.0, -1.0), 0.6) == pytest.approx(hist[-1])


def test_svm_single_class_error():
    with pytest.raises(ValueError, match="2 classes"):
        train_linear_svm(np.ones((3, 2)), [1, 1, 1])


def test_predict_tie_and_alignment():
    m = LinearModel(CLASSIFICATION, np.zeros((3, 2)), np.zeros(3), [0, 1, 2])
    assert list(predict(m, np.ones((2, 2)))) == [0, 0]
    m = LinearModel(CLASSIFICATION, np.array([[1.0, 0], [0, 1.0], [-1, -1.0]]), np.zeros(3), [0, 1, 2])
    assert list(predict(m, np.array([[0.0, 5.0], [5.0, 0.0]]))) == [1, 0]
    with pytest.raises(ValueError):
        predict(m, np.ones((1, 3)))


def test_regression_clip_and_fit():
    m = LinearModel(REGRESSION, np.array([[1.0]]), np.array([0.4]))
    assert list(predict(m, np.array([[1.0], [-1.0], [0.1]]))) == pytest.approx([1.0, 0.0, 0.5])
    rng = np.random.default_rng(0)
    X = rng.uniform(-1, 1, size=(50, 2))
    y = np.clip(0.5 + 0.3 * X[:, 0], 0, 1)
    fit = train_linear_svm(X, y, kind=REGRESSION, epochs=1000)
    assert np.max(np.abs(predict(fit, X) - y)) < 0.15


def test_multilabel_svm():
    X, y = separable(classes=2)
    Y = np.column_stack([y, 1 - y, np.zeros_like(y)])
    pred = train_multilabel_svm(X, Y).predict(X)
    assert np.array_equal(pred, Y)


def test_linear_model_save_load(tmp_path):
    X, y = separable(classes=3)
    m = train_linear_svm(X, y)
    m.save(tmp_path / "m.bin")
    back = LinearModel.load(tmp_path / "m.bin")
    assert back.classes == m.classes and back.W.tobytes() == m.W.tobytes()
    assert np.array_equal(predict(back, X), predict(m, X))
