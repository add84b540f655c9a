"""TF-IDF and neural bag-of-words features fed to linear max-margin models."""

from __future__ import annotations

import math
from collections import Counter
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .container import read_container, write_container
from .embeddings import EmbeddingMatrix, centroid
from .lexicon import AffectiveLexicon, compose_embeddings
from .text import encode

BOW = "bow"
NBOW = "nbow"
NBOW_AFFECT = "nbow-affective"

CLASSIFICATION = "classification"
REGRESSION = "regression"
SVR_EPSILON = 0.1


def _surface(t):
    return getattr(t, "surface", t)


@dataclass
class TfidfModel:
    vocab: dict
    idf: np.ndarray
    n_docs: int


def fit_tfidf(docs: Sequence[Sequence]) -> TfidfModel:
    """Vocabulary and ``idf = ln((1 + n) / (1 + df)) + 1`` from training docs only."""
    df: Counter = Counter()
    for doc in docs:
        df.update({_surface(t) for t in doc})
    words = sorted(df)
    n = len(docs)
    idf = np.array([math.log((1 + n) / (1 + df[w])) + 1.0 for w in words])
    return TfidfModel({w: i for i, w in enumerate(words)}, idf, n)


def tfidf_features(docs: Sequence[Sequence], model: TfidfModel) -> np.ndarray:
    """Raw counts times idf, L2-normalized per row; unseen words are ignored."""
    X = np.zeros((len(docs), len(model.vocab)))
    for i, doc in enumerate(docs):
        for t in doc:
            j = model.vocab.get(_surface(t))
            if j is not None:
                X[i, j] += 1.0
    X *= model.idf
    norms = np.linalg.norm(X, axis=1, keepdims=True)
    np.divide(X, norms, out=X, where=norms > 0)
    return X


def nbow_features(tokens: Sequence, emb: EmbeddingMatrix, lex: Optional[AffectiveLexicon] = None) -> np.ndarray:
    """Centroid of the tweet's word vectors, optionally with the ten affect norms appended."""
    if lex is not None:
        emb = compose_embeddings(emb, lex)
    vec, _ = centroid(encode(tokens, emb.vocab), emb)
    return vec


def nbow_matrix(docs: Sequence[Sequence], emb: EmbeddingMatrix, lex: Optional[AffectiveLexicon] = None) -> np.ndarray:
    if lex is not None:
        emb = compose_embeddings(emb, lex)
    return np.array([centroid(encode(d, emb.vocab), emb)[0] for d in docs]).reshape(len(docs), emb.dim)


# linear max-margin models ---------------------------------------------------------


@dataclass
class LinearModel:
    """One weight row per output; ``classes`` is empty for regression."""

    kind: str
    W: np.ndarray
    b: np.ndarray
    classes: list = field(default_factory=list)
    objective_history: list = field(default_factory=list)

    @property
    def n_features(self) -> int:
        return self.W.shape[1]

    def decision_function(self, X) -> np.ndarray:
        X = np.asarray(X, dtype=np.float64)
        if X.ndim != 2 or X.shape[1] != self.n_features:
            raise ValueError(f"expected {self.n_features} features, got array of shape {X.shape}")
        return X @ self.W.T + self.b

    def save(self, path) -> None:
        meta = {"format": "linear-model 1", "kind": self.kind, "classes": " ".join(str(c) for c in self.classes)}
        write_container(path, meta, [("W", self.W), ("b", self.b)])

    @classmethod
    def load(cls, path) -> "LinearModel":
        meta, tensors, _ = read_container(path)
        if meta.get("format") != "linear-model 1":
            raise ValueError(f"{path}: not a linear model file")
        classes = [int(c) for c in meta.get("classes", "").split()]
        return cls(meta["kind"], tensors["W"], tensors["b"], classes)


def _hinge_objective(w, b, X, y, C):
    margins = 1.0 - y * (X @ w + b)
    return 0.5 * float(w @ w) + C * float(np.maximum(0.0, margins).sum())


def _hinge_subgradient(w, b, X, y, C):
    active = (1.0 - y * (X @ w + b)) > 0
    coef = -C * y * active
    return w + X.T @ coef, float(coef.sum())


def _eps_objective(w, b, X, y, C, eps=SVR_EPSILON):
    r = np.abs(y - (X @ w + b)) - eps
    return 0.5 * float(w @ w) + C * float(np.maximum(0.0, r).sum())


def _eps_subgradient(w, b, X, y, C, eps=SVR_EPSILON):
    resid = (X @ w + b) - y
    coef = C * np.sign(resid) * (np.abs(resid) > eps)
    return w + X.T @ coef, float(coef.sum())


def _descend(objective, subgradient, X, y, C, epochs, step0):
    """Full-batch sub-gradient descent with steps ``step0 / sqrt(t)``.

    Each step has unit-normalized direction. The best iterate seen so far is
    kept, so the recorded objective is non-increasing.
    """
    w = np.zeros(X.shape[1])
    b = 0.0
    f = objective(w, b, X, y, C)
    best = (w, b, f)
    history = [f]
    for t in range(1, epochs + 1):
        gw, gb = subgradient(w, b, X, y, C)
        gnorm = math.sqrt(float(gw @ gw) + gb * gb)
        if gnorm == 0.0:
            break
        step = step0 / math.sqrt(t)
        w = w - (step / gnorm) * gw
        b = b - (step / gnorm) * gb
        f = objective(w, b, X, y, C)
        if f < best[2]:
            best = (w, b, f)
        history.append(best[2])
    return best[0], best[1], history


def train_linear_svm(
    X, y, C: float = 0.6, kind: str = CLASSIFICATION, epochs: int = 500, step0: float = 1.0
) -> LinearModel:
    """Linear SVM (one-vs-rest hinge) or epsilon-insensitive linear regression.

    Objective per binary problem: ``0.5 |w|^2 + C * sum(loss)``; the bias is
    not regularized. Fully deterministic.
    """
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y)
    if X.ndim != 2 or len(X) != len(y):
        raise ValueError("X must be 2-d with one row per target")
    if C < 0:
        raise ValueError("C must be >= 0")
    if kind == REGRESSION:
        y = y.astype(np.float64)
        w, b, hist = _descend(_eps_objective, _eps_subgradient, X, y, C, epochs, step0)
        return LinearModel(REGRESSION, w[None, :], np.array([b]), [], hist)
    if kind != CLASSIFICATION:
        raise ValueError(f"unknown model kind {kind!r}")
    classes = sorted({int(c) for c in y})
    if len(classes) < 2:
        raise ValueError("classification needs at least 2 classes")
    problems = classes if len(classes) > 2 else classes[1:]
    W, B, hist = [], [], []
    for c in problems:
        yy = np.where(y == c, 1.0, -1.0)
        w, b, h = _descend(_hinge_objective, _hinge_subgradient, X, yy, C, epochs, step0)
        W.append(w)
        B.append(b)
        hist.append(h)
    if len(classes) == 2:
        # binary: a single separating hyperplane, scored as (-f, f)
        W = [-W[0], W[0]]
        B = [-B[0], B[0]]
    return LinearModel(CLASSIFICATION, np.array(W), np.array(B), classes, hist)


def predict(model: LinearModel, X) -> np.ndarray:
    """Class labels (argmax, ties to the lowest class) or scores clipped to [0, 1]."""
    scores = model.decision_function(X)
    if model.kind == REGRESSION:
        return np.clip(scores[:, 0], 0.0, 1.0)
    return np.asarray(model.classes)[np.argmax(scores, axis=1)]


@dataclass
class MultiLabelSVM:
    """Independent binary SVM per label; constant labels are predicted as constants."""

    models: list

    def predict(self, X) -> np.ndarray:
        cols = []
        for m in self.models:
            if isinstance(m, int):
                cols.append(np.full(len(X), m))
            else:
                cols.append(predict(m, X))
        return np.column_stack(cols).astype(np.int64)


def train_multilabel_svm(X, Y, C: float = 0.6, epochs: int = 500) -> MultiLabelSVM:
    Y = np.asarray(Y, dtype=np.int64)
    models = []
    for j in range(Y.shape[1]):
        col = Y[:, j]
        if col.min() == col.max():
            models.append(int(col[0]))
        else:
            models.append(train_linear_svm(X, col, C, CLASSIFICATION, epochs))
    return MultiLabelSVM(models)
