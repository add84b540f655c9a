"""Skip-gram negative-sampling embeddings, similarity and text-format persistence."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional, Sequence

import numpy as np

from .text import SPECIALS, Vocabulary, build_vocab, encode


@dataclass
class SgnsConfig:
    dim: int = 100
    window: int = 5
    negatives: int = 5
    min_count: int = 20
    epochs: int = 5
    learning_rate: float = 0.025
    seed: int = 0

    def __post_init__(self):
        for name in ("dim", "window", "negatives", "min_count", "epochs"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be >= 1")
        if not self.learning_rate > 0:
            raise ValueError("learning_rate must be positive")


class EmbeddingMatrix:
    """One row per vocabulary index; the ``<pad>`` row is all zeros."""

    def __init__(self, vocab: Vocabulary, vectors: np.ndarray):
        vectors = np.asarray(vectors, dtype=np.float64)
        if vectors.ndim != 2 or vectors.shape[0] != len(vocab):
            raise ValueError(
                f"expected {len(vocab)} rows, got array of shape {vectors.shape}"
            )
        if vectors.shape[1] < 1:
            raise ValueError("embedding dimension must be >= 1")
        if not np.all(np.isfinite(vectors)):
            raise ValueError("embedding contains non-finite values")
        vectors = vectors.copy()
        vectors[vocab.pad_index] = 0.0
        self.vocab = vocab
        self.vectors = vectors

    @property
    def dim(self) -> int:
        return self.vectors.shape[1]

    def __len__(self):
        return self.vectors.shape[0]

    def __getitem__(self, word) -> np.ndarray:
        return self.vectors[self.vocab[word]]

    def save_text(self, path) -> None:
        save_text(self, path)

    @classmethod
    def load_text(cls, path) -> "EmbeddingMatrix":
        return load_text(path)


def cosine(u, v) -> float:
    u = np.asarray(u, dtype=np.float64)
    v = np.asarray(v, dtype=np.float64)
    if u.shape != v.shape:
        raise ValueError(f"length mismatch: {u.shape} vs {v.shape}")
    nu = np.linalg.norm(u)
    nv = np.linalg.norm(v)
    if nu == 0.0 or nv == 0.0:
        raise ValueError("undefined cosine: zero vector")
    return float(np.clip(np.dot(u, v) / (nu * nv), -1.0, 1.0))


def centroid(indices: Sequence[int], emb: EmbeddingMatrix) -> tuple[np.ndarray, bool]:
    """Mean of the rows of in-vocabulary indices.

    ``<unk>`` and ``<pad>`` rows are left out. Returns ``(vector, all_oov)``;
    when nothing is left the vector is zero and ``all_oov`` is True.
    """
    skip = (emb.vocab.unk_index, emb.vocab.pad_index)
    keep = [i for i in indices if i not in skip]
    if not keep:
        return np.zeros(emb.dim), True
    return emb.vectors[keep].mean(axis=0), False


def _fmt(x: float) -> str:
    return format(float(x), ".8g")


def save_text(emb: EmbeddingMatrix, path) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(f"{len(emb)} {emb.dim}\n")
        for word, row in zip(emb.vocab.words, emb.vectors):
            fh.write(word + " " + " ".join(_fmt(x) for x in row) + "\n")


def load_text(path) -> EmbeddingMatrix:
    """Read the ``<count> <dim>`` header format.

    Missing specials are added with zero rows so the result always carries a
    full special block; counts are not stored in this format and load as 0.
    """
    with open(path, encoding="utf-8") as fh:
        lines = fh.read().splitlines()
    if not lines or not lines[0].strip():
        raise ValueError(f"{path}: missing header")
    header = lines[0].split()
    try:
        count, dim = int(header[0]), int(header[1])
        if len(header) != 2 or count < 0 or dim < 1:
            raise ValueError
    except (ValueError, IndexError):
        raise ValueError(f"{path}:1: malformed header {lines[0]!r}") from None

    words: list[str] = []
    rows: list[list[float]] = []
    seen: set[str] = set()
    for lineno, line in enumerate(lines[1:], 2):
        if not line.strip():
            continue
        parts = line.rstrip().split(" ")
        word, values = parts[0], parts[1:]
        if len(values) != dim:
            raise ValueError(f"{path}:{lineno}: expected {dim} values, found {len(values)}")
        if word in seen:
            raise ValueError(f"{path}:{lineno}: duplicate word {word!r}")
        try:
            rows.append([float(x) for x in values])
        except ValueError:
            raise ValueError(f"{path}:{lineno}: non-numeric value") from None
        seen.add(word)
        words.append(word)
    if len(words) != count:
        raise ValueError(f"{path}: header declares {count} rows, found {len(words)}")

    table = dict(zip(words, rows))
    ordered = [w for w in SPECIALS] + [w for w in words if w not in SPECIALS]
    vocab = Vocabulary(tuple((w, 0) for w in ordered))
    vectors = np.array([table.get(w, [0.0] * dim) for w in ordered], dtype=np.float64)
    return EmbeddingMatrix(vocab, vectors.reshape(len(ordered), dim))


def _sigmoid(x):
    return 0.5 * (1.0 + np.tanh(0.5 * x))


def _noise_distribution(vocab: Vocabulary) -> np.ndarray:
    counts = np.array([c for _, c in vocab.entries], dtype=np.float64)
    counts[vocab.unk_index] = 0.0
    counts[vocab.pad_index] = 0.0
    weights = counts ** 0.75
    return weights / weights.sum()


def _training_pairs(sequences: list[np.ndarray], window: int) -> np.ndarray:
    pairs = []
    for seq in sequences:
        n = len(seq)
        for i in range(n):
            for j in range(max(0, i - window), min(n, i + window + 1)):
                if j != i:
                    pairs.append((seq[i], seq[j]))
    return np.array(pairs, dtype=np.int64).reshape(-1, 2)


def _prepare(corpus, cfg: SgnsConfig):
    vocab = build_vocab(corpus, cfg.min_count)
    trainable = [i for i, (_, c) in enumerate(vocab.entries) if c > 0 and i > vocab.pad_index]
    if not trainable:
        raise ValueError("no trainable tokens")
    sequences = []
    for seq in corpus:
        ids = np.array(encode(seq, vocab), dtype=np.int64)
        sequences.append(ids[ids > vocab.pad_index])
    return vocab, sequences


def expected_sgns_loss(
    w_in: np.ndarray, w_out: np.ndarray, pairs: np.ndarray, noise: np.ndarray, negatives: int
) -> float:
    """Mean SGNS loss over ``pairs`` with the negative term taken in expectation."""
    v = w_in[pairs[:, 0]]
    u = w_out[pairs[:, 1]]
    pos = np.logaddexp(0.0, -np.einsum("ij,ij->i", u, v))
    neg = np.logaddexp(0.0, v @ w_out.T) @ noise
    return float(np.mean(pos + negatives * neg))


def train_skipgram(
    corpus: Sequence[Sequence],
    cfg: SgnsConfig,
    callback: Optional[Callable[[int, np.ndarray, np.ndarray], None]] = None,
    return_output: bool = False,
):
    """Train skip-gram embeddings with negative sampling, serially.

    Every (center, context) pair inside the window gets one SGD step on
    ``-log s(u_o.v_c) - sum_k log s(-u_k.v_c)`` with ``negatives`` noise words
    drawn from the unigram distribution raised to 0.75. The learning rate
    decays linearly to 1e-4 of its start value over all pairs. Output is
    bitwise reproducible for a given ``cfg.seed``.

    ``callback(epoch, w_in, w_out)`` is invoked after every epoch.
    """
    vocab, sequences = _prepare(corpus, cfg)
    pairs = _training_pairs(sequences, cfg.window)
    if len(pairs) == 0:
        raise ValueError("no trainable tokens")

    rng = np.random.default_rng(cfg.seed)
    V, D = len(vocab), cfg.dim
    w_in = (rng.random((V, D)) - 0.5) / D
    w_out = np.zeros((V, D))
    noise_cdf = np.cumsum(_noise_distribution(vocab))
    noise_cdf[-1] = 1.0

    total = cfg.epochs * len(pairs)
    lr0, lr_min = cfg.learning_rate, cfg.learning_rate * 1e-4
    step = 0
    K = cfg.negatives
    for epoch in range(cfg.epochs):
        order = rng.permutation(len(pairs))
        negs = np.searchsorted(noise_cdf, rng.random((len(pairs), K)), side="right")
        for p in order:
            c, o = pairs[p]
            lr = lr0 - (lr0 - lr_min) * step / total
            step += 1
            targets = np.empty(K + 1, dtype=np.int64)
            targets[0] = o
            targets[1:] = negs[p]
            labels = np.zeros(K + 1)
            labels[0] = 1.0
            v = w_in[c]
            u = w_out[targets]
            g = (_sigmoid(u @ v) - labels) * lr
            grad_v = g @ u
            np.subtract.at(w_out, targets, np.outer(g, v))
            w_in[c] -= grad_v
        if callback is not None:
            callback(epoch, w_in, w_out)

    trained = np.zeros(V, dtype=bool)
    trained[[i for i, (_, cnt) in enumerate(vocab.entries) if cnt > 0]] = True
    trained[: vocab.pad_index + 1] = False
    w_in[~trained] = 0.0
    emb = EmbeddingMatrix(vocab, w_in)
    if return_output:
        return emb, w_out
    return emb
