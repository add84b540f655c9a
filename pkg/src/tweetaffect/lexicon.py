"""Affective lexicon expansion from small seed lexica.

A word's rating along one affect dimension is modelled as a linear
combination of the seed ratings, each scaled by the contextual similarity of
the word to that seed:

    rating(w) = a0 + sum_i a_i * rating(seed_i) * sim(seed_i, w)

Similarity is the cosine between positive-PMI weighted co-occurrence rows.
The weights ``a`` are fitted by ridge least squares over all annotated words.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np
from scipy import sparse

from .embeddings import EmbeddingMatrix
from .text import Vocabulary, encode

DIMENSIONS = (
    "valence",
    "dominance",
    "arousal",
    "pleasantness",
    "anger",
    "sadness",
    "fear",
    "disgust",
    "concreteness",
    "familiarity",
)


@dataclass
class SeedLexicon:
    dimension: str
    ratings: dict

    def __post_init__(self):
        if self.dimension not in DIMENSIONS:
            raise ValueError(f"unknown affect dimension {self.dimension!r}")
        for word, r in self.ratings.items():
            if not -1.0 <= r <= 1.0:
                raise ValueError(f"{self.dimension}: rating {r} for {word!r} outside [-1, 1]")
        if len(self.ratings) < 2:
            raise ValueError(f"{self.dimension}: need at least 2 annotated words")

    @classmethod
    def load(cls, path, dimension: str | None = None) -> "SeedLexicon":
        path = Path(path)
        dimension = dimension or path.stem
        ratings = {}
        with open(path, encoding="utf-8") as fh:
            for lineno, line in enumerate(fh, 1):
                line = line.rstrip("\r\n")
                if not line:
                    continue
                parts = line.split("\t")
                if len(parts) != 2:
                    raise ValueError(f"{path}:{lineno}: expected 'word<TAB>rating'")
                try:
                    ratings[parts[0]] = float(parts[1])
                except ValueError:
                    raise ValueError(f"{path}:{lineno}: bad rating {parts[1]!r}") from None
        return cls(dimension, ratings)

    def save(self, path) -> None:
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            for word in sorted(self.ratings):
                fh.write(f"{word}\t{self.ratings[word]!r}\n")


def load_seed_dir(directory) -> dict[str, SeedLexicon]:
    """Load every ``<dimension>.tsv`` present in ``directory``."""
    directory = Path(directory)
    out = {}
    for dim in DIMENSIONS:
        path = directory / f"{dim}.tsv"
        if path.exists():
            out[dim] = SeedLexicon.load(path, dim)
    if not out:
        raise ValueError(f"{directory}: no seed lexicon files found")
    return out


class ContextModel:
    """PPMI-weighted word-by-context matrix with rows in vocabulary order."""

    def __init__(self, vocab: Vocabulary, weights, window: int = 5):
        weights = sparse.csr_matrix(weights, dtype=np.float64)
        if weights.shape[0] != len(vocab):
            raise ValueError("one row per vocabulary entry required")
        if weights.nnz and weights.data.min() < 0:
            raise ValueError("PPMI weights must be nonnegative")
        self.vocab = vocab
        self.weights = weights
        self.window = window
        norms = np.sqrt(np.asarray(weights.multiply(weights).sum(axis=1)).ravel())
        inv = np.divide(1.0, norms, out=np.zeros_like(norms), where=norms > 0)
        self._unit = sparse.diags(inv) @ weights

    def row_index(self, word: str) -> int:
        i = self.vocab.get(word)
        if i is None:
            raise KeyError(f"word not in context vocabulary: {word!r}")
        return i

    def similarities(self, word: str) -> np.ndarray:
        """Similarity of ``word`` to every vocabulary entry."""
        row = self._unit[self.row_index(word)]
        return np.clip((self._unit @ row.T).toarray().ravel(), 0.0, 1.0)

    def similarity_matrix(self, rows: Sequence[str], cols: Sequence[str]) -> np.ndarray:
        a = self._unit[[self.row_index(w) for w in rows]]
        b = self._unit[[self.row_index(w) for w in cols]]
        return np.clip((a @ b.T).toarray(), 0.0, 1.0)


def ppmi(counts) -> sparse.csr_matrix:
    """Positive PMI of a co-occurrence count matrix (natural log)."""
    counts = sparse.csr_matrix(counts, dtype=np.float64)
    total = counts.sum()
    if total == 0:
        return sparse.csr_matrix(counts.shape)
    row = np.asarray(counts.sum(axis=1)).ravel()
    col = np.asarray(counts.sum(axis=0)).ravel()
    coo = counts.tocoo()
    keep = coo.data > 0
    r, c, d = coo.row[keep], coo.col[keep], coo.data[keep]
    pmi = np.log(d * total / (row[r] * col[c]))
    pos = pmi > 0
    return sparse.csr_matrix((pmi[pos], (r[pos], c[pos])), shape=counts.shape)


def cooccurrence_counts(corpus, vocab: Vocabulary, window: int) -> sparse.csr_matrix:
    rows, cols = [], []
    for seq in corpus:
        ids = np.array(encode(seq, vocab), dtype=np.int64)
        # <unk> and <pad> carry no context information
        ids = ids[ids > vocab.pad_index]
        n = len(ids)
        for off in range(1, window + 1):
            if off >= n:
                break
            rows.append(ids[:-off])
            cols.append(ids[off:])
    V = len(vocab)
    if not rows:
        return sparse.csr_matrix((V, V))
    r = np.concatenate(rows)
    c = np.concatenate(cols)
    m = sparse.coo_matrix((np.ones(len(r)), (r, c)), shape=(V, V)).tocsr()
    m.sum_duplicates()
    return (m + m.T).tocsr()


def build_context_model(corpus, vocab: Vocabulary, window: int = 5) -> ContextModel:
    if window < 1:
        raise ValueError("window must be >= 1")
    return ContextModel(vocab, ppmi(cooccurrence_counts(corpus, vocab, window)), window)


def semantic_similarity(w1: str, w2: str, ctx: ContextModel) -> float:
    return float(ctx.similarity_matrix([w1], [w2])[0, 0])


def select_seeds(seed_lex: SeedLexicon, ctx: ContextModel, n: int = 50) -> list[str]:
    """The ``n`` strongest-polarity annotated words that the context model knows."""
    if n < 1:
        raise ValueError("n must be >= 1")
    usable = [w for w in seed_lex.ratings if w in ctx.vocab]
    if not usable:
        raise ValueError(f"no usable seeds for {seed_lex.dimension}")
    usable.sort(key=lambda w: (-abs(seed_lex.ratings[w]), w))
    return usable[:n]


@dataclass
class AffectModel:
    dimension: str
    seeds: list
    seed_ratings: np.ndarray
    alpha0: float
    alphas: np.ndarray
    ridge: float = 1e-3

    def __post_init__(self):
        self.alphas = np.asarray(self.alphas, dtype=np.float64)
        self.seed_ratings = np.asarray(self.seed_ratings, dtype=np.float64)
        if len(self.alphas) != len(self.seeds) or len(self.seed_ratings) != len(self.seeds):
            raise ValueError("one weight and one rating per seed required")
        if not (np.isfinite(self.alpha0) and np.all(np.isfinite(self.alphas))):
            raise ValueError("non-finite affect model coefficients")


def design_matrix(words: Sequence[str], seeds: Sequence[str], seed_ratings, ctx: ContextModel) -> np.ndarray:
    """Rows ``[1, r(t_1) S(t_1, w), ..., r(t_N) S(t_N, w)]`` for each word."""
    sim = ctx.similarity_matrix(words, seeds) if len(seeds) else np.zeros((len(words), 0))
    return np.hstack([np.ones((len(words), 1)), sim * np.asarray(seed_ratings)[None, :]])


def fit_affect_model(
    seed_lex: SeedLexicon, seeds: Sequence[str], ctx: ContextModel, ridge: float = 1e-3
) -> AffectModel:
    """Ridge least squares for the intercept and per-seed weights.

    Trained on every annotated word in the context vocabulary. The intercept
    is not penalized, so a very large ridge drives it to the mean rating.
    """
    if ridge < 0:
        raise ValueError("ridge must be >= 0")
    words = sorted(w for w in seed_lex.ratings if w in ctx.vocab)
    if not words:
        raise ValueError(f"no usable seeds for {seed_lex.dimension}")
    seeds = list(seeds)
    ratings = np.array([seed_lex.ratings[t] for t in seeds])
    X = design_matrix(words, seeds, ratings, ctx)
    y = np.array([seed_lex.ratings[w] for w in words])
    penalty = np.full(X.shape[1], float(ridge))
    penalty[0] = 0.0
    A = X.T @ X + np.diag(penalty)
    if np.linalg.matrix_rank(A) < A.shape[0]:
        raise ValueError(
            f"{seed_lex.dimension}: singular least-squares system; use ridge > 0"
        )
    coef = np.linalg.solve(A, X.T @ y)
    return AffectModel(seed_lex.dimension, seeds, ratings, float(coef[0]), coef[1:], ridge)


def predict_raw(words: Sequence[str], model: AffectModel, ctx: ContextModel) -> np.ndarray:
    X = design_matrix(words, model.seeds, model.seed_ratings, ctx)
    return X @ np.concatenate([[model.alpha0], model.alphas])


def predict_norm(word: str, model: AffectModel, ctx: ContextModel) -> float:
    return float(np.clip(predict_raw([word], model, ctx)[0], -1.0, 1.0))


class AffectiveLexicon:
    """Ten affect norms per word, in ``DIMENSIONS`` order."""

    def __init__(self, norms: Mapping[str, Sequence[float]]):
        self.norms: dict[str, np.ndarray] = {}
        for word, vec in norms.items():
            vec = np.asarray(vec, dtype=np.float64)
            if vec.shape != (len(DIMENSIONS),):
                raise ValueError(f"{word!r}: expected {len(DIMENSIONS)} norms")
            if np.any(np.abs(vec) > 1.0) or not np.all(np.isfinite(vec)):
                raise ValueError(f"{word!r}: norms must lie in [-1, 1]")
            self.norms[word] = vec

    def __contains__(self, word):
        return word in self.norms

    def __len__(self):
        return len(self.norms)

    def get(self, word: str) -> np.ndarray:
        return self.norms.get(word, np.zeros(len(DIMENSIONS)))

    def save(self, path) -> None:
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            fh.write("word\t" + "\t".join(DIMENSIONS) + "\n")
            for word, vec in self.norms.items():
                fh.write(word + "\t" + "\t".join(format(float(x), ".8g") for x in vec) + "\n")

    @classmethod
    def load(cls, path) -> "AffectiveLexicon":
        with open(path, encoding="utf-8") as fh:
            lines = fh.read().splitlines()
        if not lines or lines[0].split("\t")[1:] != list(DIMENSIONS):
            raise ValueError(f"{path}:1: header must name the ten dimensions in order")
        norms = {}
        for lineno, line in enumerate(lines[1:], 2):
            if not line:
                continue
            parts = line.split("\t")
            if len(parts) != len(DIMENSIONS) + 1:
                raise ValueError(f"{path}:{lineno}: expected {len(DIMENSIONS) + 1} columns")
            try:
                norms[parts[0]] = [float(x) for x in parts[1:]]
            except ValueError:
                raise ValueError(f"{path}:{lineno}: non-numeric norm") from None
        try:
            return cls(norms)
        except ValueError as exc:
            raise ValueError(f"{path}: {exc}") from None


def expand_lexicon(vocab: Vocabulary, models: Mapping[str, AffectModel], ctx: ContextModel) -> AffectiveLexicon:
    """Predict all ten norms for every vocabulary word (specials excluded)."""
    for dim in DIMENSIONS:
        if dim not in models:
            raise ValueError(f"missing affect model for dimension {dim!r}")
    words = [w for i, w in enumerate(vocab.words) if not vocab.is_special(i)]
    words = [w for w in words if w in ctx.vocab]
    if not words:
        return AffectiveLexicon({})
    cols = [np.clip(predict_raw(words, models[dim], ctx), -1.0, 1.0) for dim in DIMENSIONS]
    table = np.column_stack(cols)
    return AffectiveLexicon(dict(zip(words, table)))


def fit_lexicon(
    seed_lexica: Mapping[str, SeedLexicon], ctx: ContextModel, n_seeds: int = 50, ridge: float = 1e-3
) -> dict[str, AffectModel]:
    models = {}
    for dim in DIMENSIONS:
        if dim not in seed_lexica:
            raise ValueError(f"missing seed lexicon for dimension {dim!r}")
        seeds = select_seeds(seed_lexica[dim], ctx, n_seeds)
        models[dim] = fit_affect_model(seed_lexica[dim], seeds, ctx, ridge)
    return models


def compose_embeddings(emb: EmbeddingMatrix, lex: AffectiveLexicon) -> EmbeddingMatrix:
    """Append the ten norms to every embedding row; unknown words get zeros."""
    extra = np.array([lex.get(w) for w in emb.vocab.words]).reshape(len(emb), len(DIMENSIONS))
    return EmbeddingMatrix(emb.vocab, np.hstack([emb.vectors, extra]))
