"""Embedding -> stacked BiLSTM -> deep self-attention -> task head.

Each sequence is processed at its natural length on its own
:class:`~tweetaffect.autograd.Graph`; there is no padding.
"""

from __future__ import annotations

import copy
from dataclasses import dataclass, fields
from typing import Optional, Sequence

import numpy as np

from .autograd import GradCheckReport, Graph, Node, check_gradients
from .container import read_container, write_container
from .embeddings import EmbeddingMatrix
from .text import Vocabulary

REGRESSION = "regression"
ORDINAL = "ordinal"
MULTILABEL = "multilabel"

TRAIN = "train"
EVAL = "eval"

PROB_FLOOR = 1e-7


@dataclass(frozen=True)
class TaskHead:
    kind: str = REGRESSION
    size: int = 1

    def __post_init__(self):
        if self.kind == REGRESSION:
            if self.size != 1:
                raise ValueError("regression head has exactly one output")
        elif self.kind == ORDINAL:
            if self.size < 2:
                raise ValueError("ordinal head needs k >= 2 classes")
        elif self.kind == MULTILABEL:
            if self.size < 1:
                raise ValueError("multilabel head needs m >= 1 labels")
        else:
            raise ValueError(f"unknown head kind {self.kind!r}")

    @classmethod
    def regression(cls):
        return cls(REGRESSION, 1)

    @classmethod
    def ordinal(cls, k: int):
        return cls(ORDINAL, k)

    @classmethod
    def multilabel(cls, m: int = 11):
        return cls(MULTILABEL, m)

    def __str__(self):
        return f"{self.kind} {self.size}"

    @classmethod
    def parse(cls, text: str) -> "TaskHead":
        kind, size = text.split()
        return cls(kind, int(size))


@dataclass
class ModelConfig:
    embed_dim: int = 310
    lstm_size: int = 250
    lstm_layers: int = 2
    attention_layers: int = 2
    attention_hidden: Optional[int] = None
    noise_sigma: float = 0.2
    embed_dropout: float = 0.1
    repr_dropout: float = 0.3
    head: TaskHead = TaskHead()

    def __post_init__(self):
        if self.attention_hidden is None:
            self.attention_hidden = 2 * self.lstm_size
        for name in ("embed_dim", "lstm_size", "lstm_layers", "attention_layers", "attention_hidden"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be >= 1")
        for name in ("embed_dropout", "repr_dropout"):
            if not 0.0 <= getattr(self, name) < 1.0:
                raise ValueError(f"{name} must lie in [0, 1)")
        if self.noise_sigma < 0:
            raise ValueError("noise_sigma must be >= 0")

    def encoder_shapes(self) -> list[tuple[str, tuple]]:
        L, H = self.lstm_size, self.attention_hidden
        shapes = []
        for layer in range(self.lstm_layers):
            fan_in = self.embed_dim if layer == 0 else 2 * L
            for d in ("fwd", "bwd"):
                p = f"lstm.{layer}.{d}"
                shapes += [(f"{p}.W", (fan_in, 4 * L)), (f"{p}.U", (L, 4 * L)), (f"{p}.b", (4 * L,))]
        width = 2 * L
        for k in range(self.attention_layers - 1):
            shapes += [(f"attn.{k}.W", (width, H)), (f"attn.{k}.b", (H,))]
            width = H
        k = self.attention_layers - 1
        shapes += [(f"attn.{k}.W", (width, 1)), (f"attn.{k}.b", (1,))]
        return shapes

    def head_shapes(self) -> list[tuple[str, tuple]]:
        return [("head.W", (2 * self.lstm_size, self.head.size)), ("head.b", (self.head.size,))]

    def to_meta(self) -> dict[str, str]:
        return {f"config.{f.name}": str(getattr(self, f.name)) for f in fields(self)}

    @classmethod
    def from_meta(cls, meta: dict) -> "ModelConfig":
        kw = {}
        for f in fields(cls):
            raw = meta.get(f"config.{f.name}")
            if raw is None:
                raise ValueError(f"checkpoint lacks config field {f.name}")
            if f.name == "head":
                kw[f.name] = TaskHead.parse(raw)
            elif f.name in ("noise_sigma", "embed_dropout", "repr_dropout"):
                kw[f.name] = float(raw)
            else:
                kw[f.name] = int(raw)
        return cls(**kw)


def _init_tensor(name: str, shape: tuple, rng: np.random.Generator, lstm_size: int) -> np.ndarray:
    if len(shape) == 1:
        b = np.zeros(shape)
        if name.startswith("lstm."):
            b[lstm_size : 2 * lstm_size] = 1.0  # forget gate
        return b
    bound = 1.0 / np.sqrt(shape[0])
    return rng.uniform(-bound, bound, size=shape)


class Model:
    """Configuration, frozen embedding table and trainable tensors.

    ``frozen`` names tensors that training must not touch; the embedding is
    never among ``params`` and so is never trained.
    """

    def __init__(self, config: ModelConfig, embedding: EmbeddingMatrix, params: dict, frozen=()):
        if embedding.dim != config.embed_dim:
            raise ValueError(f"embedding dim {embedding.dim} != config embed_dim {config.embed_dim}")
        expected = dict(config.encoder_shapes() + config.head_shapes())
        bad = [
            f"{n}: expected {s}, got {None if n not in params else params[n].shape}"
            for n, s in expected.items()
            if n not in params or params[n].shape != s
        ]
        bad += [f"{n}: unexpected tensor" for n in params if n not in expected]
        if bad:
            raise ValueError("parameter shape mismatch: " + "; ".join(bad))
        self.config = config
        self.embedding = embedding
        self.params = {n: np.asarray(params[n], dtype=np.float64) for n in expected}
        self.frozen = set(frozen)

    @property
    def encoder_names(self) -> list[str]:
        return [n for n, _ in self.config.encoder_shapes()]

    @property
    def head_names(self) -> list[str]:
        return [n for n, _ in self.config.head_shapes()]

    @property
    def trainable(self) -> list[str]:
        return [n for n in self.params if n not in self.frozen]

    def copy(self) -> "Model":
        return Model(self.config, self.embedding, {n: v.copy() for n, v in self.params.items()}, self.frozen)

    def save(self, path, meta: Optional[dict] = None) -> None:
        save_checkpoint(self, path, meta)


def init_model(config: ModelConfig, embedding: EmbeddingMatrix, seed: int = 0) -> Model:
    rng = np.random.default_rng(seed)
    params = {
        name: _init_tensor(name, shape, rng, config.lstm_size)
        for name, shape in config.encoder_shapes() + config.head_shapes()
    }
    return Model(config, embedding, params)


def init_head(config: ModelConfig, seed: int) -> dict[str, np.ndarray]:
    rng = np.random.default_rng(seed)
    return {name: _init_tensor(name, shape, rng, config.lstm_size) for name, shape in config.head_shapes()}


# graph-level building blocks -------------------------------------------------


def embed_forward(g: Graph, indices: Sequence[int], embedding: EmbeddingMatrix, cfg: ModelConfig, mode: str) -> Node:
    """Rows of the (constant) embedding table; noise then dropout in training."""
    idx = np.asarray(indices, dtype=np.int64)
    if idx.size and (idx.min() < 0 or idx.max() >= len(embedding)):
        raise IndexError(f"token index out of range for vocabulary of size {len(embedding)}")
    x = g.const(embedding.vectors[idx])
    if mode == TRAIN:
        if cfg.noise_sigma > 0:
            x = g.gaussian_noise(x, cfg.noise_sigma)
        if cfg.embed_dropout > 0:
            x = g.dropout(x, cfg.embed_dropout)
    return x


def _lstm_step(g: Graph, zx: Node, h: Optional[Node], c: Optional[Node], U: Node, L: int):
    z = zx if h is None else zx + h @ U
    gates = g.sigmoid(z)
    i, f, o = gates[0:L], gates[L : 2 * L], gates[3 * L : 4 * L]
    cand = g.tanh(z[2 * L : 3 * L])
    c_new = i * cand if c is None else f * c + i * cand
    h_new = o * g.tanh(c_new)
    return h_new, c_new


def lstm_cell(g: Graph, x_t: Node, h_prev: Node, c_prev: Node, W: Node, U: Node, b: Node):
    """One LSTM step, gates ordered (input, forget, candidate, output).

    ``i, f, o = sigmoid(.)``, ``cand = tanh(.)``, ``c = f*c_prev + i*cand``,
    ``h = o*tanh(c)``. No peepholes.
    """
    L = U.shape[0]
    return _lstm_step(g, x_t @ W + b, h_prev, c_prev, U, L)


def _lstm_direction(g: Graph, x: Node, W: Node, U: Node, b: Node, reverse: bool, fused: bool) -> Node:
    N = x.shape[0]
    L = U.shape[0]
    zx = x @ W + b
    if fused:
        return g.lstm_sequence(zx, U, reverse)
    h = c = None
    out: list[Optional[Node]] = [None] * N
    steps = range(N - 1, -1, -1) if reverse else range(N)
    for t in steps:
        # a zero initial state contributes nothing, so step 0 skips it
        h, c = _lstm_step(g, zx[t], h, c, U, L)
        out[t] = h
    return g.stack(out)


def bilstm_forward(g: Graph, x: Node, params: dict, layers: int, fused: bool = True) -> Node:
    """Stacked BiLSTM; each row is ``forward_state || backward_state``.

    ``fused=False`` builds every cell from primitive ops instead of the
    single-node sequence op; both give the same values and gradients.
    """
    for layer in range(layers):
        parts = []
        for d, reverse in (("fwd", False), ("bwd", True)):
            p = f"lstm.{layer}.{d}"
            parts.append(_lstm_direction(g, x, params[f"{p}.W"], params[f"{p}.U"], params[f"{p}.b"], reverse, fused))
        x = g.concat(parts, axis=1)
    return x


def deep_attention(g: Graph, annotations: Node, params: dict, layers: int):
    """Score each position with a tanh MLP, softmax the scores, pool.

    Returns ``(r, a)`` where ``a`` are the attention weights and ``r`` the
    weighted sum of annotation rows.
    """
    hidden = annotations
    for k in range(layers - 1):
        hidden = g.tanh(hidden @ params[f"attn.{k}.W"] + params[f"attn.{k}.b"])
    k = layers - 1
    scores = hidden @ params[f"attn.{k}.W"] + params[f"attn.{k}.b"]
    a = g.softmax(g.reshape(scores, (annotations.shape[0],)))
    r = a @ annotations
    return r, a


def head_forward(g: Graph, r: Node, head: TaskHead, params: dict) -> Node:
    logits = r @ params["head.W"] + params["head.b"]
    if head.kind == REGRESSION:
        return g.sigmoid(logits)[0]
    if head.kind == ORDINAL:
        return g.softmax(logits)
    return g.sigmoid(logits)


@dataclass
class Forward:
    graph: Graph
    prediction: Node
    attention: Node
    annotations: Node
    representation: Node
    params: dict


def build_forward(
    model: Model, indices: Sequence[int], mode: str = EVAL, seed: int = 0, fused: bool = True
) -> Forward:
    if len(indices) == 0:
        raise ValueError("empty input")
    if mode not in (TRAIN, EVAL):
        raise ValueError(f"mode must be {TRAIN!r} or {EVAL!r}")
    cfg = model.config
    g = Graph(seed=seed)
    params = {name: g.param(name, value) for name, value in model.params.items()}
    x = embed_forward(g, indices, model.embedding, cfg, mode)
    annotations = bilstm_forward(g, x, params, cfg.lstm_layers, fused)
    r, a = deep_attention(g, annotations, params, cfg.attention_layers)
    rep = r
    if mode == TRAIN and cfg.repr_dropout > 0:
        rep = g.dropout(r, cfg.repr_dropout)
    pred = head_forward(g, rep, cfg.head, params)
    return Forward(g, pred, a, annotations, r, params)


def model_forward(model: Model, indices: Sequence[int], mode: str = EVAL, seed: int = 0):
    """Returns ``(prediction, attention_weights)`` as numpy arrays."""
    fw = build_forward(model, indices, mode, seed)
    return fw.prediction.value, fw.attention.value


# losses -----------------------------------------------------------------------


def _check_target(target, head: TaskHead):
    if head.kind == REGRESSION:
        t = float(target)
        if not np.isfinite(t):
            raise ValueError("regression target must be finite")
        return t
    if head.kind == ORDINAL:
        t = int(target)
        if not 0 <= t < head.size or t != target:
            raise ValueError(f"class {target} out of range for {head.size} classes")
        return t
    t = np.asarray(target, dtype=np.float64)
    if t.shape != (head.size,) or not np.all((t == 0) | (t == 1)):
        raise ValueError(f"multilabel target must be {head.size} zeros/ones")
    return t


def loss(prediction, target, head: TaskHead, class_weights=None):
    """Per-example loss: MSE, class-weighted cross-entropy, or mean BCE.

    Works on graph nodes (returns a scalar node) and on plain arrays
    (returns a float).
    """
    t = _check_target(target, head)
    if isinstance(prediction, Node):
        g = prediction.graph
        p = prediction
    else:
        g = Graph()
        p = g.const(prediction)
    if head.kind == REGRESSION:
        d = p - g.const(t)
        out = d * d
    elif head.kind == ORDINAL:
        w = 1.0 if class_weights is None else float(class_weights[t])
        out = g.log(g.clip(p[t], PROB_FLOOR, 1.0)) * -w
    else:
        q = g.clip(p, PROB_FLOOR, 1.0 - PROB_FLOOR)
        y = g.const(t)
        ll = y * g.log(q) + g.const(1.0 - t) * g.log(1.0 - q)
        out = -g.mean(ll)
    return out if isinstance(prediction, Node) else float(out.value)


def decode(prediction: np.ndarray, head: TaskHead, threshold: float = 0.5):
    """Regression score, argmax class, or 0/1 label vector."""
    if head.kind == REGRESSION:
        return float(prediction)
    if head.kind == ORDINAL:
        return int(np.argmax(prediction))
    return (np.asarray(prediction) >= threshold).astype(int)


# checkpoints -------------------------------------------------------------------

FORMAT_VERSION = "1"


def save_checkpoint(model: Model, path, meta: Optional[dict] = None) -> None:
    header = {"format": f"checkpoint {FORMAT_VERSION}"}
    header.update(model.config.to_meta())
    for k, v in (meta or {}).items():
        header[f"meta.{k}"] = str(v)
    tensors = [("embedding", model.embedding.vectors)] + [(n, model.params[n]) for n in model.params]
    write_container(path, header, tensors, vocab=list(model.embedding.vocab.entries))


def load_checkpoint(path) -> tuple[Model, dict]:
    """Returns the model and its free-form ``meta.*`` entries."""
    meta, tensors, vocab = read_container(path)
    if meta.get("format") != f"checkpoint {FORMAT_VERSION}":
        raise ValueError(f"{path}: unsupported checkpoint format {meta.get('format')!r}")
    if vocab is None or "embedding" not in tensors:
        raise ValueError(f"{path}: checkpoint lacks vocabulary or embedding")
    cfg = ModelConfig.from_meta(meta)
    emb = EmbeddingMatrix(Vocabulary(tuple(vocab)), tensors.pop("embedding"))
    try:
        model = Model(cfg, emb, tensors)
    except ValueError as exc:
        raise ValueError(f"{path}: {exc}") from None
    extra = {k[5:]: v for k, v in meta.items() if k.startswith("meta.")}
    return model, extra


def clone_config(cfg: ModelConfig, **changes) -> ModelConfig:
    new = copy.copy(cfg)
    for k, v in changes.items():
        setattr(new, k, v)
    new.__post_init__()
    return new


# full-model gradient check ------------------------------------------------------


def toy_config(head: TaskHead) -> ModelConfig:
    """W=8, L=4, two BiLSTM layers, two attention layers."""
    return ModelConfig(embed_dim=8, lstm_size=4, lstm_layers=2, attention_layers=2, head=head)


def _toy_target(head: TaskHead, rng: np.random.Generator):
    if head.kind == REGRESSION:
        return float(rng.uniform())
    if head.kind == ORDINAL:
        return int(rng.integers(head.size))
    return rng.integers(0, 2, size=head.size).astype(np.float64)


def gradient_check(
    head: TaskHead, seed: int = 0, length: int = 5, tolerance: float = 1e-4, config: Optional[ModelConfig] = None
) -> GradCheckReport:
    """Finite-difference check of every parameter of a toy model in train mode.

    Noise and dropout masks are drawn once and replayed. The 4-point stencil
    with ``h = 1e-3`` keeps roundoff below the tolerance for the tiny
    gradient entries that softmax shift invariance produces.
    """
    from .text import build_vocab

    cfg = config or toy_config(head)
    rng = np.random.default_rng(seed)
    words = [f"w{i}" for i in range(length)]
    vocab = build_vocab([words])
    emb = EmbeddingMatrix(vocab, rng.uniform(-1.0, 1.0, size=(len(vocab), cfg.embed_dim)))
    model = init_model(cfg, emb, seed)
    fw = build_forward(model, [vocab[w] for w in words], TRAIN, seed=seed)
    out = loss(fw.prediction, _toy_target(head, rng), head)
    return check_gradients(fw.graph, out, tolerance=tolerance, eps=1e-3, points=4)
