"""Adam with global-norm clipping, early stopping and the transfer protocol."""

from __future__ import annotations

import csv
import logging
import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from .model import (
    EVAL,
    TRAIN,
    Model,
    ModelConfig,
    TaskHead,
    build_forward,
    clone_config,
    init_head,
    loss,
    model_forward,
)

log = logging.getLogger(__name__)

RD = "RD"
TL_FR = "TL-FR"
TL_FT = "TL-FT"
MODES = (RD, TL_FR, TL_FT)


@dataclass
class TrainConfig:
    batch_size: int = 32
    clip_norm: float = 1.0
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    max_epochs: int = 50
    patience: int = 5
    seed: int = 0
    mode: str = RD
    # stop as soon as the epoch's mean training loss drops below this
    target_train_loss: Optional[float] = None

    def __post_init__(self):
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if not self.clip_norm > 0:
            raise ValueError("clip_norm must be > 0")
        if self.patience < 1:
            raise ValueError("patience must be >= 1")
        if self.max_epochs < 1:
            raise ValueError("max_epochs must be >= 1")
        if self.mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}")


def class_weights(labels: Sequence[int], k: int) -> np.ndarray:
    """Inverse class frequencies, ``T / (k * count_c)``; 1 everywhere when balanced."""
    counts = np.bincount(np.asarray(labels, dtype=np.int64), minlength=k)
    if len(counts) > k:
        raise ValueError(f"label {len(counts) - 1} out of range for {k} classes")
    missing = [c for c in range(k) if counts[c] == 0]
    if missing:
        raise ValueError(f"class {missing[0]} absent from the training labels")
    return counts.sum() / (k * counts.astype(np.float64))


def global_norm(grads: dict) -> float:
    return math.sqrt(sum(float(np.sum(g * g)) for g in grads.values()))


def clip_grad_norm(grads: dict, max_norm: float) -> dict:
    if not max_norm > 0:
        raise ValueError("max_norm must be > 0")
    norm = global_norm(grads)
    if norm <= max_norm:
        return grads
    # divide last so simple cases such as [3, 4] -> [0.6, 0.8] come out exact
    return {k: g * max_norm / norm for k, g in grads.items()}


@dataclass
class AdamState:
    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)
    t: int = 0


def adam_step(params: dict, grads: dict, state: AdamState, lr=1e-3, beta1=0.9, beta2=0.999, eps=1e-8) -> None:
    """Bias-corrected Adam update, in place. Only tensors present in ``grads`` move."""
    state.t += 1
    bc1 = 1.0 - beta1 ** state.t
    bc2 = 1.0 - beta2 ** state.t
    for name, g in grads.items():
        p = params[name]
        if g.shape != p.shape:
            raise ValueError(f"{name}: gradient shape {g.shape} != parameter shape {p.shape}")
        m = state.m.get(name)
        if m is None:
            m = state.m[name] = np.zeros_like(p)
            state.v[name] = np.zeros_like(p)
        v = state.v[name]
        m *= beta1
        m += (1.0 - beta1) * g
        v *= beta2
        v += (1.0 - beta2) * g * g
        p -= lr * (m / bc1) / (np.sqrt(v / bc2) + eps)


@dataclass
class Example:
    """Encoded training example: token indices plus a target for the head."""

    indices: list
    target: object


@dataclass
class EpochRecord:
    epoch: int
    train_loss: float
    dev_loss: float
    dev_metric: float


class TrainingError(RuntimeError):
    pass


def example_seed(seed: int, epoch: int, position: int) -> int:
    return int(np.random.SeedSequence([seed, epoch, position]).generate_state(1)[0])


def dev_loss(model: Model, data: Sequence[Example], weights=None) -> float:
    total = 0.0
    for ex in data:
        pred, _ = model_forward(model, ex.indices, EVAL)
        total += loss(pred, ex.target, model.config.head, weights)
    return total / len(data)


def predict_all(model: Model, data: Sequence[Example]) -> list:
    return [model_forward(model, ex.indices, EVAL)[0] for ex in data]


def default_metric(model: Model, data: Sequence[Example]) -> float:
    from .evaluation import task_metric

    try:
        return task_metric(model.config.head, predict_all(model, data), [ex.target for ex in data])
    except ValueError:
        return float("nan")


def batch_gradients(model: Model, batch: Sequence[Example], seeds: Sequence[int], weights=None):
    """Mean loss and mean gradients over ``batch``, one graph per sequence."""
    names = model.trainable
    acc = {n: np.zeros_like(model.params[n]) for n in names}
    total = 0.0
    for ex, s in zip(batch, seeds):
        fw = build_forward(model, ex.indices, TRAIN, seed=s)
        out = loss(fw.prediction, ex.target, model.config.head, weights)
        total += float(out.value)
        grads = fw.graph.gradients(out, [fw.params[n] for n in names])
        for n in names:
            acc[n] += grads[n]
    n_ex = len(batch)
    return total / n_ex, {n: g / n_ex for n, g in acc.items()}


def train(
    model: Model,
    train_set: Sequence[Example],
    dev_set: Sequence[Example],
    cfg: TrainConfig,
    weights=None,
    metric: Optional[Callable[[Model, Sequence[Example]], float]] = None,
):
    """Mini-batch Adam with early stopping on dev loss.

    Works on a copy of ``model``; returns ``(best_model, history)`` where
    ``best_model`` carries the parameters of the epoch with the lowest dev
    loss. Training stops once dev loss has not improved for
    ``cfg.patience`` consecutive epochs.
    """
    if not train_set or not dev_set:
        raise ValueError("train and dev sets must be non-empty")
    metric = metric or default_metric
    model = model.copy()
    if cfg.mode == TL_FR:
        model.frozen |= set(model.encoder_names)
    state = AdamState()
    rng = np.random.default_rng(cfg.seed)
    best = model.copy()
    best_loss = math.inf
    stale = 0
    history: list[EpochRecord] = []
    for epoch in range(1, cfg.max_epochs + 1):
        order = rng.permutation(len(train_set))
        batch_losses = []
        for b, start in enumerate(range(0, len(order), cfg.batch_size)):
            idx = order[start : start + cfg.batch_size]
            batch = [train_set[i] for i in idx]
            seeds = [example_seed(cfg.seed, epoch, int(i)) for i in range(start, start + len(idx))]
            try:
                value, grads = batch_gradients(model, batch, seeds, weights)
            except ValueError as exc:
                raise TrainingError(f"epoch {epoch}, batch {b}: {exc}") from exc
            if not math.isfinite(value):
                raise TrainingError(f"epoch {epoch}, batch {b}: non-finite loss {value}")
            grads = clip_grad_norm(grads, cfg.clip_norm)
            adam_step(model.params, grads, state, cfg.lr, cfg.beta1, cfg.beta2, cfg.eps)
            batch_losses.append(value)
        train_loss = float(np.mean(batch_losses))
        d_loss = dev_loss(model, dev_set, weights)
        if not math.isfinite(d_loss):
            raise TrainingError(f"epoch {epoch}: non-finite dev loss")
        record = EpochRecord(epoch, train_loss, d_loss, metric(model, dev_set))
        history.append(record)
        log.info("epoch %d train %.6f dev %.6f metric %.4f", epoch, train_loss, d_loss, record.dev_metric)
        if d_loss < best_loss:
            best_loss = d_loss
            best = model.copy()
            stale = 0
        else:
            stale += 1
            if stale >= cfg.patience:
                break
        if cfg.target_train_loss is not None and train_loss < cfg.target_train_loss:
            break
    return best, history


def write_history(history: Sequence[EpochRecord], path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["epoch", "train_loss", "dev_loss", "dev_metric"])
        for r in history:
            w.writerow([r.epoch, repr(r.train_loss), repr(r.dev_loss), repr(r.dev_metric)])


def transfer(pretrained: Model, head: TaskHead, mode: str, seed: int = 0) -> Model:
    """Swap the head of a pretrained model and set which tensors may train.

    ``TL-FR`` freezes the whole encoder (BiLSTM and attention); ``TL-FT``
    leaves everything but the embedding trainable. The new head is freshly
    initialised from ``seed``.
    """
    if mode not in (TL_FR, TL_FT):
        raise ValueError(f"transfer mode must be {TL_FR} or {TL_FT}")
    cfg = clone_config(pretrained.config, head=head)
    check_compatible(pretrained, cfg)
    encoder = {n: pretrained.params[n].copy() for n in pretrained.encoder_names}
    params = dict(encoder)
    params.update(init_head(cfg, seed))
    frozen = set(encoder) if mode == TL_FR else set()
    return Model(cfg, pretrained.embedding, params, frozen)


def check_compatible(pretrained: Model, cfg: ModelConfig) -> None:
    """Raise if ``cfg`` and the pretrained encoder disagree on any tensor shape."""
    theirs = {n: v.shape for n, v in pretrained.params.items() if n in set(pretrained.encoder_names)}
    ours = dict(cfg.encoder_shapes())
    bad = sorted(n for n in set(theirs) | set(ours) if theirs.get(n) != ours.get(n))
    if bad:
        raise ValueError("incompatible pretrained tensors: " + ", ".join(bad))

