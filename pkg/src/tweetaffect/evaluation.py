"""Metrics, multi-run averaging, the paired bias audit and attention heat-maps."""

from __future__ import annotations

import csv
import html
import io
import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from .model import MULTILABEL, ORDINAL, REGRESSION, TaskHead, decode


def pearson(x, y) -> float:
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.shape != y.shape or x.ndim != 1:
        raise ValueError("pearson needs two 1-d sequences of equal length")
    if len(x) < 2:
        raise ValueError("pearson needs at least 2 points")
    dx = x - x.mean()
    dy = y - y.mean()
    sxx = float(dx @ dx)
    syy = float(dy @ dy)
    if sxx == 0.0 or syy == 0.0:
        raise ValueError("constant input")
    # one square root of the product keeps exact cases like perfect lines exact
    return float(np.clip(float(dx @ dy) / math.sqrt(sxx * syy), -1.0, 1.0))


def _as_set(labels) -> set:
    if isinstance(labels, np.ndarray):
        return set(np.flatnonzero(labels).tolist())
    return set(labels)


def jaccard_multilabel(pred: Sequence, gold: Sequence) -> float:
    """Mean per-example |pred & gold| / |pred | gold|; two empty sets score 1.

    Elements are collections of label ids; numpy arrays are read as 0/1
    indicator vectors.
    """
    if len(pred) != len(gold):
        raise ValueError("prediction and gold lengths differ")
    if not len(pred):
        raise ValueError("no examples")
    total = 0.0
    for p, g in zip(pred, gold):
        p, g = _as_set(p), _as_set(g)
        union = p | g
        total += 1.0 if not union else len(p & g) / len(union)
    return total / len(pred)


def accuracy(pred, gold) -> float:
    pred = np.asarray(pred)
    gold = np.asarray(gold)
    if pred.shape != gold.shape or not len(pred):
        raise ValueError("accuracy needs equal-length non-empty inputs")
    return float(np.mean(pred == gold))


def metric_name(head: TaskHead) -> str:
    return "jaccard" if head.kind == MULTILABEL else "pearson"


def task_metric(head: TaskHead, predictions: Sequence, targets: Sequence) -> float:
    """Pearson for regression/ordinal heads (on argmax classes), Jaccard for multilabel."""
    decoded = [decode(p, head) for p in predictions]
    if head.kind == MULTILABEL:
        return jaccard_multilabel(decoded, targets)
    return pearson(np.asarray(decoded, dtype=np.float64), np.asarray(targets, dtype=np.float64))


@dataclass
class EvalReport:
    task: str
    metric: str
    value: float
    run_values: list = field(default_factory=list)

    def csv_row(self) -> list[str]:
        return [self.task, self.metric, repr(self.value)] + [repr(v) for v in self.run_values]


def write_reports(reports: Sequence[EvalReport], out) -> str:
    """Render reports as CSV; writes to ``out`` when it is a path, returns the text."""
    width = max((len(r.run_values) for r in reports), default=0)
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["task", "metric", "value"] + [f"run_{i}" for i in range(1, width + 1)])
    for r in reports:
        w.writerow(r.csv_row())
    text = buf.getvalue()
    if out is not None:
        with open(out, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
    return text


class RunFailed(RuntimeError):
    def __init__(self, run: int, cause: BaseException):
        super().__init__(f"run {run} failed: {cause}")
        self.run = run


def averaged_eval(
    run: Callable[[int], float], runs: int = 10, seed: int = 0, task: str = "", metric: str = ""
) -> EvalReport:
    """Call ``run(seed + i)`` for i in 0..runs-1 and average the scores."""
    if runs < 1:
        raise ValueError("runs must be >= 1")
    values = []
    for i in range(runs):
        try:
            values.append(float(run(seed + i)))
        except Exception as exc:
            raise RunFailed(i, exc) from exc
    return EvalReport(task, metric, float(np.mean(values)), values)


# bias audit --------------------------------------------------------------------


@dataclass
class BiasPair:
    id: str
    sentence_a: str
    sentence_b: str
    context: str = ""

    def __post_init__(self):
        if not self.sentence_a.strip() or not self.sentence_b.strip():
            raise ValueError(f"pair {self.id}: both sentences must be non-empty")


def load_bias_pairs(path) -> list[BiasPair]:
    pairs = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.rstrip("\r\n")
            if not line.strip():
                continue
            parts = line.split("\t")
            if lineno == 1 and parts[0] == "ID":
                continue
            if len(parts) != 4:
                raise ValueError(f"{path}:{lineno}: expected id, sentence_a, sentence_b, context_tag")
            try:
                pairs.append(BiasPair(*parts))
            except ValueError as exc:
                raise ValueError(f"{path}:{lineno}: {exc}") from None
    if not pairs:
        raise ValueError(f"{path}: no pairs")
    return pairs


EXACT_MAX_PAIRS = 20


def _tie_tolerance(d: np.ndarray) -> float:
    return 1e-12 * max(1.0, float(np.abs(d).sum()))


def sign_flip_pvalue(diffs, resamples: int = 100_000, seed: int = 0, exact: Optional[bool] = None) -> float:
    """Two-sided paired sign-flip permutation test on the mean difference.

    Exact enumeration of all 2**n sign patterns for n <= 20, otherwise
    ``resamples`` random patterns with the add-one correction. ``exact``
    forces one method or the other.
    """
    d = np.asarray(diffs, dtype=np.float64)
    n = len(d)
    if n == 0:
        raise ValueError("need at least one difference")
    observed = abs(d.sum())
    tol = _tie_tolerance(d)
    if exact is None:
        exact = n <= EXACT_MAX_PAIRS
    if exact:
        if n > 30:
            raise ValueError("exact enumeration is limited to 30 pairs")
        hits = 0
        total = 1 << n
        chunk = 1 << 16
        bits = np.arange(n, dtype=np.int64)
        for start in range(0, total, chunk):
            codes = np.arange(start, min(total, start + chunk), dtype=np.int64)
            signs = 1.0 - 2.0 * ((codes[:, None] >> bits) & 1)
            hits += int(np.count_nonzero(np.abs(signs @ d) >= observed - tol))
        return hits / total
    rng = np.random.default_rng(seed)
    hits = 0
    done = 0
    while done < resamples:
        m = min(10_000, resamples - done)
        signs = rng.choice((-1.0, 1.0), size=(m, n))
        hits += int(np.count_nonzero(np.abs(signs @ d) >= observed - tol))
        done += m
    return (hits + 1) / (resamples + 1)


@dataclass
class BiasResult:
    dimension: str
    avg_diff: float
    p_value: float


def bias_eval(
    score: Callable[[str], np.ndarray],
    pairs: Sequence[BiasPair],
    dimensions: Sequence[str],
    resamples: int = 100_000,
    seed: int = 0,
) -> list[BiasResult]:
    """Average score difference (a minus b) per output dimension, with p-values."""
    if not pairs:
        raise ValueError("need at least one pair")
    diffs = np.array(
        [np.atleast_1d(score(p.sentence_a)) - np.atleast_1d(score(p.sentence_b)) for p in pairs],
        dtype=np.float64,
    )
    if diffs.shape[1] != len(dimensions):
        raise ValueError(f"scorer returned {diffs.shape[1]} values for {len(dimensions)} dimensions")
    return [
        BiasResult(dim, float(diffs[:, j].mean()), sign_flip_pvalue(diffs[:, j], resamples, seed))
        for j, dim in enumerate(dimensions)
    ]


def write_bias_results(results: Sequence[BiasResult], out=None) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["dimension", "avg_diff", "p_value"])
    for r in results:
        w.writerow([r.dimension, repr(r.avg_diff), repr(r.p_value)])
    text = buf.getvalue()
    if out is not None:
        with open(out, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
    return text


def head_dimensions(head: TaskHead, labels: Optional[Sequence[str]] = None) -> list[str]:
    if head.kind == REGRESSION:
        return ["score"]
    if labels is not None and len(labels) == head.size:
        return list(labels)
    prefix = "class" if head.kind == ORDINAL else "label"
    return [f"{prefix}_{i}" for i in range(head.size)]


# heat-maps -----------------------------------------------------------------------

HTML_HEAD = (
    "<!DOCTYPE html>\n"
    '<html>\n<head>\n<meta charset="utf-8">\n<title>attention heat-map</title>\n'
    "<style>\n"
    "body { font-family: sans-serif; }\n"
    ".heatmap span { padding: 0 2px; margin: 0 1px; border-radius: 2px; }\n"
    "</style>\n</head>\n<body>\n<div class=\"heatmap\">\n"
)
HTML_TAIL = "</div>\n</body>\n</html>\n"


def _intensities(weights) -> np.ndarray:
    a = np.asarray(weights, dtype=np.float64)
    top = a.max() if a.size else 0.0
    if top <= 0:
        return np.zeros_like(a)
    return a / top


def render_heatmap(tokens: Sequence, weights, fmt: str = "html") -> bytes:
    """One coloured span per token, intensity ``a_i / max(a)``."""
    tokens = [str(t) for t in tokens]
    weights = np.asarray(weights, dtype=np.float64)
    if len(tokens) != len(weights):
        raise ValueError(f"{len(tokens)} tokens but {len(weights)} weights")
    if np.any(weights < 0) or (len(weights) and abs(weights.sum() - 1.0) > 1e-6):
        raise ValueError("weights must be a probability vector")
    level = _intensities(weights)
    if fmt == "html":
        spans = [
            f'<span style="background-color: rgba(255, 0, 0, {v:.3f})" title="{a:.4f}">{html.escape(t)}</span>\n'
            for t, v, a in zip(tokens, level, weights)
        ]
        return (HTML_HEAD + "".join(spans) + HTML_TAIL).encode("utf-8")
    if fmt == "ansi":
        parts = []
        for t, v in zip(tokens, level):
            shade = int(round(255 * (1.0 - v)))
            parts.append(f"\x1b[48;2;255;{shade};{shade}m\x1b[38;2;0;0;0m{t}\x1b[0m")
        return (" ".join(parts) + "\n").encode("utf-8")
    raise ValueError(f"unknown heat-map format {fmt!r}")
