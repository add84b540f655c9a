"""Tab-separated affect task files and the synthetic corpora used for testing.

File layouts (UTF-8, tab separated, optional header whose first field is
``ID``):

    EI-reg, V-reg   id  text  dimension  score          score in [0, 1]
    EI-oc, V-oc     id  text  dimension  class          EI-oc 0..3, V-oc -3..3
    E-c             id  text  11 columns of 0/1         canonical emotion order
    pretrain        id  text  negative|neutral|positive
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from .lexicon import DIMENSIONS, SeedLexicon
from .model import TaskHead

EI_REG = "EI-reg"
EI_OC = "EI-oc"
V_REG = "V-reg"
V_OC = "V-oc"
E_C = "E-c"
PRETRAIN = "pretrain-sentiment"
TASKS = (EI_REG, EI_OC, V_REG, V_OC, E_C, PRETRAIN)

EMOTIONS = ("joy", "fear", "sadness", "anger")
EC_LABELS = (
    "anger",
    "anticipation",
    "disgust",
    "fear",
    "joy",
    "love",
    "optimism",
    "pessimism",
    "sadness",
    "surprise",
    "trust",
)
SENTIMENTS = ("negative", "neutral", "positive")
V_OC_OFFSET = 3


def task_head(task: str) -> TaskHead:
    if task in (EI_REG, V_REG):
        return TaskHead.regression()
    if task == EI_OC:
        return TaskHead.ordinal(4)
    if task == V_OC:
        return TaskHead.ordinal(7)
    if task == E_C:
        return TaskHead.multilabel(len(EC_LABELS))
    if task == PRETRAIN:
        return TaskHead.ordinal(len(SENTIMENTS))
    raise ValueError(f"unknown task {task!r}; expected one of {', '.join(TASKS)}")


@dataclass
class LabeledExample:
    id: str
    text: str
    target: object
    dimension: Optional[str] = None


@dataclass
class TaskDataset:
    task: str
    examples: list = field(default_factory=list)
    emotion: Optional[str] = None

    def __len__(self):
        return len(self.examples)

    def __iter__(self):
        return iter(self.examples)

    @property
    def head(self) -> TaskHead:
        return task_head(self.task)

    def texts(self) -> list[str]:
        return [ex.text for ex in self.examples]

    def targets(self) -> list:
        return [ex.target for ex in self.examples]


class DatasetError(ValueError):
    pass


def _parse_class(raw: str) -> int:
    # official files write e.g. "2: moderate amount of joy can be inferred"
    return int(raw.split(":", 1)[0].strip())


def _parse_row(task: str, parts: list[str], where: str) -> LabeledExample:
    def fail(msg):
        raise DatasetError(f"{where}: {msg}")

    if task == E_C:
        if len(parts) != 2 + len(EC_LABELS):
            fail(f"expected {2 + len(EC_LABELS)} columns, found {len(parts)}")
        bits = []
        for raw in parts[2:]:
            if raw.strip() not in ("0", "1"):
                fail(f"label column must be 0 or 1, got {raw!r}")
            bits.append(int(raw))
        return LabeledExample(parts[0], parts[1], np.array(bits, dtype=np.int64))

    if task == PRETRAIN:
        if len(parts) != 3:
            fail(f"expected 3 columns, found {len(parts)}")
        label = parts[2].strip().lower()
        if label not in SENTIMENTS:
            fail(f"unknown sentiment {parts[2]!r}")
        return LabeledExample(parts[0], parts[1], SENTIMENTS.index(label), "valence")

    if len(parts) != 4:
        fail(f"expected 4 columns, found {len(parts)}")
    dim = parts[2].strip()
    if task in (EI_REG, EI_OC) and dim not in EMOTIONS:
        fail(f"unknown emotion {dim!r}")
    if task in (V_REG, V_OC) and dim != "valence":
        fail(f"expected dimension 'valence', got {dim!r}")
    try:
        if task in (EI_REG, V_REG):
            target = float(parts[3])
            if not 0.0 <= target <= 1.0:
                fail(f"score {target} outside [0, 1]")
        else:
            raw = _parse_class(parts[3])
            lo, hi = (0, 3) if task == EI_OC else (-3, 3)
            if not lo <= raw <= hi:
                fail(f"class {raw} outside [{lo}, {hi}]")
            target = raw + V_OC_OFFSET if task == V_OC else raw
    except ValueError as exc:
        if isinstance(exc, DatasetError):
            raise
        fail(f"bad target {parts[3]!r}")
    return LabeledExample(parts[0], parts[1], target, dim)


def load_dataset(path, task: str) -> TaskDataset:
    task_head(task)
    data = Path(path).read_bytes()
    try:
        text = data.decode("utf-8")
    except UnicodeDecodeError as exc:
        raise DatasetError(f"{path}: invalid UTF-8 at byte {exc.start}") from None
    examples = []
    for lineno, line in enumerate(text.splitlines(), 1):
        if not line.strip():
            continue
        parts = line.split("\t")
        if lineno == 1 and parts[0] == "ID":
            continue
        examples.append(_parse_row(task, parts, f"{path}:{lineno}"))
    dims = {ex.dimension for ex in examples}
    emotion = dims.pop() if task in (EI_REG, EI_OC) and len(dims) == 1 else None
    return TaskDataset(task, examples, emotion)


def save_dataset(ds: TaskDataset, path) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for ex in ds.examples:
            if "\t" in ex.text or "\n" in ex.text:
                raise DatasetError(f"example {ex.id}: text contains a tab or newline")
            if ds.task == E_C:
                cols = [str(int(b)) for b in ex.target]
            elif ds.task == PRETRAIN:
                cols = [SENTIMENTS[ex.target]]
            elif ds.task in (EI_REG, V_REG):
                cols = [ex.dimension or "valence", repr(float(ex.target))]
            elif ds.task == V_OC:
                cols = [ex.dimension or "valence", str(ex.target - V_OC_OFFSET)]
            else:
                cols = [ex.dimension, str(ex.target)]
            fh.write("\t".join([ex.id, ex.text] + cols) + "\n")


# synthetic data --------------------------------------------------------------


@dataclass
class SynthCorpus:
    docs: list
    clusters: list
    planted: dict
    seed_lexica: dict

    def seed_words(self) -> set:
        return {w for lex in self.seed_lexica.values() for w in lex.ratings}

    def write(self, directory) -> dict:
        """Writes ``corpus.txt``, ``planted.tsv`` and ``seeds/<dimension>.tsv``."""
        directory = Path(directory)
        (directory / "seeds").mkdir(parents=True, exist_ok=True)
        corpus = directory / "corpus.txt"
        corpus.write_text("".join(d + "\n" for d in self.docs), encoding="utf-8")
        planted = directory / "planted.tsv"
        with open(planted, "w", encoding="utf-8", newline="\n") as fh:
            fh.write("word\t" + "\t".join(DIMENSIONS) + "\n")
            for word, vec in self.planted.items():
                fh.write(word + "\t" + "\t".join(repr(float(x)) for x in vec) + "\n")
        for dim, lex in self.seed_lexica.items():
            lex.save(directory / "seeds" / f"{dim}.tsv")
        return {"corpus": corpus, "planted": planted, "seeds": directory / "seeds"}


def cluster_ratings(n_clusters: int, dim_index: int) -> np.ndarray:
    """Planted rating of each cluster along one dimension, spread over [-0.9, 0.9]."""
    values = np.linspace(0.9, -0.9, n_clusters)
    return values if dim_index % 2 == 0 else values[::-1]


def synth_affect_corpus(
    n_clusters: int = 2,
    words_per_cluster: int = 20,
    docs: int = 500,
    seed: int = 0,
    doc_length: int = 8,
    seeds_per_cluster: int = 5,
    fillers: int = 5,
    filler_rate: float = 0.2,
) -> SynthCorpus:
    """Documents drawn from one word cluster each, with shared filler words.

    Every word of a cluster gets the cluster's planted rating on each of the
    ten dimensions; the first ``seeds_per_cluster`` words of each cluster
    form the seed lexica.
    """
    if n_clusters < 2:
        raise ValueError("need at least 2 clusters")
    rng = np.random.default_rng(seed)
    clusters = [[f"c{c}w{j:02d}" for j in range(words_per_cluster)] for c in range(n_clusters)]
    filler_words = [f"filler{j}" for j in range(fillers)]
    texts = []
    for _ in range(docs):
        members = clusters[rng.integers(n_clusters)]
        toks = []
        for _ in range(doc_length):
            if filler_words and rng.random() < filler_rate:
                toks.append(filler_words[rng.integers(len(filler_words))])
            else:
                toks.append(members[rng.integers(len(members))])
        texts.append(" ".join(toks))
    planted = {}
    for c, members in enumerate(clusters):
        vec = np.array([cluster_ratings(n_clusters, d)[c] for d in range(len(DIMENSIONS))])
        for w in members:
            planted[w] = vec
    seed_lexica = {}
    for d, dim in enumerate(DIMENSIONS):
        ratings = {w: float(planted[w][d]) for members in clusters for w in members[:seeds_per_cluster]}
        seed_lexica[dim] = SeedLexicon(dim, ratings)
    return SynthCorpus(texts, clusters, planted, seed_lexica)


STRONG = tuple(f"strong{j}" for j in range(8))
NEUTRAL = tuple(f"plain{j}" for j in range(16))
POSITIVE = tuple(f"good{j}" for j in range(8))
NEGATIVE = tuple(f"bad{j}" for j in range(8))
CUES = tuple(tuple(f"{label}cue{j}" for j in range(3)) for label in EC_LABELS)


def valence_signal(tokens) -> float:
    """(positive - negative) / length, in [-1, 1]."""
    pos = sum(t in POSITIVE for t in tokens)
    neg = sum(t in NEGATIVE for t in tokens)
    return (pos - neg) / len(tokens)


def _valence_doc(rng, min_len, max_len):
    n = int(rng.integers(min_len, max_len + 1))
    kinds = rng.choice(3, size=n, p=rng.dirichlet(np.ones(3)))
    toks = []
    for k in kinds:
        pool = (POSITIVE, NEGATIVE, NEUTRAL)[k]
        toks.append(pool[rng.integers(len(pool))])
    return toks


def synth_task_dataset(task: str, size: int, seed: int = 0, min_len: int = 4, max_len: int = 10) -> TaskDataset:
    """Small learnable task with a deterministic generator.

    EI tasks score the fraction of ``strong*`` tokens; valence tasks and
    sentiment pretraining share :func:`valence_signal`; E-c marks a label
    whenever one of its cue words occurs.
    """
    task_head(task)
    rng = np.random.default_rng(seed)
    examples = []
    for i in range(size):
        if task in (EI_REG, EI_OC):
            n = int(rng.integers(min_len, max_len + 1))
            k = int(rng.integers(0, n + 1))
            toks = [STRONG[rng.integers(len(STRONG))] for _ in range(k)]
            toks += [NEUTRAL[rng.integers(len(NEUTRAL))] for _ in range(n - k)]
            toks = [toks[j] for j in rng.permutation(n)]
            frac = k / n
            target = frac if task == EI_REG else min(3, int(4 * frac))
            dim = "joy"
        elif task in (V_REG, V_OC, PRETRAIN):
            toks = _valence_doc(rng, min_len, max_len)
            s = valence_signal(toks)
            if task == V_REG:
                target = 0.5 * (1.0 + s)
            elif task == V_OC:
                target = int(np.clip(np.rint(3 * s), -3, 3)) + V_OC_OFFSET
            else:
                target = 0 if s < -0.1 else (2 if s > 0.1 else 1)
            dim = "valence"
        else:
            n = int(rng.integers(min_len, max_len + 1))
            labels = rng.random(len(EC_LABELS)) < 0.15
            toks = [CUES[j][rng.integers(3)] for j in np.flatnonzero(labels)]
            toks += [NEUTRAL[rng.integers(len(NEUTRAL))] for _ in range(max(0, n - len(toks)))]
            toks = [toks[j] for j in rng.permutation(len(toks))]
            target = labels.astype(np.int64)
            dim = None
        examples.append(LabeledExample(f"{task}-{i:05d}", " ".join(toks), target, dim))
    emotion = "joy" if task in (EI_REG, EI_OC) else None
    return TaskDataset(task, examples, emotion)


def synth_vocabulary_words() -> list[str]:
    """Every word the synthetic task generators can emit."""
    words = list(STRONG + NEUTRAL + POSITIVE + NEGATIVE)
    for cues in CUES:
        words.extend(cues)
    return words
