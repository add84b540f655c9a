"""Flat ``key = value`` run configuration with typed defaults."""

from __future__ import annotations

from pathlib import Path
from typing import Iterable, Mapping, Optional


class ConfigError(ValueError):
    pass


# key -> (type, default); a default of None means "unset"
SCHEMA: dict[str, tuple[type, object]] = {
    "seed": (int, None),
    "sgns.dim": (int, 100),
    "sgns.window": (int, 5),
    "sgns.negatives": (int, 5),
    "sgns.min_count": (int, 20),
    "sgns.epochs": (int, 5),
    "sgns.learning_rate": (float, 0.025),
    "lexicon.window": (int, 5),
    "lexicon.n_seeds": (int, 50),
    "lexicon.ridge": (float, 1e-3),
    "model.lstm_size": (int, 250),
    "model.lstm_layers": (int, 2),
    "model.attention_layers": (int, 2),
    "model.attention_hidden": (int, None),
    "model.noise_sigma": (float, 0.2),
    "model.embed_dropout": (float, 0.1),
    "model.repr_dropout": (float, 0.3),
    "train.batch_size": (int, 32),
    "train.clip_norm": (float, 1.0),
    "train.lr": (float, 1e-3),
    "train.beta1": (float, 0.9),
    "train.beta2": (float, 0.999),
    "train.eps": (float, 1e-8),
    "train.max_epochs": (int, 50),
    "train.patience": (int, 5),
    "train.dev_fraction": (float, 0.1),
    "train.class_weights": (bool, True),
    "eval.runs": (int, 10),
    "bias.resamples": (int, 100_000),
    "svm.C": (float, 0.6),
    "svm.epochs": (int, 500),
}

_TRUE = {"1", "true", "yes", "on"}
_FALSE = {"0", "false", "no", "off"}


def _convert(key: str, raw: str, where: str):
    kind, _ = SCHEMA[key]
    text = raw.strip()
    try:
        if kind is bool:
            low = text.lower()
            if low in _TRUE:
                return True
            if low in _FALSE:
                return False
            raise ValueError
        return kind(text)
    except ValueError:
        raise ConfigError(f"{where}: {key} expects {kind.__name__}, got {raw.strip()!r}") from None


def parse_lines(lines: Iterable[str], source: str = "<config>") -> dict:
    """Parse ``key = value`` lines; ``#`` starts a comment, blank lines are skipped."""
    out = {}
    for lineno, line in enumerate(lines, 1):
        body = line.split("#", 1)[0].strip()
        if not body:
            continue
        if "=" not in body:
            raise ConfigError(f"{source}:{lineno}: expected 'key = value'")
        key, value = (part.strip() for part in body.split("=", 1))
        if key not in SCHEMA:
            raise ConfigError(f"{source}:{lineno}: unknown key {key!r}")
        out[key] = _convert(key, value, f"{source}:{lineno}")
    return out


def load_config(path) -> dict:
    try:
        text = Path(path).read_text(encoding="utf-8")
    except UnicodeDecodeError:
        raise ConfigError(f"{path}: not valid UTF-8") from None
    return parse_lines(text.splitlines(), str(path))


def resolve(path=None, overrides: Iterable[str] = (), seed: Optional[int] = None) -> dict:
    """Defaults, then the file, then ``key=value`` overrides, then an explicit seed."""
    cfg = {k: default for k, (_, default) in SCHEMA.items()}
    if path is not None:
        cfg.update(load_config(path))
    cfg.update(parse_lines(overrides, "--set"))
    if seed is not None:
        cfg["seed"] = seed
    return cfg


def render(cfg: Mapping) -> str:
    """Canonical text form: one ``key = value`` line per key, sorted; unset keys omitted."""
    lines = []
    for key in sorted(cfg):
        value = cfg[key]
        if value is None:
            continue
        if isinstance(value, bool):
            value = "true" if value else "false"
        elif isinstance(value, float):
            value = repr(value)
        lines.append(f"{key} = {value}")
    return "\n".join(lines) + "\n"


def write_run_config(cfg: Mapping, directory) -> Path:
    path = Path(directory) / "run-config.txt"
    path.write_text(render(cfg), encoding="utf-8")
    return path
