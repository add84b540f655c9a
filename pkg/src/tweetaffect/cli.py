"""``tweetaffect`` command-line entry point.

Exit status: 0 success, 1 user error (bad input, missing file, bad config),
2 internal failure.
"""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from . import baselines as bl
from . import config as rc
from .container import ContainerError
from .datasets import E_C, EC_LABELS, EI_REG, PRETRAIN, SENTIMENTS, TASKS, V_REG, DatasetError, load_dataset, task_head
from .embeddings import SgnsConfig, load_text, save_text, train_skipgram
from .evaluation import (
    averaged_eval,
    bias_eval,
    head_dimensions,
    load_bias_pairs,
    metric_name,
    pearson,
    jaccard_multilabel,
    render_heatmap,
    task_metric,
    write_bias_results,
    write_reports,
    EvalReport,
)
from .lexicon import AffectiveLexicon, build_context_model, compose_embeddings, expand_lexicon, fit_lexicon, load_seed_dir
from .model import (
    ORDINAL,
    Model,
    ModelConfig,
    TaskHead,
    clone_config,
    gradient_check,
    init_model,
    load_checkpoint,
    model_forward,
    save_checkpoint,
)
from .text import encode, read_corpus, tokenize
from .training import RD, TL_FR, TL_FT, Example, TrainConfig, class_weights, predict_all, train, transfer, write_history

log = logging.getLogger("tweetaffect")

MODE_NAMES = {"rd": RD, "tl-fr": TL_FR, "tl-ft": TL_FT}
BASELINE_KINDS = {"bow": bl.BOW, "nbow": bl.NBOW, "nbow-affect": bl.NBOW_AFFECT, "nbow-affective": bl.NBOW_AFFECT}


class UserError(Exception):
    """Invalid input; reported as a one-line diagnostic with exit status 1."""


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UserError(message)


# shared helpers -------------------------------------------------------------------


def _require_seed(cfg: dict) -> int:
    if cfg["seed"] is None:
        raise UserError("a seed is required: pass --seed N or set 'seed = N' in the run config")
    return cfg["seed"]


def _echo_config(cfg: dict, args, out: Optional[str]) -> None:
    log.info("resolved configuration:\n%s", rc.render(cfg).rstrip())
    if out is None:
        return
    directory = Path(out).parent
    directory.mkdir(parents=True, exist_ok=True)
    header = f"# command = {args.command}\n"
    for key in sorted(vars(args)):
        if key in ("command", "func", "set", "run_config", "verbose"):
            continue
        value = getattr(args, key)
        if value is not None:
            header += f"# arg.{key} = {value}\n"
    (directory / "run-config.txt").write_text(header + rc.render(cfg), encoding="utf-8")


def _encode_dataset(ds, vocab) -> list[Example]:
    out = []
    for ex in ds.examples:
        tokens = tokenize(ex.text)
        if not tokens:
            raise UserError(f"example {ex.id}: text has no tokens")
        out.append(Example(encode(tokens, vocab), ex.target))
    return out


def _split(examples: list, fraction: float, seed: int):
    if not 0.0 < fraction < 1.0:
        raise UserError("train.dev_fraction must lie in (0, 1)")
    if len(examples) < 2:
        raise UserError("need at least 2 examples to hold out a dev split")
    order = np.random.default_rng([seed, 1]).permutation(len(examples))
    n_dev = min(len(examples) - 1, max(1, int(round(fraction * len(examples)))))
    dev = [examples[i] for i in sorted(order[:n_dev])]
    tr = [examples[i] for i in sorted(order[n_dev:])]
    return tr, dev


def _train_dev(args, cfg, task, vocab, seed):
    data = _encode_dataset(load_dataset(args.data, task), vocab)
    if getattr(args, "dev", None):
        return data, _encode_dataset(load_dataset(args.dev, task), vocab)
    return _split(data, cfg["train.dev_fraction"], seed)


def _model_config(cfg: dict, embed_dim: int, head: TaskHead) -> ModelConfig:
    return ModelConfig(
        embed_dim=embed_dim,
        lstm_size=cfg["model.lstm_size"],
        lstm_layers=cfg["model.lstm_layers"],
        attention_layers=cfg["model.attention_layers"],
        attention_hidden=cfg["model.attention_hidden"],
        noise_sigma=cfg["model.noise_sigma"],
        embed_dropout=cfg["model.embed_dropout"],
        repr_dropout=cfg["model.repr_dropout"],
        head=head,
    )


def _train_config(cfg: dict, mode: str, seed: int) -> TrainConfig:
    return TrainConfig(
        batch_size=cfg["train.batch_size"],
        clip_norm=cfg["train.clip_norm"],
        lr=cfg["train.lr"],
        beta1=cfg["train.beta1"],
        beta2=cfg["train.beta2"],
        eps=cfg["train.eps"],
        max_epochs=cfg["train.max_epochs"],
        patience=cfg["train.patience"],
        seed=seed,
        mode=mode,
    )


def _weights(cfg: dict, head: TaskHead, examples: Sequence[Example]):
    if head.kind != ORDINAL or not cfg["train.class_weights"]:
        return None
    try:
        return class_weights([ex.target for ex in examples], head.size)
    except ValueError as exc:
        log.warning("class weights disabled: %s", exc)
        return None


def _fit(model: Model, train_set, dev_set, cfg, mode, seed, history_path=None) -> Model:
    best, history = train(model, train_set, dev_set, _train_config(cfg, mode, seed), _weights(cfg, model.config.head, train_set))
    if history_path is not None:
        write_history(history, history_path)
    return best


def _start_model(pretrained: Model, head: TaskHead, mode: str, seed: int) -> Model:
    if mode == RD:
        return init_model(clone_config(pretrained.config, head=head), pretrained.embedding, seed)
    return transfer(pretrained, head, mode, seed)


def _task_labels(task: str) -> Optional[Sequence[str]]:
    if task == E_C:
        return EC_LABELS
    if task == PRETRAIN:
        return SENTIMENTS
    return None


def _score(metric, *args) -> float:
    """Metric value, or nan with a warning when predictions are constant."""
    try:
        return metric(*args)
    except ValueError as exc:
        if str(exc) != "constant input":
            raise
        log.warning("constant predictions or targets: correlation is undefined, reporting nan")
        return float("nan")


def _history_path(out: str) -> str:
    return str(out) + ".history.csv"


# subcommands ----------------------------------------------------------------------


def cmd_train_embeddings(args, cfg):
    seed = _require_seed(cfg)
    _echo_config(cfg, args, args.out)
    sg = SgnsConfig(
        dim=cfg["sgns.dim"],
        window=cfg["sgns.window"],
        negatives=cfg["sgns.negatives"],
        min_count=cfg["sgns.min_count"],
        epochs=cfg["sgns.epochs"],
        learning_rate=cfg["sgns.learning_rate"],
        seed=seed,
    )
    emb = train_skipgram(read_corpus(args.corpus), sg)
    save_text(emb, args.out)
    log.info("wrote %d x %d embeddings to %s", len(emb), emb.dim, args.out)


def cmd_build_lexicon(args, cfg):
    _echo_config(cfg, args, args.out)
    emb = load_text(args.embeddings)
    ctx = build_context_model(read_corpus(args.corpus), emb.vocab, cfg["lexicon.window"])
    models = fit_lexicon(load_seed_dir(args.seeds), ctx, cfg["lexicon.n_seeds"], cfg["lexicon.ridge"])
    lex = expand_lexicon(emb.vocab, models, ctx)
    lex.save(args.out)
    log.info("wrote norms for %d words to %s", len(lex), args.out)


def cmd_compose(args, cfg):
    _echo_config(cfg, args, args.out)
    emb = compose_embeddings(load_text(args.embeddings), AffectiveLexicon.load(args.lexicon))
    save_text(emb, args.out)


def cmd_pretrain(args, cfg):
    seed = _require_seed(cfg)
    _echo_config(cfg, args, args.out)
    emb = load_text(args.embeddings)
    head = task_head(PRETRAIN)
    train_set, dev_set = _train_dev(args, cfg, PRETRAIN, emb.vocab, seed)
    model = init_model(_model_config(cfg, emb.dim, head), emb, seed)
    best = _fit(model, train_set, dev_set, cfg, RD, seed, _history_path(args.out))
    save_checkpoint(best, args.out, {"task": PRETRAIN, "mode": RD, "seed": seed})


def cmd_finetune(args, cfg):
    seed = _require_seed(cfg)
    _echo_config(cfg, args, args.out)
    mode = MODE_NAMES[args.mode]
    pretrained, _ = load_checkpoint(args.ckpt)
    head = task_head(args.task)
    train_set, dev_set = _train_dev(args, cfg, args.task, pretrained.embedding.vocab, seed)
    model = _start_model(pretrained, head, mode, seed)
    best = _fit(model, train_set, dev_set, cfg, mode, seed, _history_path(args.out))
    save_checkpoint(best, args.out, {"task": args.task, "mode": mode, "seed": seed})


def cmd_evaluate(args, cfg):
    seed = _require_seed(cfg)
    runs = args.runs if args.runs is not None else cfg["eval.runs"]
    _echo_config(cfg, args, args.out)
    model, meta = load_checkpoint(args.ckpt)
    head = task_head(args.task)
    if args.train is None and model.config.head != head:
        raise UserError(f"checkpoint head ({model.config.head}) does not match task {args.task} ({head})")
    test = _encode_dataset(load_dataset(args.data, args.task), model.embedding.vocab)
    targets = [ex.target for ex in test]

    if args.train is None:
        def run(_seed):
            return _score(task_metric, head, predict_all(model, test), targets)
    else:
        mode = MODE_NAMES[args.mode] if args.mode else meta.get("mode", RD)
        train_all = _encode_dataset(load_dataset(args.train, args.task), model.embedding.vocab)

        def run(s):
            train_set, dev_set = _split(train_all, cfg["train.dev_fraction"], s)
            best = _fit(_start_model(model, head, mode, s), train_set, dev_set, cfg, mode, s)
            return _score(task_metric, head, predict_all(best, test), targets)

    report = averaged_eval(run, runs, seed, args.task, metric_name(head))
    sys.stdout.write(write_reports([report], args.out))


def _baseline_features(kind, train_docs, test_docs, args):
    if kind == bl.BOW:
        model = bl.fit_tfidf(train_docs)
        return bl.tfidf_features(train_docs, model), bl.tfidf_features(test_docs, model)
    if args.embeddings is None:
        raise UserError(f"--embeddings is required for the {kind} baseline")
    emb = load_text(args.embeddings)
    lex = None
    if kind == bl.NBOW_AFFECT:
        if args.lexicon is None:
            raise UserError("--lexicon is required for the nbow-affect baseline")
        lex = AffectiveLexicon.load(args.lexicon)
    return bl.nbow_matrix(train_docs, emb, lex), bl.nbow_matrix(test_docs, emb, lex)


def cmd_baseline(args, cfg):
    seed = _require_seed(cfg)
    _echo_config(cfg, args, args.out)
    kind = BASELINE_KINDS[args.kind]
    ds = load_dataset(args.data, args.task)
    head = task_head(args.task)
    docs = [tokenize(ex.text) for ex in ds.examples]
    labelled = list(zip(docs, ds.targets()))
    if args.test is not None:
        test_ds = load_dataset(args.test, args.task)
        train_part, test_part = labelled, list(zip([tokenize(e.text) for e in test_ds.examples], test_ds.targets()))
    else:
        train_part, test_part = _split(labelled, cfg["train.dev_fraction"], seed)
    X_tr, X_te = _baseline_features(kind, [d for d, _ in train_part], [d for d, _ in test_part], args)
    y_tr = [t for _, t in train_part]
    y_te = [t for _, t in test_part]
    C, epochs = cfg["svm.C"], cfg["svm.epochs"]
    if args.task == E_C:
        pred = bl.train_multilabel_svm(X_tr, np.array(y_tr), C, epochs).predict(X_te)
        value = jaccard_multilabel(list(pred), [np.asarray(t) for t in y_te])
    elif args.task in (EI_REG, V_REG):
        model = bl.train_linear_svm(X_tr, np.array(y_tr, dtype=float), C, bl.REGRESSION, epochs)
        value = _score(pearson, bl.predict(model, X_te), y_te)
    else:
        model = bl.train_linear_svm(X_tr, np.array(y_tr), C, bl.CLASSIFICATION, epochs)
        value = _score(pearson, bl.predict(model, X_te).astype(float), np.asarray(y_te, dtype=float))
    report = EvalReport(args.task, metric_name(head), value, [value])
    sys.stdout.write(write_reports([report], args.out))


def _text_indices(model: Model, text: str):
    tokens = tokenize(text)
    if not tokens:
        raise UserError("text has no tokens")
    return tokens, encode(tokens, model.embedding.vocab)


def cmd_visualize(args, cfg):
    model, _ = load_checkpoint(args.ckpt)
    tokens, indices = _text_indices(model, args.text)
    _, attention = model_forward(model, indices)
    data = render_heatmap([t.surface for t in tokens], attention, args.format)
    if args.out is not None:
        _echo_config(cfg, args, args.out)
        Path(args.out).write_bytes(data)
    else:
        sys.stdout.buffer.write(data)
        sys.stdout.flush()


def cmd_bias_audit(args, cfg):
    seed = _require_seed(cfg)
    _echo_config(cfg, args, args.out)
    model, meta = load_checkpoint(args.ckpt)
    pairs = load_bias_pairs(args.pairs)

    def score(text):
        return model_forward(model, _text_indices(model, text)[1])[0]

    dims = head_dimensions(model.config.head, _task_labels(meta.get("task", "")))
    results = bias_eval(score, pairs, dims, cfg["bias.resamples"], seed)
    sys.stdout.write(write_bias_results(results, args.out))


GRADCHECK_HEADS = {
    "regression": TaskHead.regression(),
    "ordinal": TaskHead.ordinal(4),
    "multilabel": TaskHead.multilabel(len(EC_LABELS)),
}


def cmd_gradcheck(args, cfg):
    seed = cfg["seed"] if cfg["seed"] is not None else 0
    heads = list(GRADCHECK_HEADS) if args.head == "all" else [args.head]
    worst = 0.0
    ok = True
    for name in heads:
        report = gradient_check(GRADCHECK_HEADS[name], seed=seed, tolerance=args.tolerance)
        for line in report.lines():
            print(f"{name}\t{line}")
        worst = max(worst, report.max_error)
        ok = ok and report.passed
    print(f"max rel err {worst:.3e} {'PASS' if ok else 'FAIL'}")
    return 0 if ok else 2


# parser ------------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="tweetaffect", description="Affect in tweets: embeddings, lexicon, BiLSTM-attention models.")
    common = _Parser(add_help=False)
    common.add_argument("--run-config", metavar="FILE", help="flat 'key = value' configuration file")
    common.add_argument("--set", action="append", default=[], metavar="KEY=VALUE", help="override one config key")
    common.add_argument("--seed", type=int, help="top-level seed (overrides the config file)")
    common.add_argument("-v", "--verbose", action="store_true", help="log progress and the resolved config")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def add(name, func, help_):
        sp = sub.add_parser(name, parents=[common], help=help_)
        sp.set_defaults(func=func)
        return sp

    sp = add("train-embeddings", cmd_train_embeddings, "train skip-gram embeddings")
    sp.add_argument("--corpus", required=True)
    sp.add_argument("--out", required=True)

    sp = add("build-lexicon", cmd_build_lexicon, "expand seed lexica to the embedding vocabulary")
    sp.add_argument("--corpus", required=True)
    sp.add_argument("--seeds", required=True, help="directory of <dimension>.tsv seed files")
    sp.add_argument("--embeddings", required=True)
    sp.add_argument("--out", required=True)

    sp = add("compose", cmd_compose, "append the ten affect norms to every embedding row")
    sp.add_argument("--embeddings", required=True)
    sp.add_argument("--lexicon", required=True)
    sp.add_argument("--out", required=True)

    sp = add("pretrain", cmd_pretrain, "3-class sentiment pretraining")
    sp.add_argument("--data", required=True)
    sp.add_argument("--dev")
    sp.add_argument("--embeddings", required=True)
    sp.add_argument("--out", required=True)

    sp = add("finetune", cmd_finetune, "train on one subtask")
    sp.add_argument("--task", required=True, choices=TASKS)
    sp.add_argument("--mode", required=True, choices=sorted(MODE_NAMES))
    sp.add_argument("--ckpt", required=True)
    sp.add_argument("--data", required=True)
    sp.add_argument("--dev")
    sp.add_argument("--out", required=True)

    sp = add("evaluate", cmd_evaluate, "metric report CSV")
    sp.add_argument("--task", required=True, choices=TASKS)
    sp.add_argument("--ckpt", required=True)
    sp.add_argument("--data", required=True)
    sp.add_argument("--runs", type=int)
    sp.add_argument("--train", help="retrain from --ckpt on this file once per run")
    sp.add_argument("--mode", choices=sorted(MODE_NAMES), help="training mode for --train")
    sp.add_argument("--out")

    sp = add("baseline", cmd_baseline, "TF-IDF / NBOW linear SVM baseline report")
    sp.add_argument("--kind", required=True, choices=sorted(BASELINE_KINDS))
    sp.add_argument("--task", required=True, choices=TASKS)
    sp.add_argument("--data", required=True)
    sp.add_argument("--test")
    sp.add_argument("--embeddings")
    sp.add_argument("--lexicon")
    sp.add_argument("--out")

    sp = add("visualize", cmd_visualize, "attention heat-map")
    sp.add_argument("--ckpt", required=True)
    sp.add_argument("--text", required=True)
    sp.add_argument("--format", choices=("html", "ansi"), default="html")
    sp.add_argument("--out")

    sp = add("bias-audit", cmd_bias_audit, "paired-sentence bias audit")
    sp.add_argument("--ckpt", required=True)
    sp.add_argument("--pairs", required=True)
    sp.add_argument("--out")

    sp = add("gradcheck", cmd_gradcheck, "finite-difference check of the full model")
    sp.add_argument("--config", choices=("small",), default="small", help="model size preset")
    sp.add_argument("--head", choices=("all",) + tuple(GRADCHECK_HEADS), default="all")
    sp.add_argument("--tolerance", type=float, default=1e-4)
    return p


USER_ERRORS = (UserError, rc.ConfigError, DatasetError, ContainerError, ValueError, KeyError, OSError)


def main(argv: Optional[Sequence[str]] = None) -> int:
    try:
        args = build_parser().parse_args(argv)
    except UserError as exc:
        print(f"tweetaffect: error: {exc}", file=sys.stderr)
        return 1
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s", stream=sys.stderr
    )
    try:
        cfg = rc.resolve(args.run_config, args.set, args.seed)
        status = args.func(args, cfg)
        return 0 if status is None else status
    except USER_ERRORS as exc:
        msg = exc.args[0] if isinstance(exc, KeyError) and exc.args else exc
        if isinstance(exc, OSError) and exc.filename is not None:
            msg = f"{exc.filename}: {exc.strerror}"
        print(f"tweetaffect: error: {msg}", file=sys.stderr)
        return 1
    except Exception as exc:  # noqa: BLE001
        print(f"tweetaffect: internal error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2


def main_exit() -> None:
    sys.exit(main())


if __name__ == "__main__":
    main_exit()
