import contextlib
import math
import io
import subprocess
import sys
from pathlib import Path

import pytest

from tweetaffect.cli import main
from tweetaffect.model import load_checkpoint

GOLDEN = Path(__file__).parent / "golden"
sys.path.insert(0, str(GOLDEN))
from make_golden import TEXT as GOLDEN_TEXT  # noqa: E402


def run(*argv):
    out = io.StringIO()
    with contextlib.redirect_stdout(out):
        code = main([str(a) for a in argv])
    return code, out.getvalue()


@pytest.fixture(scope="module")
def pipeline(workspace, tmp_path_factory):
    ws = workspace
    out = tmp_path_factory.mktemp("cli")
    cfg = ("--run-config", ws / "run.cfg")
    steps = {
        "emb": ("train-embeddings", "--corpus", ws / "corpus.txt", "--out", out / "E.txt", *cfg),
        "lex": ("build-lexicon", "--corpus", ws / "corpus.txt", "--seeds", ws / "seeds",
                "--embeddings", out / "E.txt", "--out", out / "LEX.tsv", *cfg),
        "compose": ("compose", "--embeddings", out / "E.txt", "--lexicon", out / "LEX.tsv", "--out", out / "E22.txt", *cfg),
        "pretrain": ("pretrain", "--data", ws / "pretrain-sentiment.tsv", "--embeddings", out / "E22.txt",
                     "--out", out / "pre.ckpt", *cfg),
    }
    results = {}
    for name, argv in steps.items():
        results[name] = run(*argv)
    for mode in ("rd", "tl-fr", "tl-ft"):
        results[mode] = run("finetune", "--task", "V-reg", "--mode", mode, "--ckpt", out / "pre.ckpt",
                            "--data", ws / "V-reg.tsv", "--out", out / f"v-{mode}.ckpt", *cfg)
    return ws, out, results


def test_pipeline_steps_succeed(pipeline):
    _, out, results = pipeline
    assert {k: code for k, (code, _) in results.items()} == {k: 0 for k in results}
    for name in ("E.txt", "LEX.tsv", "E22.txt", "pre.ckpt", "v-rd.ckpt", "v-tl-ft.ckpt", "pre.ckpt.history.csv"):
        assert (out / name).stat().st_size > 0
    header = (out / "E22.txt").read_text().splitlines()[0].split()
    assert int(header[1]) == 22


def test_run_config_echo(pipeline):
    _, out, _ = pipeline
    text = (out / "run-config.txt").read_text()
    assert text.startswith("# command = finetune\n")
    assert "seed = 3\n" in text and "model.lstm_size = 6\n" in text


def test_finetune_meta_and_frozen_encoder(pipeline):
    _, out, _ = pipeline
    pre, _ = load_checkpoint(out / "pre.ckpt")
    fr, meta = load_checkpoint(out / "v-tl-fr.ckpt")
    assert meta == {"task": "V-reg", "mode": "TL-FR", "seed": "3"}
    for name in pre.params:
        if not name.startswith("head."):
            assert fr.params[name].tobytes() == pre.params[name].tobytes()
    assert fr.embedding.vectors.tobytes() == pre.embedding.vectors.tobytes()


def test_evaluate_reports(pipeline, tmp_path):
    ws, out, _ = pipeline
    code, text = run("evaluate", "--task", "V-reg", "--ckpt", out / "v-tl-ft.ckpt", "--data", ws / "V-reg-test.tsv",
                     "--runs", 2, "--seed", 1, "--out", tmp_path / "rep.csv")
    assert code == 0
    lines = text.splitlines()
    assert lines[0] == "task,metric,value,run_1,run_2"
    row = lines[1].split(",")
    assert row[:2] == ["V-reg", "pearson"] and row[3] == row[4] == row[2]
    assert (tmp_path / "rep.csv").read_text() == text


def test_evaluate_with_retraining(pipeline):
    ws, out, _ = pipeline
    code, text = run("evaluate", "--task", "V-reg", "--ckpt", out / "pre.ckpt", "--data", ws / "V-reg-test.tsv",
                     "--train", ws / "V-reg.tsv", "--mode", "tl-ft", "--runs", 2, "--run-config", ws / "run.cfg")
    assert code == 0
    assert text.splitlines()[0].endswith("run_1,run_2")


def test_evaluate_head_mismatch(pipeline, capsys):
    ws, out, _ = pipeline
    code, _ = run("evaluate", "--task", "E-c", "--ckpt", out / "v-rd.ckpt", "--data", ws / "E-c.tsv", "--seed", 1)
    assert code == 1
    assert "does not match" in capsys.readouterr().err


@pytest.mark.parametrize("kind", ["bow", "nbow", "nbow-affect"])
@pytest.mark.parametrize("task,metric", [("V-reg", "pearson"), ("E-c", "jaccard"), ("pretrain-sentiment", "pearson")])
def test_baselines(pipeline, kind, task, metric):
    ws, out, _ = pipeline
    code, text = run("baseline", "--kind", kind, "--task", task, "--data", ws / f"{task}.tsv",
                     "--embeddings", out / "E.txt", "--lexicon", out / "LEX.tsv", "--seed", 0, "--set", "svm.epochs=100")
    assert code == 0
    row = text.splitlines()[1].split(",")
    assert row[:2] == [task, metric]
    value = float(row[2])
    assert math.isnan(value) or -1.0 <= value <= 1.0


def test_baseline_with_test_file(pipeline):
    ws, out, _ = pipeline
    code, text = run("baseline", "--kind", "bow", "--task", "V-reg", "--data", ws / "V-reg.tsv",
                     "--test", ws / "V-reg-test.tsv", "--seed", 0)
    assert code == 0 and float(text.splitlines()[1].split(",")[2]) > 0.5


def test_bias_audit(pipeline, tmp_path):
    ws, out, _ = pipeline
    argv = ("bias-audit", "--ckpt", out / "pre.ckpt", "--pairs", ws / "pairs.tsv", "--seed", 0)
    code, text = run(*argv)
    assert code == 0
    lines = text.splitlines()
    assert lines[0] == "dimension,avg_diff,p_value"
    assert [line.split(",")[0] for line in lines[1:]] == ["negative", "neutral", "positive"]
    assert run(*argv)[1] == text


def test_visualize_stdout(pipeline, capfdbinary):
    _, out, _ = pipeline
    code = main(["visualize", "--ckpt", str(out / "v-rd.ckpt"), "--text", "good0 plain1", "--format", "ansi"])
    assert code == 0
    data = capfdbinary.readouterr().out
    assert data.count(b"\x1b[0m") == 2


@pytest.mark.parametrize("fmt", ["html", "ansi"])
def test_visualize_golden(tmp_path, fmt):
    paths = [tmp_path / f"a.{fmt}", tmp_path / f"b.{fmt}"]
    for p in paths:
        assert run("visualize", "--ckpt", GOLDEN / "heatmap.ckpt", "--text", GOLDEN_TEXT, "--format", fmt, "--out", p)[0] == 0
    golden = (GOLDEN / f"heatmap.{fmt}").read_bytes()
    assert paths[0].read_bytes() == paths[1].read_bytes() == golden


def test_gradcheck_passes():
    code, text = run("gradcheck", "--config", "small", "--head", "regression")
    assert code == 0
    assert text.splitlines()[-1].endswith("PASS")


def test_gradcheck_reports_failure():
    code, text = run("gradcheck", "--head", "regression", "--tolerance", "1e-30")
    assert code == 2 and text.splitlines()[-1].endswith("FAIL")


@pytest.mark.parametrize(
    "argv,match",
    [
        (["pretrain", "--data", "x.tsv", "--embeddings", "e.txt", "--out", "o"], "seed is required"),
        (["train-embeddings", "--corpus", "/nonexistent/corpus.txt", "--out", "o", "--seed", "1"], "No such file"),
        (["compose", "--embeddings", "e.txt"], "required"),
        (["gradcheck", "--set", "bogus=1"], "unknown key"),
        (["frobnicate"], "invalid choice"),
    ],
)
def test_user_errors_exit_1(argv, match, capsys, tmp_path, monkeypatch):
    monkeypatch.chdir(tmp_path)
    assert main(argv) == 1
    err = capsys.readouterr().err
    assert match in err
    assert "Traceback" not in err


def test_bad_dataset_line_reported(workspace, tmp_path, capsys):
    bad = tmp_path / "bad.tsv"
    bad.write_text("1\tsome text\tvalence\t2.5\n")
    code = main(["baseline", "--kind", "bow", "--task", "V-reg", "--data", str(bad), "--seed", "0"])
    assert code == 1
    assert f"{bad}:1:" in capsys.readouterr().err


def test_console_script_help():
    res = subprocess.run([sys.executable, "-m", "tweetaffect.cli", "--help"], capture_output=True, text=True)
    assert res.returncode == 0 and "gradcheck" in res.stdout


def test_constant_predictions_report_nan(pipeline, caplog):
    ws, out, _ = pipeline
    code, text = run("baseline", "--kind", "nbow", "--task", "pretrain-sentiment", "--data", ws / "pretrain-sentiment.tsv",
                     "--embeddings", out / "E.txt", "--seed", 0, "--set", "svm.C=0")
    assert code == 0
    assert text.splitlines()[1] == "pretrain-sentiment,pearson,nan,nan"
    assert "undefined" in caplog.text
