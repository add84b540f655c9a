from pathlib import Path

import pytest

from tweetaffect.datasets import E_C, PRETRAIN, V_REG, save_dataset, synth_affect_corpus, synth_task_dataset

SMALL_CONFIG = """\
seed = 3
sgns.dim = 12
sgns.min_count = 1
sgns.epochs = 2
model.lstm_size = 6
train.max_epochs = 3
train.batch_size = 8
lexicon.n_seeds = 10
bias.resamples = 1000
"""


def make_workspace(root: Path) -> Path:
    """Synthetic corpus, seed lexica, task files, bias pairs and a small run config."""
    sc = synth_affect_corpus(seed=0)
    paths = sc.write(root)
    tasks = {
        PRETRAIN: synth_task_dataset(PRETRAIN, 60, seed=1),
        V_REG: synth_task_dataset(V_REG, 60, seed=2),
        E_C: synth_task_dataset(E_C, 60, seed=4),
    }
    for name, ds in tasks.items():
        save_dataset(ds, root / f"{name}.tsv")
    save_dataset(synth_task_dataset(V_REG, 30, seed=3), root / "V-reg-test.tsv")
    # the embedding corpus covers both the affect clusters and the task words
    with open(paths["corpus"], "a", encoding="utf-8") as fh:
        for ds in tasks.values():
            fh.write("".join(t + "\n" for t in ds.texts()))
    with open(root / "pairs.tsv", "w", encoding="utf-8") as fh:
        fh.write("ID\ta\tb\tctx\n")
        for i in range(5):
            fh.write(f"p{i}\tgood{i} plain1 plain2\tbad{i} plain1 plain2\tx\n")
    (root / "run.cfg").write_text(SMALL_CONFIG, encoding="utf-8")
    return root


@pytest.fixture(scope="session")
def workspace(tmp_path_factory) -> Path:
    return make_workspace(tmp_path_factory.mktemp("ws"))


def pytest_terminal_summary(terminalreporter):
    from test_acceptance import RESULTS

    if RESULTS:
        terminalreporter.section("acceptance criteria")
        for line in sorted(RESULTS):
            terminalreporter.write_line(line)
