import numpy as np
import pytest

from tweetaffect.datasets import (
    E_C,
    EC_LABELS,
    EI_OC,
    EI_REG,
    PRETRAIN,
    TASKS,
    V_OC,
    V_REG,
    DatasetError,
    load_dataset,
    save_dataset,
    synth_affect_corpus,
    synth_task_dataset,
    task_head,
)
from tweetaffect.lexicon import build_context_model
from tweetaffect.text import build_vocab


def write(tmp_path, text, name="d.tsv"):
    p = tmp_path / name
    p.write_bytes(text.encode("utf-8"))
    return p


def test_ei_reg_row(tmp_path):
    p = write(tmp_path, "ID\tTweet\tAffect Dimension\tIntensity Score\n2017-En-1\tso happy\tjoy\t0.583\n")
    ds = load_dataset(p, EI_REG)
    assert len(ds) == 1 and ds.examples[0].target == 0.583 and ds.emotion == "joy"


def test_v_oc_offset(tmp_path):
    p = write(tmp_path, "a\tugh\tvalence\t-3: very negative emotional state can be inferred\nb\tok\tvalence\t2\n")
    ds = load_dataset(p, V_OC)
    assert [ex.target for ex in ds] == [0, 5]


def test_ec_row(tmp_path):
    p = write(tmp_path, "x\tgrr\t" + "\t".join(["1"] + ["0"] * 10) + "\r\n")
    ds = load_dataset(p, E_C)
    bits = ds.examples[0].target
    assert len(bits) == 11 and [EC_LABELS[i] for i in np.flatnonzero(bits)] == ["anger"]


def test_pretrain_row(tmp_path):
    p = write(tmp_path, "1\tmeh\tNeutral\n2\tyay\tpositive\n")
    assert load_dataset(p, PRETRAIN).targets() == [1, 2]


@pytest.mark.parametrize(
    "task,row,match",
    [
        (EI_REG, "1\tt\tjoy\t1.5", "outside"),
        (EI_REG, "1\tt\tjoy", "columns"),
        (EI_REG, "1\tt\thope\t0.5", "emotion"),
        (EI_OC, "1\tt\tjoy\t4", "outside"),
        (V_OC, "1\tt\tvalence\tx", "bad target"),
        (E_C, "1\tt\t" + "\t".join(["2"] * 11), "0 or 1"),
        (PRETRAIN, "1\tt\tmixed", "sentiment"),
    ],
)
def test_errors_name_line(tmp_path, task, row, match):
    p = write(tmp_path, "ok\tfine\t" + {EI_REG: "joy\t0.1", EI_OC: "joy\t1"}.get(task, "valence\t0") + "\n" + row + "\n")
    if task in (E_C, PRETRAIN):
        p = write(tmp_path, row + "\n")
    with pytest.raises(DatasetError, match=match) as exc:
        load_dataset(p, task)
    assert ":1:" in str(exc.value) or ":2:" in str(exc.value)


def test_invalid_utf8(tmp_path):
    p = tmp_path / "d.tsv"
    p.write_bytes(b"1\t\xff\tjoy\t0.5\n")
    with pytest.raises(DatasetError, match="UTF-8"):
        load_dataset(p, EI_REG)


def test_unknown_task(tmp_path):
    with pytest.raises(ValueError):
        task_head("EI-xx")


@pytest.mark.parametrize("task", TASKS)
def test_save_load_identity(tmp_path, task):
    ds = synth_task_dataset(task, 20, seed=4)
    save_dataset(ds, tmp_path / "d.tsv")
    back = load_dataset(tmp_path / "d.tsv", task)
    assert [e.id for e in back] == [e.id for e in ds]
    assert back.texts() == ds.texts()
    for a, b in zip(back.targets(), ds.targets()):
        assert np.array_equal(a, b)


@pytest.mark.parametrize("task", TASKS)
def test_synth_task_contract(task):
    ds = synth_task_dataset(task, 32, seed=2)
    assert len(ds) == 32
    head = task_head(task)
    for ex in ds:
        if head.kind == "regression":
            assert 0.0 <= ex.target <= 1.0
        elif head.kind == "ordinal":
            assert 0 <= ex.target < head.size
        else:
            assert ex.target.shape == (11,)
    again = synth_task_dataset(task, 32, seed=2)
    assert [np.asarray(t).tobytes() for t in again.targets()] == [np.asarray(t).tobytes() for t in ds.targets()]


def test_synth_affect_corpus(tmp_path):
    a = synth_affect_corpus(seed=3)
    b = synth_affect_corpus(seed=3)
    pa, pb = a.write(tmp_path / "a"), b.write(tmp_path / "b")
    for key in ("corpus", "planted"):
        assert pa[key].read_bytes() == pb[key].read_bytes()
    assert all(np.all(np.abs(v) <= 1) for v in a.planted.values())
    assert len(a.docs) == 500 and len(a.clusters) == 2 and len(a.clusters[0]) == 20
    with pytest.raises(ValueError):
        synth_affect_corpus(n_clusters=1)


def test_synth_corpus_within_cluster_ppmi():
    sc = synth_affect_corpus(seed=0)
    corpus = [d.split() for d in sc.docs]
    ctx = build_context_model(corpus, build_vocab(corpus, 1), 5)
    a, b = sc.clusters
    S = ctx.similarity_matrix(a + b, a + b)
    n = len(a)
    within = np.mean([S[i, j] for i in range(2 * n) for j in range(2 * n) if i != j and (i < n) == (j < n)])
    cross = S[:n, n:].mean()
    assert within > cross
