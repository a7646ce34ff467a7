import numpy as np
import pytest

from millreach import (
    Confusion,
    FormatError,
    LabelVector,
    LengthMismatch,
    accuracy,
    confusion,
    f1,
    read_predictions,
    score_pair,
)


def lv(bits, kind="inaccessible"):
    return LabelVector(np.array(bits, dtype=bool), kind)


def test_confusion_perfect():
    c = confusion(lv([1, 0, 1]), lv([1, 0, 1]))
    assert (c.tp, c.tn, c.fp, c.fn) == (2, 1, 0, 0)


def test_confusion_mixed():
    c = confusion(lv([1, 1, 1, 0]), lv([0, 1, 1, 1]))
    assert (c.tp, c.fn, c.fp, c.tn) == (2, 1, 1, 0)


def test_confusion_length_mismatch():
    with pytest.raises(LengthMismatch):
        confusion(lv([1, 0]), lv([1, 0, 0]))


def test_confusion_kind_mismatch():
    with pytest.raises(ValueError):
        confusion(lv([1, 0]), lv([1, 0], kind="occlusion"))


def test_accuracy_values():
    assert accuracy(Confusion(tp=3, fp=0, tn=2, fn=0)) == 1.0
    assert accuracy(Confusion(tp=2, fn=1, fp=1, tn=0)) == 0.5
    assert accuracy(Confusion(tp=0, fp=0, tn=4, fn=0)) == 1.0  # all-negative case
    with pytest.raises(ValueError):
        accuracy(Confusion(0, 0, 0, 0))


def test_f1_values():
    # gt positives {1,2,3}, pred positives {2,3,4}
    c = confusion(lv([0, 1, 1, 1, 0]), lv([0, 0, 1, 1, 1]))
    assert f1(c) == pytest.approx(2 / 3, abs=1e-12)
    assert f1(Confusion(tp=5, fp=0, tn=1, fn=0)) == 1.0
    assert f1(Confusion(tp=0, fp=0, tn=3, fn=2)) == 0.0  # pred all negative
    assert f1(Confusion(tp=0, fp=0, tn=9, fn=0)) == 1.0  # vacuous case


def test_f1_equality_condition():
    rng = np.random.default_rng(0)
    for _ in range(50):
        g = rng.integers(0, 2, 12).astype(bool)
        p = rng.integers(0, 2, 12).astype(bool)
        if not (g.any() or p.any()):
            continue
        c = confusion(lv(g), lv(p))
        assert f1(c) <= 1.0
        assert (f1(c) == 1.0) == (c.fp == 0 and c.fn == 0)


def test_permutation_invariance():
    rng = np.random.default_rng(1)
    g = rng.integers(0, 2, 40).astype(bool)
    p = rng.integers(0, 2, 40).astype(bool)
    base = confusion(lv(g), lv(p))
    for _ in range(10):
        perm = rng.permutation(40)
        c = confusion(lv(g[perm]), lv(p[perm]))
        assert (c.tp, c.fp, c.tn, c.fn) == (base.tp, base.fp, base.tn, base.fn)
        assert accuracy(c) == accuracy(base)
        assert f1(c) == f1(base)


def test_read_predictions(tmp_path):
    p = tmp_path / "pred.txt"
    p.write_text("1 0\n0 0\n1 1\n\n0 1\n")
    li, lo = read_predictions(str(p))
    assert list(li) == [True, False, True, False]
    assert list(lo) == [False, False, True, True]


def test_read_predictions_errors(tmp_path):
    p = tmp_path / "bad.txt"
    p.write_text("1 2\n")
    with pytest.raises(FormatError):
        read_predictions(str(p))
    p.write_text("1\n")
    with pytest.raises(FormatError):
        read_predictions(str(p))
    p.write_text("")
    with pytest.raises(FormatError):
        read_predictions(str(p))


def test_score_pair():
    gt_i = [1, 1, 0, 0]
    gt_o = [0, 1, 0, 0]
    scores = score_pair(gt_i, gt_o, gt_i, gt_o)
    assert scores == {"acc_i": 1.0, "f1_i": 1.0, "acc_o": 1.0, "f1_o": 1.0}
    scores = score_pair(gt_i, gt_o, [0, 0, 0, 0], [0, 0, 0, 0])
    assert scores["acc_i"] == 0.5
    assert scores["f1_o"] == 0.0
