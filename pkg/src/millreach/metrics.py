"""Scoring of predicted labels against geometric ground truth."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import FormatError, LengthMismatch

LABEL_KINDS = ("inaccessible", "occlusion")


@dataclass(frozen=True, eq=False)
class LabelVector:
    values: np.ndarray  # (n,) bool
    kind: str

    def __post_init__(self):
        if self.kind not in LABEL_KINDS:
            raise ValueError(f"label kind must be one of {LABEL_KINDS}, got {self.kind!r}")
        if len(self.values) == 0:
            raise ValueError("label vector must be nonempty")

    def __len__(self) -> int:
        return len(self.values)


@dataclass(frozen=True)
class Confusion:
    tp: int
    fp: int
    tn: int
    fn: int

    @property
    def total(self) -> int:
        return self.tp + self.fp + self.tn + self.fn


def confusion(gt: LabelVector, pred: LabelVector) -> Confusion:
    """Standard confusion counts with "label present" as the positive class."""
    if len(gt) != len(pred):
        raise LengthMismatch(f"ground truth has {len(gt)} labels, prediction has {len(pred)}")
    if gt.kind != pred.kind:
        raise ValueError(f"label kinds differ: {gt.kind} vs {pred.kind}")
    g = np.asarray(gt.values, dtype=bool)
    p = np.asarray(pred.values, dtype=bool)
    return Confusion(
        tp=int(np.count_nonzero(g & p)),
        fp=int(np.count_nonzero(~g & p)),
        tn=int(np.count_nonzero(~g & ~p)),
        fn=int(np.count_nonzero(g & ~p)),
    )


def accuracy(c: Confusion) -> float:
    if c.total == 0:
        raise ValueError("accuracy undefined for empty confusion")
    return (c.tp + c.tn) / c.total


def f1(c: Confusion) -> float:
    """F1 = 2tp / (2tp + fp + fn); 1.0 when there are no positives anywhere
    (nothing to find and nothing found counts as a correct prediction)."""
    denom = 2 * c.tp + c.fp + c.fn
    if denom == 0:
        return 1.0
    return 2 * c.tp / denom


def read_predictions(path: str) -> tuple[np.ndarray, np.ndarray]:
    """Parse a prediction file: one "l_I l_O" line per site, each 0 or 1,
    in dataset-record order. Returns the two boolean columns."""
    li, lo = [], []
    with open(path, "r", encoding="ascii") as fh:
        for lineno, raw in enumerate(fh, 1):
            line = raw.strip()
            if not line:
                continue
            parts = line.split()
            if len(parts) != 2 or parts[0] not in ("0", "1") or parts[1] not in ("0", "1"):
                raise FormatError(f"{path}:{lineno}: expected 'lI lO' as 0/1 0/1, got {raw!r}")
            li.append(parts[0] == "1")
            lo.append(parts[1] == "1")
    if not li:
        raise FormatError(f"{path}: no prediction lines")
    return np.array(li, dtype=bool), np.array(lo, dtype=bool)


def score_pair(gt_i, gt_o, pred_i, pred_o) -> dict:
    """Acc/F1 for both label kinds; arrays must already be length-matched."""
    ci = confusion(LabelVector(np.asarray(gt_i, bool), "inaccessible"),
                   LabelVector(np.asarray(pred_i, bool), "inaccessible"))
    co = confusion(LabelVector(np.asarray(gt_o, bool), "occlusion"),
                   LabelVector(np.asarray(pred_o, bool), "occlusion"))
    return {
        "acc_i": accuracy(ci),
        "f1_i": f1(ci),
        "acc_o": accuracy(co),
        "f1_o": f1(co),
    }
