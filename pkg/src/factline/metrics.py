"""Precision / recall / F1 with macro, weighted and micro averaging."""

from __future__ import annotations

import math
from collections.abc import Hashable, Sequence
from dataclasses import dataclass

import numpy as np

AVERAGING = ("macro", "weighted", "micro")


@dataclass(frozen=True)
class EvalScores:
    labels: tuple[Hashable, ...]
    precision: dict[Hashable, float]
    recall: dict[Hashable, float]
    f1: dict[Hashable, float]
    support: dict[Hashable, int]
    confusion: np.ndarray  # rows = gold, columns = predicted, in `labels` order
    averaging: str = "weighted"

    def aggregate(self, averaging: str | None = None) -> dict[str, float]:
        """Aggregate precision, recall and F1 under one averaging scheme."""
        scheme = averaging or self.averaging
        if scheme not in AVERAGING:
            raise ValueError(f"unknown averaging {scheme!r}")
        labels = [lab for lab in self.labels if lab in self.f1]
        if scheme == "micro":
            tp = float(np.trace(self.confusion))
            total = float(self.confusion.sum())
            acc = tp / total if total else 0.0
            return {"precision": acc, "recall": acc, "f1": acc}
        if not labels:
            return {"precision": 0.0, "recall": 0.0, "f1": 0.0}
        w = [1.0 if scheme == "macro" else float(self.support[lab]) for lab in labels]
        total = math.fsum(w)
        if total == 0:
            return {"precision": 0.0, "recall": 0.0, "f1": 0.0}

        def mean(values: dict[Hashable, float]) -> float:
            return math.fsum(wi * values[lab] for wi, lab in zip(w, labels)) / total

        return {"precision": mean(self.precision), "recall": mean(self.recall), "f1": mean(self.f1)}

    @property
    def f1_score(self) -> float:
        return self.aggregate()["f1"]

    @property
    def accuracy(self) -> float:
        total = self.confusion.sum()
        return float(np.trace(self.confusion) / total) if total else 0.0


def _ratio(num: float, den: float) -> float:
    return num / den if den else 0.0


def evaluate_f1(
    pred: Sequence[Hashable],
    gold: Sequence[Hashable],
    averaging: str = "weighted",
    labels: Sequence[Hashable] | None = None,
    ignore: Sequence[Hashable] = (),
) -> EvalScores:
    """Per-class precision/recall/F1 plus a confusion matrix.

    Classes default to every label seen in `gold` or `pred`, sorted. Labels in
    `ignore` keep their confusion column (so they still count as misses) but
    are left out of the per-class averages.
    """
    if len(pred) != len(gold):
        raise ValueError(f"length mismatch: {len(pred)} predictions vs {len(gold)} gold labels")
    if not gold:
        raise ValueError("need at least one item to evaluate")
    if averaging not in AVERAGING:
        raise ValueError(f"unknown averaging {averaging!r}")
    if labels is None:
        labels = sorted(set(gold) | set(pred), key=str)
    else:
        labels = list(labels) + sorted((set(gold) | set(pred)) - set(labels), key=str)
    pos = {lab: i for i, lab in enumerate(labels)}
    cm = np.zeros((len(labels), len(labels)), dtype=np.int64)
    for p, g in zip(pred, gold):
        cm[pos[g], pos[p]] += 1
    precision: dict[Hashable, float] = {}
    recall: dict[Hashable, float] = {}
    f1: dict[Hashable, float] = {}
    support: dict[Hashable, int] = {}
    skip = set(ignore)
    for lab, i in pos.items():
        support[lab] = int(cm[i].sum())
        if lab in skip:
            continue
        tp = float(cm[i, i])
        p = _ratio(tp, float(cm[:, i].sum()))
        r = _ratio(tp, float(cm[i].sum()))
        precision[lab], recall[lab] = p, r
        f1[lab] = _ratio(2 * p * r, p + r)
    return EvalScores(tuple(labels), precision, recall, f1, support, cm, averaging)
