"""Confusion counts and the five detection indicators (accuracy, precision,
recall, F1, false alarm rate), reported as percentages with support-weighted
per-class averaging."""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .data import LABEL_ABNORMAL, LABEL_NORMAL


@dataclass
class ConfusionCounts:
    tp: int
    fp: int
    tn: int
    fn: int

    @property
    def total(self) -> int:
        return self.tp + self.fp + self.tn + self.fn


@dataclass
class MetricReport:
    ac: float                        # all values in percent
    pr: float
    rc: float
    f1: float
    far: float
    per_class: dict
    support: dict
    flags: list = field(default_factory=list)

    def to_json(self) -> str:
        return json.dumps({
            "ac": self.ac, "pr": self.pr, "rc": self.rc, "f1": self.f1,
            "far": self.far, "per_class": self.per_class,
            "support": self.support, "flags": self.flags,
        }, indent=2)

    @classmethod
    def from_json(cls, text: str) -> "MetricReport":
        d = json.loads(text)
        return cls(d["ac"], d["pr"], d["rc"], d["f1"], d["far"],
                   d["per_class"], d["support"], d["flags"])


def confusion(predicted, actual) -> ConfusionCounts:
    """Counts with abnormal as the positive class."""
    predicted = np.asarray(predicted)
    actual = np.asarray(actual)
    if predicted.shape != actual.shape:
        raise ValueError(f"length mismatch: {predicted.shape} vs {actual.shape}")
    valid = {LABEL_NORMAL, LABEL_ABNORMAL}
    seen = set(np.unique(predicted)) | set(np.unique(actual))
    if not seen <= valid:
        raise ValueError(f"labels must be in {valid}, got {sorted(seen)}")
    pos_p = predicted == LABEL_ABNORMAL
    pos_a = actual == LABEL_ABNORMAL
    return ConfusionCounts(
        tp=int(np.sum(pos_p & pos_a)),
        fp=int(np.sum(pos_p & ~pos_a)),
        tn=int(np.sum(~pos_p & ~pos_a)),
        fn=int(np.sum(~pos_p & pos_a)),
    )


def _ratio(num, den, flags, name):
    if den == 0:
        flags.append(name)
        return 0.0
    return 100.0 * num / den


def compute_metrics(counts: ConfusionCounts) -> MetricReport:
    """Headline PR/RC/F1 are support-weighted averages over both classes,
    which makes weighted recall identical to accuracy. FAR treats abnormal
    as positive. Zero-denominator metrics report 0 with a flag."""
    if counts.total == 0:
        raise ValueError("at least one sample required")
    flags = []
    per_class = {}
    # per class: (tp, fp, fn) with that class as positive
    views = {
        "abnormal": (counts.tp, counts.fp, counts.fn),
        "normal": (counts.tn, counts.fn, counts.fp),
    }
    support = {"abnormal": counts.tp + counts.fn, "normal": counts.tn + counts.fp}
    for name, (tp, fp, fn) in views.items():
        pr = _ratio(tp, tp + fp, flags, f"pr_{name}")
        rc = _ratio(tp, tp + fn, flags, f"rc_{name}")
        if pr + rc == 0:
            flags.append(f"f1_{name}")
            f1 = 0.0
        else:
            f1 = 2.0 * pr * rc / (pr + rc)
        per_class[name] = {"pr": pr, "rc": rc, "f1": f1}

    total = counts.total
    ac = 100.0 * (counts.tp + counts.tn) / total
    weighted = {m: sum(per_class[c][m] * support[c] for c in views) / total
                for m in ("pr", "rc", "f1")}
    far = _ratio(counts.fp, counts.fp + counts.tn, flags, "far")
    return MetricReport(ac, weighted["pr"], weighted["rc"], weighted["f1"],
                        far, per_class, support, flags)


def evaluate_labels(predicted, actual) -> MetricReport:
    return compute_metrics(confusion(predicted, actual))
