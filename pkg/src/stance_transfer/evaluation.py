"""Task scoring: per-class precision/recall/F1, the pooled FAVOR/AGAINST
macro-F1, per-topic breakdowns and the class-size vs F1 correlation."""

from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .labels import LABELS, StanceLabel


@dataclass
class ConfusionCounts:
    tp: int = 0
    fp: int = 0
    fn: int = 0


def confusion_counts(golds, preds, cls) -> ConfusionCounts:
    if len(golds) != len(preds):
        raise ValueError(f"length mismatch: {len(golds)} golds vs {len(preds)} predictions")
    cls = StanceLabel.parse(cls)
    cc = ConfusionCounts()
    for g, p in zip(golds, preds):
        g, p = StanceLabel.parse(g), StanceLabel.parse(p)
        if p == cls and g == cls:
            cc.tp += 1
        elif p == cls:
            cc.fp += 1
        elif g == cls:
            cc.fn += 1
    return cc


def f1_per_class(golds, preds, cls) -> tuple[float, float, float]:
    """(precision, recall, F1) for one class; zero denominators give 0.

    F1 is evaluated as 2TP / (2TP + FP + FN), the same quantity as the
    harmonic mean of P and R but rounded once.
    """
    if len(golds) != len(preds):
        raise ValueError(f"length mismatch: {len(golds)} golds vs {len(preds)} predictions")
    if not golds:
        raise ValueError("empty input")
    c = confusion_counts(golds, preds, cls)
    p = c.tp / (c.tp + c.fp) if c.tp + c.fp else 0.0
    r = c.tp / (c.tp + c.fn) if c.tp + c.fn else 0.0
    denom = 2 * c.tp + c.fp + c.fn
    f = 2 * c.tp / denom if c.tp else 0.0
    return p, r, f


def official_score(golds, preds) -> float:
    """Mean of F1(FAVOR) and F1(AGAINST) over the pooled predictions."""
    if not golds:
        raise ValueError("empty input")
    f_favor = f1_per_class(golds, preds, StanceLabel.FAVOR)[2]
    f_against = f1_per_class(golds, preds, StanceLabel.AGAINST)[2]
    return (f_favor + f_against) / 2


def r_squared(xs: Sequence[float], ys: Sequence[float]) -> float:
    """Squared Pearson correlation."""
    x = np.asarray(xs, dtype=np.float64)
    y = np.asarray(ys, dtype=np.float64)
    if x.shape != y.shape or x.size < 2:
        raise ValueError("need at least two paired points")
    dx, dy = x - x.mean(), y - y.mean()
    sxx, syy = float(dx @ dx), float(dy @ dy)
    if sxx == 0 or syy == 0:
        raise ValueError("degenerate")
    return float((dx @ dy) ** 2 / (sxx * syy))


# --------------------------------------------------------------------------

@dataclass
class ClassScores:
    precision: float
    recall: float
    f1: float
    support: int


@dataclass
class EvalReport:
    per_topic: dict[str, dict[str, ClassScores]]
    topic_scores: dict[str, float]
    f1_favor: float
    f1_against: float
    official: float
    train_counts: dict[str, dict[str, int]] = field(default_factory=dict)
    r_squared: float | None = None

    def to_dict(self) -> dict:
        return {
            "official_score": self.official,
            "f1_favor": self.f1_favor,
            "f1_against": self.f1_against,
            "r_squared": self.r_squared,
            "topics": {
                t: {
                    "score": self.topic_scores[t],
                    "classes": {c: vars(s) for c, s in classes.items()},
                    "train_counts": self.train_counts.get(t),
                }
                for t, classes in self.per_topic.items()
            },
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"

    def to_table(self) -> str:
        lines = [f"{'topic':<40} {'class':<8} {'P':>7} {'R':>7} {'F1':>7} {'n':>6}"]
        for topic, classes in self.per_topic.items():
            for cls, s in classes.items():
                lines.append(f"{topic[:40]:<40} {cls:<8} {s.precision:7.4f} {s.recall:7.4f} "
                             f"{s.f1:7.4f} {s.support:6d}")
            lines.append(f"{topic[:40]:<40} {'score':<8} {'':>7} {'':>7} "
                         f"{self.topic_scores[topic]:7.4f}")
        lines.append("")
        lines.append(f"F1(FAVOR)   {self.f1_favor:.4f}")
        lines.append(f"F1(AGAINST) {self.f1_against:.4f}")
        lines.append(f"official    {self.official:.4f}")
        if self.r_squared is not None:
            lines.append(f"r^2 (train count vs F1) {self.r_squared:.4f}")
        return "\n".join(lines) + "\n"

    def breakdown_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["topic", "class", "precision", "recall", "f1", "support", "train_count"])
        for topic, classes in self.per_topic.items():
            counts = self.train_counts.get(topic, {})
            for cls, s in classes.items():
                w.writerow([topic, cls, repr(s.precision), repr(s.recall), repr(s.f1),
                            s.support, counts.get(cls, "")])
        return buf.getvalue()

    def correlation_points(self) -> list[tuple[int, float]]:
        """(training count, F1) for FAVOR and AGAINST in every topic with counts."""
        pts = []
        for topic, classes in self.per_topic.items():
            counts = self.train_counts.get(topic)
            if not counts:
                continue
            for cls in ("FAVOR", "AGAINST"):
                pts.append((counts.get(cls, 0), classes[cls].f1))
        return pts


def evaluate(golds, preds, topics, train_counts: dict[str, dict[str, int]] | None = None) -> EvalReport:
    """Build the full report. ``topics[i]`` names the topic of example i."""
    if not (len(golds) == len(preds) == len(topics)):
        raise ValueError("golds, preds and topics differ in length")
    if not golds:
        raise ValueError("empty input")
    golds = [StanceLabel.parse(g) for g in golds]
    preds = [StanceLabel.parse(p) for p in preds]
    per_topic, topic_scores = {}, {}
    for topic in dict.fromkeys(topics):
        idx = [i for i, t in enumerate(topics) if t == topic]
        g = [golds[i] for i in idx]
        p = [preds[i] for i in idx]
        per_topic[topic] = {
            lab.name: ClassScores(*f1_per_class(g, p, lab), sum(x == lab for x in g))
            for lab in LABELS
        }
        topic_scores[topic] = official_score(g, p)
    report = EvalReport(
        per_topic=per_topic,
        topic_scores=topic_scores,
        f1_favor=f1_per_class(golds, preds, StanceLabel.FAVOR)[2],
        f1_against=f1_per_class(golds, preds, StanceLabel.AGAINST)[2],
        official=official_score(golds, preds),
        train_counts=dict(train_counts or {}),
    )
    pts = report.correlation_points()
    if len(pts) >= 2:
        try:
            report.r_squared = r_squared([x for x, _ in pts], [y for _, y in pts])
        except ValueError:
            report.r_squared = None
    return report
