"""Confusion matrices, classification metrics, and the JSON evaluation report."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path


class MetricsError(ValueError):
    pass


@dataclass(frozen=True)
class ConfusionMatrix:
    tp: int = 0
    fp: int = 0
    fn: int = 0
    tn: int = 0

    @property
    def total(self):
        return self.tp + self.fp + self.fn + self.tn


@dataclass(frozen=True)
class ClipResult:
    id: str
    score: float
    pred: int
    label: int


@dataclass(frozen=True)
class EvalReport:
    matrix: ConfusionMatrix
    accuracy: float
    precision: float
    recall: float
    f1: float
    threshold: float
    per_clip: tuple = field(default_factory=tuple)


def confusion_from_scores(pairs, threshold=0.5) -> ConfusionMatrix:
    """Count outcomes with the convention pred = score >= threshold."""
    pairs = list(pairs)
    if not pairs:
        raise MetricsError("no (score, label) pairs")
    tp = fp = fn = tn = 0
    for score, label in pairs:
        if label not in (0, 1):
            raise MetricsError(f"label {label!r} not in {{0, 1}}")
        pred = score >= threshold
        if pred and label:
            tp += 1
        elif pred:
            fp += 1
        elif label:
            fn += 1
        else:
            tn += 1
    return ConfusionMatrix(tp, fp, fn, tn)


def _ratio(num, den):
    return num / den if den else 0.0


def compute_metrics(m: ConfusionMatrix):
    if m.total < 1:
        raise MetricsError("confusion matrix is empty")
    precision = _ratio(m.tp, m.tp + m.fp)
    recall = _ratio(m.tp, m.tp + m.fn)
    return {
        "accuracy": (m.tp + m.tn) / m.total,
        "precision": precision,
        "recall": recall,
        "f1": _ratio(2 * precision * recall, precision + recall),
    }


def build_report(ids, scores, labels, threshold=0.5) -> EvalReport:
    ids, scores, labels = list(ids), [float(s) for s in scores], [int(y) for y in labels]
    m = confusion_from_scores(zip(scores, labels), threshold)
    per_clip = tuple(ClipResult(i, s, int(s >= threshold), y) for i, s, y in zip(ids, scores, labels))
    return EvalReport(m, threshold=float(threshold), per_clip=per_clip, **compute_metrics(m))


def _fmt(v):
    return f"{v:.6f}"


def _encode(obj):
    # Reals render with exactly six decimals; ints and strings stay as JSON normally would.
    if isinstance(obj, bool) or obj is None:
        return json.dumps(obj)
    if isinstance(obj, float):
        return _fmt(obj)
    if isinstance(obj, int):
        return str(obj)
    if isinstance(obj, str):
        return json.dumps(obj)
    if isinstance(obj, dict):
        return "{" + ",".join(f"{json.dumps(k)}:{_encode(obj[k])}" for k in sorted(obj)) + "}"
    if isinstance(obj, (list, tuple)):
        return "[" + ",".join(_encode(v) for v in obj) + "]"
    raise TypeError(f"cannot encode {type(obj).__name__}")


def report_to_dict(r: EvalReport):
    return {
        "threshold": float(r.threshold),
        "accuracy": float(r.accuracy),
        "precision": float(r.precision),
        "recall": float(r.recall),
        "f1": float(r.f1),
        "confusion": {"tp": r.matrix.tp, "fp": r.matrix.fp, "fn": r.matrix.fn, "tn": r.matrix.tn},
        "per_clip": [{"id": c.id, "score": float(c.score), "pred": c.pred, "label": c.label} for c in r.per_clip],
    }


def report_to_json(r: EvalReport):
    """Canonical form: sorted keys, no whitespace, reals with six decimals."""
    return _encode(report_to_dict(r))


def report_from_dict(d) -> EvalReport:
    c = d["confusion"]
    return EvalReport(
        ConfusionMatrix(int(c["tp"]), int(c["fp"]), int(c["fn"]), int(c["tn"])),
        accuracy=float(d["accuracy"]),
        precision=float(d["precision"]),
        recall=float(d["recall"]),
        f1=float(d["f1"]),
        threshold=float(d["threshold"]),
        per_clip=tuple(
            ClipResult(p["id"], float(p["score"]), int(p["pred"]), int(p["label"])) for p in d["per_clip"]
        ),
    )


def write_report(report: EvalReport, path):
    Path(path).write_text(report_to_json(report) + "\n", encoding="utf-8")


def read_report(path) -> EvalReport:
    return report_from_dict(json.loads(Path(path).read_text(encoding="utf-8")))


def validate_report_dict(d):
    """Raise MetricsError unless ``d`` has exactly the report schema."""
    top = {"threshold", "accuracy", "precision", "recall", "f1", "confusion", "per_clip"}
    if set(d) != top:
        raise MetricsError(f"report keys {sorted(d)} differ from {sorted(top)}")
    if set(d["confusion"]) != {"tp", "fp", "fn", "tn"}:
        raise MetricsError("confusion must have exactly tp, fp, fn, tn")
    for k in ("accuracy", "precision", "recall", "f1"):
        if not 0.0 <= d[k] <= 1.0:
            raise MetricsError(f"{k}={d[k]} outside [0, 1]")
    for c in d["per_clip"]:
        if set(c) != {"id", "score", "pred", "label"}:
            raise MetricsError(f"per_clip entry keys {sorted(c)} invalid")
