"""Scoring labelled detections against ground-truth boxes."""

from __future__ import annotations

from dataclasses import dataclass, field

from .boxes import BoundingBox
from .geometry import box_iou
from .knowledge import SEMANTIC_OBJECT, KnowledgeBase, builtin_vocabulary

IOU_MATCH = 0.5
IOU_MIN_THICKNESS = 0.2


class EvaluationError(ValueError):
    pass


def semantic_labels(vocabulary: KnowledgeBase | None = None) -> list[str]:
    vocabulary = vocabulary or builtin_vocabulary()
    return [c for c in vocabulary.classes if c != SEMANTIC_OBJECT
            and vocabulary.is_subclass(c, SEMANTIC_OBJECT)]


def truth_from_kb(kb: KnowledgeBase) -> list[tuple[str, BoundingBox]]:
    """``(label, box)`` for every individual carrying a hasBoxGeometry.

    The label is the first class the individual was asserted into; it must
    be a semantic class of the built-in vocabulary.
    """
    labels = semantic_labels()
    out = []
    for name in kb.individuals:
        box = kb.value(name, "hasBoxGeometry")
        if box is None:
            continue
        classes = kb.classes_of(name)
        label = classes[0] if classes else None
        if label not in labels:
            raise EvaluationError(f"truth object {name} has unknown label {label!r}")
        out.append((label, box))
    return out


@dataclass
class ClassScore:
    label: str
    n_detected: int = 0
    n_truth: int = 0
    true_positives: int = 0
    ious: list[float] = field(default_factory=list)

    @property
    def precision(self) -> float | None:
        return self.true_positives / self.n_detected if self.n_detected else None

    @property
    def recall(self) -> float | None:
        return self.true_positives / self.n_truth if self.n_truth else None

    @property
    def mean_iou(self) -> float | None:
        return sum(self.ious) / len(self.ious) if self.ious else None

    def to_dict(self) -> dict:
        return {"label": self.label, "detected": self.n_detected, "truth": self.n_truth,
                "matched": self.true_positives, "precision": self.precision,
                "recall": self.recall, "mean_iou": self.mean_iou}


@dataclass
class Evaluation:
    classes: dict[str, ClassScore]
    matches: list[tuple[int, int, float]]  # (detection index, truth index, iou)

    @property
    def mean_iou(self) -> float | None:
        if not self.matches:
            return None
        return sum(m[2] for m in self.matches) / len(self.matches)

    def to_dict(self) -> dict:
        return {"classes": [c.to_dict() for c in self.classes.values()], "mean_iou": self.mean_iou}


def evaluate_boxes(detections, truth, iou_threshold: float = IOU_MATCH,
                   min_thickness: float = IOU_MIN_THICKNESS) -> Evaluation:
    """Match labelled boxes one to one.

    ``detections`` and ``truth`` are sequences of ``(label, box)``. Pairs
    with equal labels and IoU at or above ``iou_threshold`` are matched
    greedily by descending IoU (ties by detection, then truth index).
    Boxes are padded to ``min_thickness`` before the IoU so that thin
    planar boxes compare by their footprint and height.
    """
    labels = semantic_labels()
    for label, _ in truth:
        if label not in labels:
            raise EvaluationError(f"unknown truth label {label!r}")
    present = {lbl for lbl, _ in truth} | {lbl for lbl, _ in detections}
    scores = {lbl: ClassScore(lbl) for lbl in labels if lbl in present}
    for lbl in sorted(present - set(labels)):
        scores[lbl] = ClassScore(lbl)
    for lbl, _ in detections:
        scores[lbl].n_detected += 1
    for lbl, _ in truth:
        scores[lbl].n_truth += 1
    candidates = []
    for i, (dl, db) in enumerate(detections):
        for j, (tl, tb) in enumerate(truth):
            if dl != tl:
                continue
            iou = box_iou(db, tb, min_thickness)
            if iou >= iou_threshold:
                candidates.append((-iou, i, j))
    candidates.sort()
    used_d, used_t, matches = set(), set(), []
    for neg, i, j in candidates:
        if i in used_d or j in used_t:
            continue
        used_d.add(i)
        used_t.add(j)
        matches.append((i, j, -neg))
        s = scores[detections[i][0]]
        s.true_positives += 1
        s.ious.append(-neg)
    return Evaluation(scores, matches)


def _fmt(x) -> str:
    return "n/a" if x is None else f"{x:.3f}"


def format_table(ev: Evaluation) -> str:
    rows = [("class", "detected", "truth", "matched", "precision", "recall", "mean_iou")]
    for s in ev.classes.values():
        rows.append((s.label, str(s.n_detected), str(s.n_truth), str(s.true_positives),
                     _fmt(s.precision), _fmt(s.recall), _fmt(s.mean_iou)))
    widths = [max(len(r[k]) for r in rows) for k in range(len(rows[0]))]
    lines = ["  ".join(c.ljust(w) if k == 0 else c.rjust(w) for k, (c, w) in enumerate(zip(r, widths)))
             for r in rows]
    lines.append(f"overall mean IoU: {_fmt(ev.mean_iou)}")
    return "\n".join(lines)
