"""Box geometry, prediction-to-truth matching, and detection quality scoring."""

from __future__ import annotations

from dataclasses import dataclass, field


@dataclass(frozen=True)
class BBox:
    """Axis-aligned box with real pixel coordinates, x1 < x2 and y1 < y2."""

    x1: float
    y1: float
    x2: float
    y2: float

    def __post_init__(self):
        if not (self.x1 < self.x2 and self.y1 < self.y2):
            raise ValueError(f"degenerate box {self}")

    @property
    def area(self) -> float:
        return (self.x2 - self.x1) * (self.y2 - self.y1)


@dataclass(frozen=True)
class Detection:
    """A predicted box with class label and confidence in [0, 1]."""

    box: BBox
    label: str
    confidence: float

    def __post_init__(self):
        if not 0.0 <= self.confidence <= 1.0:
            raise ValueError(f"confidence out of [0, 1]: {self.confidence}")


@dataclass(frozen=True)
class GroundTruthBox:
    box: BBox
    label: str


@dataclass
class MatchResult:
    """Outcome of greedy detection/truth matching.

    `pairs` holds (detection index, ground-truth index, iou) triples; the
    unmatched index lists cover everything not paired.
    """

    pairs: list[tuple[int, int, float]] = field(default_factory=list)
    unmatched_detections: list[int] = field(default_factory=list)
    unmatched_truths: list[int] = field(default_factory=list)


@dataclass(frozen=True)
class DetectionScore:
    """Per-image detection quality: mean matched IoU, F1, and their blend."""

    mean_iou: float
    f1: float
    combined: float


def iou(a: BBox, b: BBox) -> float:
    """Intersection area over union area; 0 for disjoint boxes, 1 for equal."""
    ix = min(a.x2, b.x2) - max(a.x1, b.x1)
    iy = min(a.y2, b.y2) - max(a.y1, b.y1)
    if ix <= 0.0 or iy <= 0.0:
        return 0.0
    inter = ix * iy
    return inter / (a.area + b.area - inter)


def match_detections(
    dets: list[Detection],
    gts: list[GroundTruthBox],
    iou_threshold: float = 0.5,
) -> MatchResult:
    """Greedily assign detections to same-label ground truths.

    Detections are visited in order of descending confidence (stable on
    ties); each takes the still-unmatched truth of its own label with the
    highest IoU strictly above `iou_threshold`, if any.
    """
    if not 0.0 < iou_threshold < 1.0:
        raise ValueError(f"iou_threshold must be in (0, 1), got {iou_threshold}")

    order = sorted(range(len(dets)), key=lambda i: -dets[i].confidence)
    taken = [False] * len(gts)
    result = MatchResult()
    for di in order:
        det = dets[di]
        best_gi = -1
        best_iou = iou_threshold
        for gi, gt in enumerate(gts):
            if taken[gi] or gt.label != det.label:
                continue
            value = iou(det.box, gt.box)
            if value > best_iou:
                best_iou = value
                best_gi = gi
        if best_gi >= 0:
            taken[best_gi] = True
            result.pairs.append((di, best_gi, best_iou))
        else:
            result.unmatched_detections.append(di)
    result.unmatched_truths = [gi for gi, used in enumerate(taken) if not used]
    return result


def f1_score(match: MatchResult, n_dets: int, n_gts: int) -> float:
    """F1 of the matching; defined as 0 when there are no true positives."""
    tp = len(match.pairs)
    if tp == 0:
        return 0.0
    precision = tp / n_dets
    recall = tp / n_gts
    return 2.0 * precision * recall / (precision + recall)


def detection_score(
    dets: list[Detection],
    gts: list[GroundTruthBox],
    iou_weight: float,
) -> DetectionScore:
    """Score an image as iou_weight * mean matched IoU + (1-iou_weight) * F1.

    The mean IoU runs over matched pairs only and is 0 when nothing matched.
    """
    if not 0.0 <= iou_weight <= 1.0:
        raise ValueError(f"iou_weight must be in [0, 1], got {iou_weight}")
    match = match_detections(dets, gts)
    if match.pairs:
        mean_iou = sum(p[2] for p in match.pairs) / len(match.pairs)
    else:
        mean_iou = 0.0
    f1 = f1_score(match, len(dets), len(gts))
    combined = iou_weight * mean_iou + (1.0 - iou_weight) * f1
    return DetectionScore(mean_iou=mean_iou, f1=f1, combined=combined)
