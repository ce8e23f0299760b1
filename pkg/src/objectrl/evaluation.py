"""Evaluation: TP-Score accounting, the grid-search baseline, policy and
cross-policy scoring, and report serialization.

TP-Score(k) over an image set counts the images that gained at least k true
positives relative to the image the method received (the distorted one).
"""

from __future__ import annotations

import json
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .boxes import Detection, GroundTruthBox, match_detections
from .detectors import Detector
from .imaging import (
    DistortionKind,
    DistortionScale,
    FactorMode,
    ImageBuffer,
    apply_distortion,
    resize_to_state,
    sample_factor,
)
from .networks import PolicyParams
from .ppo import policy_action
from .scenes import DatasetItem

DEFAULT_K_MAX = 5


class TpScoreTable:
    """Counts, for k = 1..k_max, the images that gained at least k true positives."""

    def __init__(self, k_max: int = DEFAULT_K_MAX):
        if k_max < 1:
            raise ValueError("k_max must be >= 1")
        self.k_max = k_max
        self.counts = [0] * k_max

    def accumulate(self, tp_before: int, tp_after: int) -> None:
        """Credit one image: bump every k up to the true-positive gain."""
        if tp_before < 0 or tp_after < 0:
            raise ValueError("true-positive counts must be >= 0")
        gain = tp_after - tp_before
        for k in range(1, min(gain, self.k_max) + 1):
            self.counts[k - 1] += 1

    def merge(self, other: "TpScoreTable") -> None:
        if other.k_max != self.k_max:
            raise ValueError("cannot merge tables with different k_max")
        for i, count in enumerate(other.counts):
            self.counts[i] += count

    def __getitem__(self, k: int) -> int:
        if not 1 <= k <= self.k_max:
            raise IndexError(f"k must be in 1..{self.k_max}")
        return self.counts[k - 1]

    def __eq__(self, other) -> bool:
        if not isinstance(other, TpScoreTable):
            return NotImplemented
        return self.k_max == other.k_max and self.counts == other.counts

    def as_dict(self) -> dict[str, int]:
        return {str(k): self.counts[k - 1] for k in range(1, self.k_max + 1)}


@dataclass(frozen=True)
class GridActionSet:
    """The baseline's action grid: reciprocals of the scale's distortion set."""

    scale: DistortionScale
    actions: tuple[float, ...]

    @classmethod
    def for_scale(cls, scale: DistortionScale) -> "GridActionSet":
        return cls(scale=scale, actions=tuple(1.0 / s for s in scale.grid))


@dataclass
class EvalItem:
    """One evaluation input: a distorted image, its truths, and a stable seed."""

    image_id: str
    image: ImageBuffer
    gts: list[GroundTruthBox]
    detector_seed: int
    distortion_factor: float


@dataclass
class EvalRecord:
    image_id: str
    tp_before: int
    tp_after: int
    action: float


@dataclass
class EvalReport:
    method: str
    kind: str
    image_count: int
    tp_table: TpScoreTable
    records: list[EvalRecord] = field(default_factory=list)
    detector_calls: int = 0
    wall_time_s: float = 0.0

    def __eq__(self, other) -> bool:
        if not isinstance(other, EvalReport):
            return NotImplemented
        return (
            self.method == other.method
            and self.kind == other.kind
            and self.image_count == other.image_count
            and self.tp_table == other.tp_table
            and self.records == other.records
            and self.detector_calls == other.detector_calls
            and self.wall_time_s == other.wall_time_s
        )


def make_eval_set(
    dataset: list[DatasetItem],
    kind: DistortionKind,
    scale: DistortionScale,
    rng: np.random.Generator,
    mode: FactorMode = FactorMode.DISCRETE_GRID,
) -> list[EvalItem]:
    """Distort every dataset image once; seeds and factors are rng-determined."""
    items = []
    for entry in dataset:
        factor = sample_factor(scale, mode, rng)
        seed = int(rng.integers(2**31))
        items.append(
            EvalItem(
                image_id=entry.image_id,
                image=apply_distortion(entry.image, kind, factor),
                gts=entry.gts,
                detector_seed=seed,
                distortion_factor=factor,
            )
        )
    return items


def tp_count(dets: list[Detection], gts: list[GroundTruthBox]) -> int:
    """True positives: matched same-label pairs above the 0.5 IoU bar."""
    return len(match_detections(dets, gts, 0.5).pairs)


def tp_score_accumulate(table: TpScoreTable, tp_before: int, tp_after: int) -> None:
    table.accumulate(tp_before, tp_after)


def _map_items(items, worker, threads: int):
    if threads <= 1:
        return [worker(item) for item in items]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(worker, items))


def _collect(method, kind, items, rows, detector_calls, started, k_max) -> EvalReport:
    table = TpScoreTable(k_max)
    records = []
    for before, after, action, item in rows:
        table.accumulate(before, after)
        records.append(
            EvalRecord(image_id=item.image_id, tp_before=before, tp_after=after, action=action)
        )
    return EvalReport(
        method=method,
        kind=kind.value,
        image_count=len(items),
        tp_table=table,
        records=records,
        detector_calls=detector_calls,
        wall_time_s=time.perf_counter() - started,
    )


def grid_search_eval(
    items: list[EvalItem],
    kind: DistortionKind,
    scale: DistortionScale,
    detector: Detector,
    k_max: int = DEFAULT_K_MAX,
    threads: int = 1,
) -> EvalReport:
    """Exhaustive per-image search over the reciprocal action grid.

    Picks the action with the highest true-positive count (ties resolved
    toward 1.0, then toward the smaller action) and scores its gain over
    the distorted input.  Costs |grid| + 1 detector calls per image.
    """
    started = time.perf_counter()
    calls_before = detector.calls
    actions = GridActionSet.for_scale(scale).actions

    def worker(item: EvalItem):
        before = tp_count(detector.detect(item.image, item.gts, item.detector_seed), item.gts)
        best_action, best_tp = None, -1
        for action in actions:
            candidate = apply_distortion(item.image, kind, action)
            tp = tp_count(detector.detect(candidate, item.gts, item.detector_seed), item.gts)
            if tp > best_tp or (
                tp == best_tp
                and (abs(action - 1.0), action) < (abs(best_action - 1.0), best_action)
            ):
                best_action, best_tp = action, tp
        return before, best_tp, best_action, item

    rows = _map_items(items, worker, threads)
    return _collect(
        "grid_search", kind, items, rows, detector.calls - calls_before, started, k_max
    )


def policy_eval(
    items: list[EvalItem],
    kind: DistortionKind,
    params: PolicyParams,
    detector: Detector,
    k_max: int = DEFAULT_K_MAX,
    threads: int = 1,
) -> EvalReport:
    """Score the policy's one deterministic action per image (2 calls/image)."""
    started = time.perf_counter()
    calls_before = detector.calls

    def worker(item: EvalItem):
        before = tp_count(detector.detect(item.image, item.gts, item.detector_seed), item.gts)
        obs = resize_to_state(item.image).pixels.astype(np.float32) / 255.0
        action = policy_action(params, obs)
        corrected = apply_distortion(item.image, kind, action)
        after = tp_count(detector.detect(corrected, item.gts, item.detector_seed), item.gts)
        return before, after, action, item

    rows = _map_items(items, worker, threads)
    return _collect("policy", kind, items, rows, detector.calls - calls_before, started, k_max)


def cross_policy_eval(
    items: list[EvalItem],
    kind: DistortionKind,
    params: PolicyParams,
    swapped_detector: Detector,
    native_detector: Detector,
    k_max: int = DEFAULT_K_MAX,
    threads: int = 1,
) -> EvalReport:
    """Deficit of running a policy's action under a foreign detector.

    For each image the policy's action is scored by both detectors; the
    table counts images where the swapped detector found at least k fewer
    true positives than the policy's native detector did.
    """
    started = time.perf_counter()
    calls_before = swapped_detector.calls + native_detector.calls

    def worker(item: EvalItem):
        obs = resize_to_state(item.image).pixels.astype(np.float32) / 255.0
        action = policy_action(params, obs)
        corrected = apply_distortion(item.image, kind, action)
        tp_native = tp_count(
            native_detector.detect(corrected, item.gts, item.detector_seed), item.gts
        )
        tp_swapped = tp_count(
            swapped_detector.detect(corrected, item.gts, item.detector_seed), item.gts
        )
        return tp_swapped, tp_native, action, item

    rows = _map_items(items, worker, threads)
    calls = swapped_detector.calls + native_detector.calls - calls_before
    return _collect("cross_policy", kind, items, rows, calls, started, k_max)


def report_to_dict(report: EvalReport) -> dict:
    return {
        "method": report.method,
        "kind": report.kind,
        "image_count": report.image_count,
        "detector_calls": report.detector_calls,
        "wall_time_s": report.wall_time_s,
        "tp_score": report.tp_table.as_dict(),
        "records": [
            {
                "image_id": r.image_id,
                "tp_before": r.tp_before,
                "tp_after": r.tp_after,
                "action": r.action,
            }
            for r in report.records
        ],
    }


def emit_report(report: EvalReport, json_path, csv_path=None) -> None:
    """Write the JSON report plus a k,count CSV of the TP-Score table."""
    json_path = Path(json_path)
    json_path.write_text(
        json.dumps(report_to_dict(report), indent=2) + "\n", encoding="utf-8"
    )
    if csv_path is None:
        csv_path = json_path.with_suffix(".csv")
    lines = ["k,count"]
    lines += [f"{k},{count}" for k, count in report.tp_table.as_dict().items()]
    Path(csv_path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def load_report(json_path) -> EvalReport:
    data = json.loads(Path(json_path).read_text(encoding="utf-8"))
    table = TpScoreTable(len(data["tp_score"]))
    for k, count in data["tp_score"].items():
        table.counts[int(k) - 1] = count
    return EvalReport(
        method=data["method"],
        kind=data["kind"],
        image_count=data["image_count"],
        tp_table=table,
        records=[
            EvalRecord(
                image_id=r["image_id"],
                tp_before=r["tp_before"],
                tp_after=r["tp_after"],
                action=r["action"],
            )
            for r in data["records"]
        ],
        detector_calls=data["detector_calls"],
        wall_time_s=data["wall_time_s"],
    )
