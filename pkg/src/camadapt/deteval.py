"""Detection evaluation: IoU, mAP, config sweeps, and a synthetic detector.

evaluate() scores a detection list against ground truth with greedy matching
(descending score, each ground-truth box used at most once, IoU strictly
above the threshold) and reports mAP on a 0-100 scale using all-point
interpolation of the precision/recall curve, averaged over the classes
present in the ground truth.
"""

from __future__ import annotations

import itertools
import json
import logging
import math
from dataclasses import dataclass
from typing import Callable, Iterable, Mapping, Protocol, Sequence

import numpy as np

from .imaging import KNOB_NAMES, ImageBuffer, KnobConfig, apply_config
from .metrics import FeatureTuple, extract_features

log = logging.getLogger(__name__)

DEFAULT_IOU_THRESHOLD = 0.5

# Feature-ratio denominators below this are clamped (degenerate reference).
RATIO_EPS = 1e-3


class MissingSceneDescriptor(KeyError):
    """A frame reached the synthetic detector without a usable frame_id."""


@dataclass(frozen=True)
class BoundingBox:
    """An axis-aligned box in pixel coordinates with x2 > x1 and y2 > y1."""

    x1: float
    y1: float
    x2: float
    y2: float
    class_id: int = 0
    score: float | None = None

    def __post_init__(self) -> None:
        if not (self.x2 > self.x1 and self.y2 > self.y1):
            raise ValueError(
                f"degenerate box: ({self.x1}, {self.y1}, {self.x2}, {self.y2})"
            )

    @property
    def area(self) -> float:
        return (self.x2 - self.x1) * (self.y2 - self.y1)


def iou(a: BoundingBox, b: BoundingBox) -> float:
    """Intersection over union; 0.0 for disjoint boxes."""
    ix = min(a.x2, b.x2) - max(a.x1, b.x1)
    iy = min(a.y2, b.y2) - max(a.y1, b.y1)
    if ix <= 0.0 or iy <= 0.0:
        return 0.0
    inter = ix * iy
    return inter / (a.area + b.area - inter)


@dataclass(frozen=True)
class EvalResult:
    """Detection quality for one frame set: mAP on 0-100, plus counts."""

    map: float
    mean_tp_iou: float
    tp: int
    fp: int
    fn: int


def _det_sort_order(
    detections: Sequence[BoundingBox], ground_truth: Sequence[BoundingBox]
) -> list[int]:
    """Descending score; score ties broken by larger best IoU, then input order."""

    def best_iou(det: BoundingBox) -> float:
        same_class = (g for g in ground_truth if g.class_id == det.class_id)
        return max((iou(det, g) for g in same_class), default=0.0)

    keys = [
        (-(det.score if det.score is not None else 0.0), -best_iou(det), i)
        for i, det in enumerate(detections)
    ]
    return sorted(range(len(detections)), key=lambda i: keys[i])


def _average_precision(tp_flags: Sequence[bool], n_gt: int) -> float:
    """All-point interpolation of the precision/recall curve, in [0, 1]."""
    if n_gt == 0:
        return 0.0
    recalls = [0.0]
    precisions = [0.0]
    tp_cum = 0
    for i, flag in enumerate(tp_flags):
        tp_cum += 1 if flag else 0
        recalls.append(tp_cum / n_gt)
        precisions.append(tp_cum / (i + 1))
    recalls.append(1.0)
    precisions.append(0.0)
    # Precision envelope from the right.
    for i in range(len(precisions) - 2, -1, -1):
        precisions[i] = max(precisions[i], precisions[i + 1])
    area = 0.0
    for i in range(1, len(recalls)):
        if recalls[i] != recalls[i - 1]:
            area += (recalls[i] - recalls[i - 1]) * precisions[i]
    return area


def evaluate(
    detections: Sequence[BoundingBox],
    ground_truth: Sequence[BoundingBox],
    iou_threshold: float = DEFAULT_IOU_THRESHOLD,
) -> EvalResult:
    """Greedy-match detections to ground truth and compute mAP.

    Empty inputs are allowed; with no detections the mAP is 0.  The result
    does not depend on ground-truth order, and equal-score detections are
    ordered by their best available IoU, so reordering them cannot change
    the outcome.
    """
    order = _det_sort_order(detections, ground_truth)
    matched_gt: set[int] = set()
    tp_flags: list[bool] = []
    tp_classes: list[int] = []
    tp_ious: list[float] = []
    for idx in order:
        det = detections[idx]
        best_j = -1
        best = iou_threshold
        for j, gt in enumerate(ground_truth):
            if j in matched_gt or gt.class_id != det.class_id:
                continue
            overlap = iou(det, gt)
            # Strictly above the threshold; IoU ties keep the first GT.
            if overlap > best:
                best = overlap
                best_j = j
        if best_j >= 0:
            matched_gt.add(best_j)
            tp_flags.append(True)
            tp_ious.append(best)
        else:
            tp_flags.append(False)
        tp_classes.append(det.class_id)

    gt_classes = sorted({g.class_id for g in ground_truth})
    aps = []
    for cls in gt_classes:
        n_gt = sum(1 for g in ground_truth if g.class_id == cls)
        cls_flags = [
            flag for flag, det_cls in zip(tp_flags, tp_classes) if det_cls == cls
        ]
        aps.append(_average_precision(cls_flags, n_gt))

    tp = sum(tp_flags)
    return EvalResult(
        map=100.0 * (sum(aps) / len(aps)) if aps else 0.0,
        mean_tp_iou=sum(tp_ious) / tp if tp else 0.0,
        tp=tp,
        fp=len(detections) - tp,
        fn=len(ground_truth) - tp,
    )


# ---------------------------------------------------------------------------
# Config sweep.
# ---------------------------------------------------------------------------


class Detector(Protocol):
    def detect(self, img: ImageBuffer) -> list[BoundingBox]: ...


def sweep_configs(
    img: ImageBuffer,
    ground_truth: Sequence[BoundingBox],
    detector: Detector,
    configs: Iterable[KnobConfig],
    iou_threshold: float = DEFAULT_IOU_THRESHOLD,
) -> list[tuple[KnobConfig, EvalResult]]:
    """Evaluate every config and rank them best first.

    Ranking key: mAP descending, then mean TP IoU descending, then the
    config tuple ascending so ranking is total and deterministic.  A config
    whose detection raises is excluded with a warning.
    """
    ranked: list[tuple[KnobConfig, EvalResult]] = []
    for config in configs:
        rendered = apply_config(img, config)
        try:
            detections = detector.detect(rendered)
        except MissingSceneDescriptor:
            raise
        except Exception as exc:
            log.warning("detector failed for config %s: %s", config.as_tuple(), exc)
            continue
        ranked.append((config, evaluate(detections, ground_truth, iou_threshold)))
    if not ranked:
        raise ValueError("no config could be evaluated")
    ranked.sort(key=lambda item: (-item[1].map, -item[1].mean_tp_iou, item[0].as_tuple()))
    return ranked


def find_best_config(
    img: ImageBuffer,
    ground_truth: Sequence[BoundingBox],
    detector: Detector,
    configs: Iterable[KnobConfig],
    iou_threshold: float = DEFAULT_IOU_THRESHOLD,
) -> tuple[KnobConfig, EvalResult]:
    """The best entry of sweep_configs' ranking."""
    return sweep_configs(img, ground_truth, detector, configs, iou_threshold)[0]


def config_grid(values_per_knob: Mapping[str, Sequence[float]]) -> list[KnobConfig]:
    """Cartesian product of per-knob factor values, in canonical knob order."""
    axes = [values_per_knob.get(name, (1.0,)) for name in KNOB_NAMES]
    return [KnobConfig.from_tuple(combo) for combo in itertools.product(*axes)]


# ---------------------------------------------------------------------------
# Synthetic detector.
# ---------------------------------------------------------------------------


def feature_ratio_config(measured: FeatureTuple, reference: FeatureTuple) -> KnobConfig:
    """Estimate the applied config as measured/reference feature ratios."""
    m = measured.as_array()
    r = np.maximum(reference.as_array(), RATIO_EPS)
    return KnobConfig.from_tuple(np.maximum(m, 0.0) / r)


class SyntheticDetector:
    """A deterministic detector stand-in with a planted quality response.

    The detector knows the scene's ground truth and its reference appearance.
    For a frame it estimates the applied knob config from measured/reference
    feature ratios, evaluates quality_response on that estimate (clamped to
    [0, 1]), then returns the ground truth degraded to that quality level:
    the first ceil(q * n) boxes survive and each survivor is shrunk about its
    center by side fraction 0.25 * (1 - q).  Surviving boxes therefore keep
    IoU (1 - s)^2 > 0.5 against their ground truth, mAP is nondecreasing in
    q, and mean TP IoU is strictly increasing in q, so a planted optimum is
    exactly recoverable by a config sweep.
    """

    SHRINK = 0.25

    def __init__(
        self,
        truth: Mapping[str, Sequence[BoundingBox]],
        reference: FeatureTuple,
        quality_response: Callable[[KnobConfig], float],
    ) -> None:
        self.truth = dict(truth)
        self.reference = reference
        self.quality_response = quality_response

    def quality_for(self, img: ImageBuffer) -> float:
        estimate = feature_ratio_config(extract_features(img), self.reference)
        q = float(self.quality_response(estimate))
        return min(max(q, 0.0), 1.0)

    def detect(self, img: ImageBuffer) -> list[BoundingBox]:
        frame_id = img.meta.get("frame_id")
        if frame_id is None:
            raise MissingSceneDescriptor(
                "frame has no frame_id metadata; not a scene frame"
            )
        if frame_id not in self.truth:
            raise MissingSceneDescriptor(f"no scene ground truth for {frame_id!r}")
        boxes = self.truth[frame_id]
        q = self.quality_for(img)
        n_keep = math.ceil(q * len(boxes)) if q > 0.0 else 0
        shrink = self.SHRINK * (1.0 - q)
        out = []
        for box in list(boxes)[:n_keep]:
            cx = (box.x1 + box.x2) / 2.0
            cy = (box.y1 + box.y2) / 2.0
            half_w = (box.x2 - box.x1) / 2.0 * (1.0 - shrink)
            half_h = (box.y2 - box.y1) / 2.0 * (1.0 - shrink)
            out.append(
                BoundingBox(
                    cx - half_w, cy - half_h, cx + half_w, cy + half_h,
                    class_id=box.class_id,
                    score=q,
                )
            )
        return out


def peaked_response(
    center: KnobConfig, width: float | Sequence[float] = 0.5
) -> Callable[[KnobConfig], float]:
    """A unimodal quality response: exp(-sum_i |config_i - center_i| / width_i).

    width is a single scale shared by all four knobs or one scale per knob
    in canonical order.  Every width must be positive and finite so the
    response stays strictly unimodal with its global maximum at center.
    """
    target = np.array(center.as_tuple())
    widths = np.broadcast_to(np.asarray(width, dtype=float), (4,))
    if not np.all(np.isfinite(widths)) or np.any(widths <= 0):
        raise ValueError(f"widths must be positive and finite, got {width!r}")

    def fn(config: KnobConfig) -> float:
        deviation = np.abs(np.array(config.as_tuple()) - target) / widths
        return float(np.exp(-deviation.sum()))

    return fn


# ---------------------------------------------------------------------------
# JSON-lines box records: {"frame_id": ..., "boxes": [{x1, y1, x2, y2,
# class, score?}, ...]}, one frame per line.
# ---------------------------------------------------------------------------


def boxes_to_jsonl(path, frames: Mapping[str, Sequence[BoundingBox]]) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for frame_id, boxes in frames.items():
            record = {"frame_id": frame_id, "boxes": []}
            for box in boxes:
                entry = {
                    "x1": box.x1,
                    "y1": box.y1,
                    "x2": box.x2,
                    "y2": box.y2,
                    "class": box.class_id,
                }
                if box.score is not None:
                    entry["score"] = box.score
                record["boxes"].append(entry)
            fh.write(json.dumps(record) + "\n")


def boxes_from_jsonl(path) -> dict[str, list[BoundingBox]]:
    frames: dict[str, list[BoundingBox]] = {}
    with open(path, "r", encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, 1):
            line = line.strip()
            if not line:
                continue
            try:
                record = json.loads(line)
                frames[record["frame_id"]] = [
                    BoundingBox(
                        float(b["x1"]),
                        float(b["y1"]),
                        float(b["x2"]),
                        float(b["y2"]),
                        class_id=int(b["class"]),
                        score=float(b["score"]) if "score" in b else None,
                    )
                    for b in record["boxes"]
                ]
            except (KeyError, TypeError, ValueError) as exc:
                raise ValueError(f"{path}:{line_no}: bad box record: {exc}") from exc
    return frames
