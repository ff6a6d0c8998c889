"""Detection evaluation: IoU matching, per-class average precision, mAP.

AP uses all-point interpolation (exact area under the interpolated
precision-recall curve).  Classes present in the ground-truth category list
but without a single ground-truth box are reported as absent and excluded
from the mAP mean, mirroring the "-" cells of the usual per-class tables.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from decimal import ROUND_HALF_UP, Decimal
from typing import Mapping, Sequence

from .dataset import Dataset
from .errors import (
    AllAbsent,
    BrokenReference,
    EmptyInput,
    MalformedField,
    MalformedJson,
    MissingField,
    NoGroundTruth,
    UnknownClass,
)
from .geometry import BBox

DEFAULT_IOU_THRESHOLD = 0.5


@dataclass(frozen=True)
class Detection:
    image_id: int
    category_id: int
    bbox: BBox
    score: float


@dataclass(frozen=True)
class DetectionSet:
    """Scored boxes from one trained model; the tag names its train dataset."""

    detections: tuple[Detection, ...]
    source_tag: str


@dataclass(frozen=True)
class PRCurve:
    """(recall, precision, score threshold) triples in ranking order."""

    label: str
    points: tuple[tuple[float, float, float], ...]


@dataclass(frozen=True)
class EvalReport:
    """One table row: per-class AP (None = class absent) plus their mean."""

    train_tag: str
    test_tag: str
    per_class_ap: Mapping[str, float | None]
    map_value: float

    def to_json_dict(self) -> dict:
        return {
            "train_tag": self.train_tag,
            "test_tag": self.test_tag,
            "per_class_ap": {k: self.per_class_ap[k] for k in sorted(self.per_class_ap)},
            "map": self.map_value,
        }


def iou(a: BBox, b: BBox) -> float:
    """Intersection area over union area; 0 when disjoint."""
    iw = min(a.x2, b.x2) - max(a.x, b.x)
    ih = min(a.y2, b.y2) - max(a.y, b.y)
    if iw <= 0 or ih <= 0:
        return 0.0
    inter = iw * ih
    # areas from the same edge differences as the intersection, so rounding
    # cannot push the ratio above 1 (identical boxes give exactly 1.0)
    area_a = (a.x2 - a.x) * (a.y2 - a.y)
    area_b = (b.x2 - b.x) * (b.y2 - b.y)
    return inter / (area_a + area_b - inter)


def match_detections(
    gt: Dataset,
    dets: DetectionSet,
    label: str,
    iou_threshold: float = DEFAULT_IOU_THRESHOLD,
) -> tuple[list[tuple[Detection, bool]], int]:
    """Greedy TP/FP assignment for one class.

    Detections are ranked by descending score (ties keep input order); each
    one matches the unmatched same-image ground-truth box of highest IoU at
    or above the threshold.  Returns the ranked (detection, is_tp) list and
    the class ground-truth count.
    """
    if not 0.0 < iou_threshold < 1.0:
        raise ValueError(f"iou_threshold must be in (0, 1), got {iou_threshold}")
    cat_ids = {c.id for c in gt.categories if c.name == label}
    if not cat_ids:
        raise UnknownClass(f"class {label!r} is not in the ground-truth category list")

    gt_boxes: dict[int, list[list]] = {}
    gt_count = 0
    for a in sorted(gt.annotations, key=lambda a: a.id):
        if a.category_id in cat_ids:
            gt_boxes.setdefault(a.image_id, []).append([a.bbox, False])
            gt_count += 1

    ranked = sorted(
        (d for d in dets.detections if d.category_id in cat_ids),
        key=lambda d: -d.score,
    )
    result: list[tuple[Detection, bool]] = []
    for det in ranked:
        best_iou = 0.0
        best = None
        for slot in gt_boxes.get(det.image_id, []):
            if slot[1]:
                continue
            value = iou(det.bbox, slot[0])
            if value > best_iou:
                best_iou = value
                best = slot
        if best is not None and best_iou >= iou_threshold:
            best[1] = True
            result.append((det, True))
        else:
            result.append((det, False))
    return result, gt_count


def pr_curve(
    matched: Sequence[tuple[Detection, bool]], gt_count: int, label: str
) -> PRCurve:
    """Cumulative precision/recall along the ranking."""
    if gt_count <= 0:
        raise NoGroundTruth(f"class {label!r} has no ground-truth boxes")
    points = []
    tp = 0
    for rank, (det, is_tp) in enumerate(matched, start=1):
        tp += 1 if is_tp else 0
        points.append((tp / gt_count, tp / rank, det.score))
    return PRCurve(label=label, points=tuple(points))


def average_precision(matches: Sequence[bool], gt_count: int) -> float:
    """Exact area under the all-point-interpolated PR curve.

    Interpolated precision at recall r is the maximum precision achieved at
    any recall >= r; the area is summed over the recall steps.
    """
    if gt_count <= 0:
        raise NoGroundTruth("average precision needs at least one ground-truth box")
    n = len(matches)
    recalls = []
    precisions = []
    tp = 0
    for rank, is_tp in enumerate(matches, start=1):
        tp += 1 if is_tp else 0
        recalls.append(tp / gt_count)
        precisions.append(tp / rank)
    # max precision over every suffix, i.e. over all recall >= recalls[i]
    suffix_max = [0.0] * (n + 1)
    for i in range(n - 1, -1, -1):
        suffix_max[i] = max(precisions[i], suffix_max[i + 1])
    area = 0.0
    prev_recall = 0.0
    for i in range(n):
        if recalls[i] > prev_recall:
            area += (recalls[i] - prev_recall) * suffix_max[i]
            prev_recall = recalls[i]
    return area


def aggregate_map(per_class_ap: Mapping[str, float | None]) -> float:
    """Arithmetic mean over present classes; absent (None) classes are
    excluded, zero-valued APs are not."""
    present = [v for v in per_class_ap.values() if v is not None]
    if not present:
        raise AllAbsent("every class is absent; mAP is undefined")
    return sum(present) / len(present)


def evaluate(
    gt: Dataset,
    dets: DetectionSet,
    iou_threshold: float = DEFAULT_IOU_THRESHOLD,
    test_tag: str = "",
) -> EvalReport:
    """Per-class AP for every ground-truth category, aggregated into mAP."""
    validate_detections(gt, dets)
    per_class: dict[str, float | None] = {}
    for cat in sorted(gt.categories, key=lambda c: c.name):
        matched, gt_count = match_detections(gt, dets, cat.name, iou_threshold)
        if gt_count == 0:
            per_class[cat.name] = None
        else:
            per_class[cat.name] = average_precision([tp for _, tp in matched], gt_count)
    return EvalReport(
        train_tag=dets.source_tag,
        test_tag=test_tag,
        per_class_ap=per_class,
        map_value=aggregate_map(per_class),
    )


def validate_detections(gt: Dataset, dets: DetectionSet) -> None:
    image_ids = {im.id for im in gt.images}
    category_ids = {c.id for c in gt.categories}
    for i, d in enumerate(dets.detections):
        if d.image_id not in image_ids:
            raise BrokenReference("detection", i, f"image_id {d.image_id} does not resolve")
        if d.category_id not in category_ids:
            raise BrokenReference("detection", i, f"category_id {d.category_id} does not resolve")


# ---------------------------------------------------------------------------
# detections file (COCO results format)

def detections_from_json(text: str, source_tag: str) -> DetectionSet:
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise MalformedJson(f"not valid JSON: {exc}") from exc
    if not isinstance(doc, list):
        raise MalformedJson("detections file must be a JSON list")
    detections = []
    for i, rec in enumerate(doc):
        if not isinstance(rec, dict):
            raise MalformedField("detection", i, "record must be an object")
        for key in ("image_id", "category_id", "bbox", "score"):
            if key not in rec:
                raise MissingField("detection", i, key)
        bbox = rec["bbox"]
        if not isinstance(bbox, list) or len(bbox) != 4:
            raise MalformedField("detection", i, f"bbox must be [x, y, w, h], got {bbox!r}")
        x, y, w, h = (float(v) for v in bbox)
        if w <= 0 or h <= 0:
            raise MalformedField("detection", i, f"bbox has non-positive extent (w={w}, h={h})")
        score = rec["score"]
        if isinstance(score, bool) or not isinstance(score, (int, float)):
            raise MalformedField("detection", i, f"score must be a number, got {score!r}")
        score = float(score)
        if not 0.0 <= score <= 1.0:
            raise MalformedField("detection", i, f"score must be in [0, 1], got {score}")
        detections.append(
            Detection(
                image_id=int(rec["image_id"]),
                category_id=int(rec["category_id"]),
                bbox=BBox(x, y, w, h),
                score=score,
            )
        )
    return DetectionSet(detections=tuple(detections), source_tag=source_tag)


def detections_to_json(dets: DetectionSet) -> str:
    doc = [
        {
            "image_id": d.image_id,
            "category_id": d.category_id,
            "bbox": [d.bbox.x, d.bbox.y, d.bbox.w, d.bbox.h],
            "score": d.score,
        }
        for d in dets.detections
    ]
    return json.dumps(doc, indent=2) + "\n"


# ---------------------------------------------------------------------------
# table rendering

def format_ap(value: float) -> str:
    """Three decimals, ties rounded away from zero."""
    return str(Decimal(repr(value)).quantize(Decimal("0.001"), rounding=ROUND_HALF_UP))


def render_table(reports: Sequence[EvalReport], format: str = "markdown") -> str:
    """One row per report; absent classes render as '-'; rows keep input order."""
    if not reports:
        raise EmptyInput("render_table needs at least one report")
    if format not in ("markdown", "csv"):
        raise ValueError(f"format must be 'markdown' or 'csv', got {format!r}")
    labels = sorted({label for r in reports for label in r.per_class_ap})
    header = ["Train Dataset", "Test Dataset", *labels, "mAP"]
    rows = []
    for r in reports:
        cells = [r.train_tag, r.test_tag]
        for label in labels:
            ap = r.per_class_ap.get(label)
            cells.append("-" if ap is None else format_ap(ap))
        cells.append(format_ap(r.map_value))
        rows.append(cells)

    if format == "csv":
        import csv as _csv
        import io as _io

        buf = _io.StringIO()
        writer = _csv.writer(buf, lineterminator="\n")
        writer.writerow(header)
        writer.writerows(rows)
        return buf.getvalue()

    lines = [
        "| " + " | ".join(header) + " |",
        "|" + "|".join(" --- " for _ in header) + "|",
    ]
    lines.extend("| " + " | ".join(row) + " |" for row in rows)
    return "\n".join(lines) + "\n"
