"""Project an annotated source dataset into registered target frames.

Each image pair maps one source (thermal) image onto its time-synchronized
target (visible) frame through a fitted homography.  Boxes are projected as
corner envelopes, optionally clipped to the target frame, and filtered by
visible fraction and minimum area.  Per-annotation failures are recorded as
drops with a reason; they never abort a batch.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Mapping, Sequence

from .dataset import AnnotationRecord, Dataset, ImageRecord
from .errors import (
    DuplicatePairId,
    MalformedField,
    MalformedJson,
    MissingField,
    MissingHomography,
    MissingPairImage,
    PointAtInfinity,
    UnresolvedSourceImage,
)
from .geometry import BBox, FitDiagnostics, Homography, project_bbox

DROP_OUT_OF_FRAME = "out_of_frame"
DROP_VISIBLE_FRACTION = "below_min_visible_fraction"
DROP_MIN_AREA = "below_min_area"
DROP_AT_INFINITY = "point_at_infinity"


@dataclass(frozen=True)
class ImagePair:
    pair_id: str
    source_image: str
    target_image: str
    target_width: int
    target_height: int


@dataclass(frozen=True)
class TransferPolicy:
    """What happens to boxes that land partially or fully outside the frame."""

    clip_to_frame: bool = True
    min_visible_fraction: float = 0.25
    min_pixel_area: float = 4.0

    def __post_init__(self):
        if not 0.0 <= self.min_visible_fraction <= 1.0:
            raise MalformedField(
                "policy", None, f"min_visible_fraction must be in [0, 1], got {self.min_visible_fraction}"
            )
        if self.min_pixel_area < 0:
            raise MalformedField(
                "policy", None, f"min_pixel_area must be nonnegative, got {self.min_pixel_area}"
            )


@dataclass(frozen=True)
class PairTransferStats:
    pair_id: str
    projected: int
    clipped: int
    unclipped: int
    dropped: Mapping[str, int] = field(default_factory=dict)
    diagnostics: FitDiagnostics | None = None

    @property
    def kept(self) -> int:
        return self.clipped + self.unclipped

    @property
    def dropped_total(self) -> int:
        return sum(self.dropped.values())


@dataclass(frozen=True)
class TransferReport:
    policy: TransferPolicy
    pairs: tuple[PairTransferStats, ...]

    def to_json_dict(self) -> dict:
        out_pairs = []
        for p in self.pairs:
            entry: dict = {
                "pair_id": p.pair_id,
                "projected": p.projected,
                "kept": p.kept,
                "clipped": p.clipped,
                "unclipped": p.unclipped,
                "dropped": {k: p.dropped[k] for k in sorted(p.dropped)},
            }
            if p.diagnostics is not None:
                entry["rmse"] = p.diagnostics.rmse
                entry["max_error"] = p.diagnostics.max_error
            out_pairs.append(entry)
        return {
            "policy": {
                "clip_to_frame": self.policy.clip_to_frame,
                "min_visible_fraction": self.policy.min_visible_fraction,
                "min_pixel_area": self.policy.min_pixel_area,
            },
            "pairs": out_pairs,
            "totals": {
                "projected": sum(p.projected for p in self.pairs),
                "kept": sum(p.kept for p in self.pairs),
                "dropped": sum(p.dropped_total for p in self.pairs),
            },
        }


def to_json(report: TransferReport) -> str:
    return json.dumps(report.to_json_dict(), indent=2) + "\n"


# ---------------------------------------------------------------------------
# pairing file

def load_image_pairs(text: str) -> list[ImagePair]:
    """Parse a pairing file (JSON list) without dataset resolution."""
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise MalformedJson(f"not valid JSON: {exc}") from exc
    if not isinstance(doc, list):
        raise MalformedJson("pairing file must be a JSON list")
    pairs = []
    seen: set[str] = set()
    for i, rec in enumerate(doc):
        if not isinstance(rec, dict):
            raise MalformedField("pair", i, "record must be an object")
        for key in ("pair_id", "source_image", "target_image", "target_width", "target_height"):
            if key not in rec:
                raise MissingField("pair", i, key)
        pair_id = rec["pair_id"]
        if pair_id in seen:
            raise DuplicatePairId(f"pair_id {pair_id!r} appears more than once")
        seen.add(pair_id)
        width, height = rec["target_width"], rec["target_height"]
        if not isinstance(width, int) or not isinstance(height, int) or width <= 0 or height <= 0:
            raise MalformedField("pair", i, f"target dimensions must be positive integers, got {width}x{height}")
        pairs.append(
            ImagePair(
                pair_id=pair_id,
                source_image=rec["source_image"],
                target_image=rec["target_image"],
                target_width=width,
                target_height=height,
            )
        )
    return pairs


def image_pairs_to_json(pairs: Sequence[ImagePair]) -> str:
    doc = [
        {
            "pair_id": p.pair_id,
            "source_image": p.source_image,
            "target_image": p.target_image,
            "target_width": p.target_width,
            "target_height": p.target_height,
        }
        for p in pairs
    ]
    return json.dumps(doc, indent=2) + "\n"


def pair_catalog(source: Dataset, pairing_file: str) -> list[ImagePair]:
    """Parse the pairing file and resolve every source image against the
    dataset."""
    pairs = load_image_pairs(pairing_file)
    for p in pairs:
        if source.image_by_file_name(p.source_image) is None:
            raise UnresolvedSourceImage(
                f"pair {p.pair_id!r}: source image {p.source_image!r} is not in the dataset"
            )
    return pairs


# ---------------------------------------------------------------------------
# transfer

def _clip_to_frame(b: BBox, width: float, height: float) -> BBox | None:
    x1, y1 = max(b.x, 0.0), max(b.y, 0.0)
    x2, y2 = min(b.x2, width), min(b.y2, height)
    if x2 <= x1 or y2 <= y1:
        return None
    return BBox(x1, y1, x2 - x1, y2 - y1)


def transfer_dataset(
    source: Dataset,
    pairs: Sequence[ImagePair],
    homographies: Mapping[str, Homography],
    policy: TransferPolicy = TransferPolicy(),
    diagnostics: Mapping[str, FitDiagnostics] | None = None,
) -> tuple[Dataset, TransferReport]:
    """Project every annotation of each paired source image into the target
    frame.

    The output has one image record per pair, the source category list
    unchanged, and fresh annotation ids assigned in deterministic order
    (pairs in input order, annotations by ascending source id).
    """
    for p in pairs:
        if p.pair_id not in homographies:
            raise MissingHomography(f"no homography for pair {p.pair_id!r}")
        if source.image_by_file_name(p.source_image) is None:
            raise MissingPairImage(
                f"pair {p.pair_id!r}: source image {p.source_image!r} is not in the dataset"
            )

    anns_by_image: dict[int, list[AnnotationRecord]] = {}
    for a in source.annotations:
        anns_by_image.setdefault(a.image_id, []).append(a)

    out_images: list[ImageRecord] = []
    out_annotations: list[AnnotationRecord] = []
    stats: list[PairTransferStats] = []
    next_ann_id = 1

    for pair_index, pair in enumerate(pairs):
        src_image = source.image_by_file_name(pair.source_image)
        assert src_image is not None
        image_id = pair_index + 1
        out_images.append(
            ImageRecord(
                id=image_id,
                file_name=pair.target_image,
                width=pair.target_width,
                height=pair.target_height,
            )
        )
        h = homographies[pair.pair_id]
        clipped_count = 0
        unclipped_count = 0
        dropped: dict[str, int] = {}
        source_anns = sorted(anns_by_image.get(src_image.id, []), key=lambda a: a.id)

        for a in source_anns:
            try:
                envelope = project_bbox(h, a.bbox)
            except PointAtInfinity:
                dropped[DROP_AT_INFINITY] = dropped.get(DROP_AT_INFINITY, 0) + 1
                continue
            # re-deriving w/h from clipped edges would perturb in-frame boxes
            # by an ulp, so fully-inside keeps the envelope as-is
            fully_inside = (
                envelope.x >= 0
                and envelope.y >= 0
                and envelope.x2 <= pair.target_width
                and envelope.y2 <= pair.target_height
            )
            if fully_inside:
                visible: BBox | None = envelope
                visible_fraction = 1.0
            else:
                visible = _clip_to_frame(envelope, pair.target_width, pair.target_height)
                if visible is None:
                    if policy.clip_to_frame or policy.min_visible_fraction > 0:
                        dropped[DROP_OUT_OF_FRAME] = dropped.get(DROP_OUT_OF_FRAME, 0) + 1
                        continue
                    visible_fraction = 0.0
                else:
                    visible_fraction = visible.area / envelope.area
            if visible_fraction < policy.min_visible_fraction:
                dropped[DROP_VISIBLE_FRACTION] = dropped.get(DROP_VISIBLE_FRACTION, 0) + 1
                continue
            kept_box = visible if policy.clip_to_frame else envelope
            assert kept_box is not None
            if kept_box.area < policy.min_pixel_area:
                dropped[DROP_MIN_AREA] = dropped.get(DROP_MIN_AREA, 0) + 1
                continue
            was_clipped = policy.clip_to_frame and not fully_inside
            if was_clipped:
                clipped_count += 1
            else:
                unclipped_count += 1
            out_annotations.append(
                AnnotationRecord(
                    id=next_ann_id,
                    image_id=image_id,
                    category_id=a.category_id,
                    bbox=kept_box,
                    area=kept_box.area,
                    extra=a.extra,
                )
            )
            next_ann_id += 1

        stats.append(
            PairTransferStats(
                pair_id=pair.pair_id,
                projected=len(source_anns),
                clipped=clipped_count,
                unclipped=unclipped_count,
                dropped=dropped,
                diagnostics=(diagnostics or {}).get(pair.pair_id),
            )
        )

    out = Dataset(
        images=tuple(out_images),
        annotations=tuple(out_annotations),
        categories=source.categories,
        extra={},
    )
    return out, TransferReport(policy=policy, pairs=tuple(stats))
