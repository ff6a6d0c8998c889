"""COCO-style annotation datasets: parse, validate, write, remap, split.

Documents are JSON with top-level ``images``, ``annotations`` and
``categories`` lists; any other top-level or per-record key is preserved
opaquely and round-trips through the writer untouched.  Areas are always
recomputed from the box, and the writer emits records sorted by id so two
writes of the same dataset are byte-identical.
"""

from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass, field
from typing import Mapping, Sequence

from .errors import (
    AmbiguousImageName,
    BrokenReference,
    DuplicateId,
    InvariantViolation,
    MalformedField,
    MalformedJson,
    MissingField,
    UncoveredImage,
    UnknownImage,
    UnmappedLabel,
)
from .geometry import BBox

# relative tolerance for accepting a stored area against w*h
AREA_RTOL = 1e-6


@dataclass(frozen=True)
class CategoryDef:
    id: int
    name: str
    extra: Mapping = field(default_factory=dict)


@dataclass(frozen=True)
class ImageRecord:
    id: int
    file_name: str
    width: int
    height: int
    extra: Mapping = field(default_factory=dict)


@dataclass(frozen=True)
class AnnotationRecord:
    id: int
    image_id: int
    category_id: int
    bbox: BBox
    area: float
    extra: Mapping = field(default_factory=dict)


@dataclass(frozen=True)
class Dataset:
    images: tuple[ImageRecord, ...]
    annotations: tuple[AnnotationRecord, ...]
    categories: tuple[CategoryDef, ...]
    extra: Mapping = field(default_factory=dict)

    def image_by_id(self, image_id: int) -> ImageRecord:
        return {im.id: im for im in self.images}[image_id]

    def category_by_id(self, category_id: int) -> CategoryDef:
        return {c.id: c for c in self.categories}[category_id]

    def image_by_file_name(self, file_name: str) -> ImageRecord | None:
        hits = [im for im in self.images if im.file_name == file_name]
        if len(hits) > 1:
            raise AmbiguousImageName(
                f"file name {file_name!r} matches {len(hits)} images"
            )
        return hits[0] if hits else None

    def sorted_copy(self) -> "Dataset":
        return Dataset(
            images=tuple(sorted(self.images, key=lambda im: im.id)),
            annotations=tuple(sorted(self.annotations, key=lambda a: a.id)),
            categories=tuple(sorted(self.categories, key=lambda c: c.id)),
            extra=self.extra,
        )


def canonical_label(name: str) -> str:
    """Case-folded, whitespace-trimmed form used for all label matching."""
    return name.strip().casefold()


# ---------------------------------------------------------------------------
# parsing

def _require(record: dict, record_type: str, index: int, name: str):
    if name not in record:
        raise MissingField(record_type, index, name)
    return record[name]


def _positive_int(value, record_type: str, index: int, name: str) -> int:
    if isinstance(value, bool) or not isinstance(value, int) or value <= 0:
        raise MalformedField(
            record_type, index, f"field {name!r} must be a positive integer, got {value!r}"
        )
    return value


def _number(value, record_type: str, index: int, name: str) -> float:
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise MalformedField(record_type, index, f"field {name!r} must be a number, got {value!r}")
    return float(value)


def _parse_bbox(value, index: int) -> BBox:
    if not isinstance(value, list) or len(value) != 4:
        raise MalformedField("annotation", index, f"bbox must be a [x, y, w, h] list, got {value!r}")
    x, y, w, h = (_number(v, "annotation", index, "bbox") for v in value)
    if w <= 0 or h <= 0:
        raise MalformedField(
            "annotation", index, f"bbox has non-positive extent (w={w}, h={h})"
        )
    return BBox(x, y, w, h)


def parse_dataset(document: str) -> Dataset:
    """Parse and validate a COCO-style annotation document.

    Unknown fields are kept verbatim on each record and round-trip through
    :func:`write_dataset`.  Every error names the offending record.
    """
    try:
        doc = json.loads(document)
    except json.JSONDecodeError as exc:
        raise MalformedJson(f"not valid JSON: {exc}") from exc
    if not isinstance(doc, dict):
        raise MalformedJson("top level must be a JSON object")
    for key in ("images", "annotations", "categories"):
        if key not in doc:
            raise MissingField("document", None, key)
        if not isinstance(doc[key], list):
            raise MalformedField("document", None, f"{key!r} must be a list")

    categories = []
    seen_cat_ids: dict[int, int] = {}
    seen_cat_names: dict[str, int] = {}
    for i, rec in enumerate(doc["categories"]):
        if not isinstance(rec, dict):
            raise MalformedField("category", i, "record must be an object")
        cid = _positive_int(_require(rec, "category", i, "id"), "category", i, "id")
        name = _require(rec, "category", i, "name")
        if not isinstance(name, str) or not name.strip():
            raise MalformedField("category", i, f"name must be a nonempty string, got {name!r}")
        if cid in seen_cat_ids:
            raise DuplicateId("category", i, f"id {cid} already used at index {seen_cat_ids[cid]}")
        if name in seen_cat_names:
            raise DuplicateId("category", i, f"name {name!r} already used at index {seen_cat_names[name]}")
        seen_cat_ids[cid] = i
        seen_cat_names[name] = i
        extra = {k: v for k, v in rec.items() if k not in ("id", "name")}
        categories.append(CategoryDef(id=cid, name=name, extra=extra))

    images = []
    seen_img_ids: dict[int, int] = {}
    for i, rec in enumerate(doc["images"]):
        if not isinstance(rec, dict):
            raise MalformedField("image", i, "record must be an object")
        iid = _positive_int(_require(rec, "image", i, "id"), "image", i, "id")
        file_name = _require(rec, "image", i, "file_name")
        if not isinstance(file_name, str) or not file_name:
            raise MalformedField("image", i, f"file_name must be a nonempty string, got {file_name!r}")
        width = _positive_int(_require(rec, "image", i, "width"), "image", i, "width")
        height = _positive_int(_require(rec, "image", i, "height"), "image", i, "height")
        if iid in seen_img_ids:
            raise DuplicateId("image", i, f"id {iid} already used at index {seen_img_ids[iid]}")
        seen_img_ids[iid] = i
        extra = {k: v for k, v in rec.items() if k not in ("id", "file_name", "width", "height")}
        images.append(ImageRecord(id=iid, file_name=file_name, width=width, height=height, extra=extra))

    image_index = {im.id: im for im in images}
    category_ids = {c.id for c in categories}

    annotations = []
    seen_ann_ids: dict[int, int] = {}
    for i, rec in enumerate(doc["annotations"]):
        if not isinstance(rec, dict):
            raise MalformedField("annotation", i, "record must be an object")
        aid = _positive_int(_require(rec, "annotation", i, "id"), "annotation", i, "id")
        image_id = _positive_int(_require(rec, "annotation", i, "image_id"), "annotation", i, "image_id")
        category_id = _positive_int(
            _require(rec, "annotation", i, "category_id"), "annotation", i, "category_id"
        )
        bbox = _parse_bbox(_require(rec, "annotation", i, "bbox"), i)
        if aid in seen_ann_ids:
            raise DuplicateId("annotation", i, f"id {aid} already used at index {seen_ann_ids[aid]}")
        seen_ann_ids[aid] = i
        if image_id not in image_index:
            raise BrokenReference("annotation", i, f"image_id {image_id} does not resolve")
        if category_id not in category_ids:
            raise BrokenReference("annotation", i, f"category_id {category_id} does not resolve")
        img = image_index[image_id]
        if not (bbox.x < img.width and bbox.x2 > 0 and bbox.y < img.height and bbox.y2 > 0):
            raise MalformedField(
                "annotation",
                i,
                f"bbox {[bbox.x, bbox.y, bbox.w, bbox.h]} does not intersect "
                f"image {img.id} bounds {img.width}x{img.height}",
            )
        # stored area is advisory; it is recomputed here and on write
        extra = {
            k: v for k, v in rec.items() if k not in ("id", "image_id", "category_id", "bbox", "area")
        }
        annotations.append(
            AnnotationRecord(
                id=aid,
                image_id=image_id,
                category_id=category_id,
                bbox=bbox,
                area=bbox.area,
                extra=extra,
            )
        )

    top_extra = {k: v for k, v in doc.items() if k not in ("images", "annotations", "categories")}
    return Dataset(
        images=tuple(images),
        annotations=tuple(annotations),
        categories=tuple(categories),
        extra=top_extra,
    )


# ---------------------------------------------------------------------------
# writing

def integrity_problems(d: Dataset) -> list[str]:
    """Structural problems that make a Dataset unwritable."""
    problems = []
    img_ids = [im.id for im in d.images]
    if len(set(img_ids)) != len(img_ids):
        problems.append("duplicate image ids")
    cat_ids = [c.id for c in d.categories]
    if len(set(cat_ids)) != len(cat_ids):
        problems.append("duplicate category ids")
    cat_names = [c.name for c in d.categories]
    if len(set(cat_names)) != len(cat_names):
        problems.append("duplicate category names")
    ann_ids = [a.id for a in d.annotations]
    if len(set(ann_ids)) != len(ann_ids):
        problems.append("duplicate annotation ids")
    img_set, cat_set = set(img_ids), set(cat_ids)
    for a in d.annotations:
        if a.image_id not in img_set:
            problems.append(f"annotation {a.id} references missing image {a.image_id}")
        if a.category_id not in cat_set:
            problems.append(f"annotation {a.id} references missing category {a.category_id}")
    return problems


def _ordered(record_fields: dict, extra: Mapping) -> dict:
    out = dict(record_fields)
    for k in sorted(extra):
        out[k] = extra[k]
    return out


def write_dataset(d: Dataset) -> str:
    """Serialize a Dataset deterministically (records sorted by id, areas
    recomputed from the box)."""
    problems = integrity_problems(d)
    if problems:
        raise InvariantViolation("; ".join(problems))
    doc: dict = {
        "images": [
            _ordered(
                {"id": im.id, "file_name": im.file_name, "width": im.width, "height": im.height},
                im.extra,
            )
            for im in sorted(d.images, key=lambda im: im.id)
        ],
        "annotations": [
            _ordered(
                {
                    "id": a.id,
                    "image_id": a.image_id,
                    "category_id": a.category_id,
                    "bbox": [a.bbox.x, a.bbox.y, a.bbox.w, a.bbox.h],
                    "area": a.bbox.area,
                },
                a.extra,
            )
            for a in sorted(d.annotations, key=lambda a: a.id)
        ],
        "categories": [
            _ordered({"id": c.id, "name": c.name}, c.extra)
            for c in sorted(d.categories, key=lambda c: c.id)
        ],
    }
    for k in sorted(d.extra):
        doc[k] = d.extra[k]
    return json.dumps(doc, indent=2) + "\n"


# ---------------------------------------------------------------------------
# label remapping

@dataclass(frozen=True)
class CategoryMap:
    """Source-ontology label -> target label, or None to drop."""

    name: str
    entries: tuple[tuple[str, str | None], ...]

    def __post_init__(self):
        seen = set()
        for source, _ in self.entries:
            key = canonical_label(source)
            if key in seen:
                raise DuplicateId("map entry", source, "source label appears twice")
            seen.add(key)

    def lookup(self) -> dict[str, str | None]:
        return {canonical_label(src): tgt for src, tgt in self.entries}

    def target_labels(self) -> list[str]:
        out: list[str] = []
        for _, tgt in self.entries:
            if tgt is not None and tgt not in out:
                out.append(tgt)
        return out


def category_map_to_json(m: CategoryMap) -> str:
    doc = {
        "name": m.name,
        "entries": [{"source": s, "target": t} for s, t in m.entries],
    }
    return json.dumps(doc, indent=2) + "\n"


def category_map_from_json(text: str) -> CategoryMap:
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise MalformedJson(f"not valid JSON: {exc}") from exc
    if not isinstance(doc, dict) or "entries" not in doc:
        raise MalformedJson("category map must be an object with an 'entries' list")
    entries = []
    for i, rec in enumerate(doc["entries"]):
        if not isinstance(rec, dict) or "source" not in rec:
            raise MalformedField("map entry", i, "entry must be an object with a 'source'")
        target = rec.get("target")
        if target is not None and not isinstance(target, str):
            raise MalformedField("map entry", i, f"target must be a string or null, got {target!r}")
        entries.append((rec["source"], target))
    return CategoryMap(name=doc.get("name", "unnamed"), entries=tuple(entries))


def builtin_maps() -> list[CategoryMap]:
    """The driving-ontology maps shipped with the toolkit."""
    idd = CategoryMap(
        name="idd_to_flir",
        entries=(
            ("Person", "Person"),
            ("Rider", "Person"),
            ("Car", "Car"),
            ("Caravan", "Car"),
            ("Autorickshaw", "Car"),
            ("Bicycle", "Bicycle"),
            ("Motorcycle", "Bicycle"),
            ("Animal", "Dog"),
            ("Bus", None),
            ("Trailer", None),
            ("Truck", None),
            ("Vehicle fallback", None),
        ),
    )
    kitti = CategoryMap(
        name="kitti_to_flir",
        entries=(
            ("Pedestrian", "Person"),
            ("Cyclist", "Person"),
            ("Car", "Car"),
            ("Truck", None),
        ),
    )
    return [idd, kitti]


def builtin_map(name: str) -> CategoryMap | None:
    for m in builtin_maps():
        if m.name == name:
            return m
    return None


@dataclass(frozen=True)
class RemapReport:
    map_name: str
    kept: Mapping[str, int]
    dropped: Mapping[str, int]
    unmapped: tuple[str, ...]
    empty_result: bool

    @property
    def kept_total(self) -> int:
        return sum(self.kept.values())

    @property
    def dropped_total(self) -> int:
        return sum(self.dropped.values())

    def to_json_dict(self) -> dict:
        return {
            "map": self.map_name,
            "kept": {k: self.kept[k] for k in sorted(self.kept)},
            "dropped": {k: self.dropped[k] for k in sorted(self.dropped)},
            "unmapped": sorted(self.unmapped),
            "kept_total": self.kept_total,
            "dropped_total": self.dropped_total,
            "empty_result": self.empty_result,
        }


def remap_labels(
    d: Dataset, m: CategoryMap, strict: bool = True
) -> tuple[Dataset, RemapReport]:
    """Rewrite annotations into the map's target ontology.

    Labels mapping to None are dropped (counted per source label); images are
    never removed, even when left without annotations.  In strict mode a
    dataset category with no map entry raises UnmappedLabel; otherwise its
    annotations are dropped and the label is reported.
    """
    lookup = m.lookup()
    unmapped = sorted(
        {c.name for c in d.categories if canonical_label(c.name) not in lookup}
    )
    if strict and unmapped:
        raise UnmappedLabel(
            f"labels with no entry in map {m.name!r}: {', '.join(unmapped)}"
        )

    # Target ids: reuse the id of a same-named source category when present
    # (keeps identity maps idempotent), else the smallest unused positive id.
    by_folded_name = {}
    for c in sorted(d.categories, key=lambda c: c.id):
        by_folded_name.setdefault(canonical_label(c.name), c.id)
    used_ids = set()
    target_ids: dict[str, int] = {}
    for label in m.target_labels():
        reuse = by_folded_name.get(canonical_label(label))
        if reuse is not None and reuse not in used_ids:
            target_ids[label] = reuse
            used_ids.add(reuse)
    next_id = 1
    for label in m.target_labels():
        if label in target_ids:
            continue
        while next_id in used_ids:
            next_id += 1
        target_ids[label] = next_id
        used_ids.add(next_id)

    categories = tuple(CategoryDef(id=target_ids[lbl], name=lbl) for lbl in m.target_labels())

    source_names = {c.id: c.name for c in d.categories}
    kept: dict[str, int] = {}
    dropped: dict[str, int] = {}
    annotations = []
    for a in d.annotations:
        src_name = source_names[a.category_id]
        target = lookup.get(canonical_label(src_name), None)
        if target is None:
            dropped[src_name] = dropped.get(src_name, 0) + 1
            continue
        kept[src_name] = kept.get(src_name, 0) + 1
        annotations.append(
            AnnotationRecord(
                id=a.id,
                image_id=a.image_id,
                category_id=target_ids[target],
                bbox=a.bbox,
                area=a.bbox.area,
                extra=a.extra,
            )
        )

    remapped = Dataset(
        images=d.images,
        annotations=tuple(annotations),
        categories=categories,
        extra=d.extra,
    )
    report = RemapReport(
        map_name=m.name,
        kept=kept,
        dropped=dropped,
        unmapped=tuple(unmapped),
        empty_result=bool(d.annotations) and not annotations,
    )
    return remapped, report


# ---------------------------------------------------------------------------
# day/night splits

PHASES = ("day", "night")


@dataclass(frozen=True)
class SplitManifest:
    """Image (file name or id) -> capture phase, one entry per image."""

    entries: tuple[tuple[str, str], ...]


def split_manifest_from_csv(text: str) -> SplitManifest:
    reader = csv.reader(io.StringIO(text))
    rows = [row for row in reader if row]
    if not rows or [c.strip() for c in rows[0]] != ["image", "phase"]:
        raise MalformedField("manifest", 0, "header must be exactly 'image,phase'")
    entries = []
    for i, row in enumerate(rows[1:], start=1):
        if len(row) != 2:
            raise MalformedField("manifest", i, f"expected 2 columns, got {len(row)}")
        image, phase = row[0].strip(), row[1].strip()
        if phase not in PHASES:
            raise MalformedField("manifest", i, f"phase must be one of {PHASES}, got {phase!r}")
        entries.append((image, phase))
    return SplitManifest(entries=tuple(entries))


def split_manifest_to_csv(s: SplitManifest) -> str:
    lines = ["image,phase"]
    lines.extend(f"{image},{phase}" for image, phase in s.entries)
    return "\n".join(lines) + "\n"


def manifest_from_substring(d: Dataset, night_substring: str) -> SplitManifest:
    """Convenience manifest: images whose file name contains the substring
    are night, everything else is day."""
    return SplitManifest(
        entries=tuple(
            (im.file_name, "night" if night_substring in im.file_name else "day")
            for im in d.images
        )
    )


def split_by_manifest(d: Dataset, s: SplitManifest) -> tuple[Dataset, Dataset]:
    """Partition into (night, day) datasets; annotations follow their image
    and both halves keep the full category list."""
    by_name: dict[str, list[ImageRecord]] = {}
    for im in d.images:
        by_name.setdefault(im.file_name, []).append(im)
    by_id = {im.id: im for im in d.images}

    phase_of: dict[int, str] = {}
    for key, phase in s.entries:
        hits = by_name.get(key, [])
        if len(hits) > 1:
            raise AmbiguousImageName(f"manifest entry {key!r} matches {len(hits)} images")
        if hits:
            image = hits[0]
        elif key.isdigit() and int(key) in by_id:
            image = by_id[int(key)]
        else:
            raise UnknownImage(f"manifest entry {key!r} matches no image in the dataset")
        if image.id in phase_of:
            raise DuplicateId("manifest entry", key, f"image {image.id} tagged more than once")
        phase_of[image.id] = phase

    uncovered = [im.file_name for im in d.images if im.id not in phase_of]
    if uncovered:
        raise UncoveredImage(
            f"{len(uncovered)} images not covered by the manifest "
            f"(first: {uncovered[0]!r})"
        )

    def subset(phase: str) -> Dataset:
        images = tuple(im for im in d.images if phase_of[im.id] == phase)
        ids = {im.id for im in images}
        annotations = tuple(a for a in d.annotations if a.image_id in ids)
        return Dataset(
            images=images,
            annotations=annotations,
            categories=d.categories,
            extra=d.extra,
        )

    return subset("night"), subset("day")
