"""Durable per-pair correspondence state behind the picker service.

A workspace is a flat, human-inspectable directory:

    pairs.json                    image pair catalog
    images/                       source and target image files
    correspondences/<pair>.json   picked points, rewritten on every mutation
    homographies/<pair>.json      current fit, written when one exists
    annotations.json              optional source dataset for previews
    events.log                    append-only JSON-lines session log

Every mutation is applied under a per-pair lock, persisted (points file,
homography file, event line) before it is acknowledged, and bumps the pair's
revision.  Reads hand out immutable snapshots, so they need no locking.
"""

from __future__ import annotations

import json
import os
import threading
from dataclasses import dataclass
from datetime import datetime, timezone
from pathlib import Path

from .dataset import Dataset, parse_dataset
from .errors import (
    DegenerateConfiguration,
    NonFiniteInput,
    StaleRevision,
    TooFewPoints,
    UnknownPair,
    XspecError,
)
from .geometry import (
    Correspondence,
    CorrespondenceSet,
    FitDiagnostics,
    Homography,
    correspondence_set_from_json,
    correspondence_set_to_json,
    fit_homography,
    homography_to_json,
    project_bbox,
    residuals,
)
from .transfer import ImagePair, load_image_pairs


@dataclass(frozen=True)
class PairSnapshot:
    pair: ImagePair
    points: tuple[Correspondence, ...]
    revision: int
    fit: Homography | None
    diagnostics: FitDiagnostics | None
    fit_error: str | None


def compute_fit(
    points: tuple[Correspondence, ...],
) -> tuple[Homography | None, FitDiagnostics | None, str | None]:
    """Fit if possible; otherwise name the reason the pair is unfitted."""
    if len(points) < 4:
        return None, None, "TooFewPoints"
    try:
        fit = fit_homography(points)
    except (TooFewPoints, DegenerateConfiguration, NonFiniteInput) as exc:
        return None, None, type(exc).__name__
    return fit, residuals(fit, points), None


class Workspace:
    def __init__(self, root: Path | str):
        self.root = Path(root)
        pairs_path = self.root / "pairs.json"
        if not pairs_path.is_file():
            raise XspecError(f"workspace has no pairs.json: {self.root}")
        self.pairs = load_image_pairs(pairs_path.read_text())
        self.images_dir = self.root / "images"
        self.correspondence_dir = self.root / "correspondences"
        self.homography_dir = self.root / "homographies"
        self.events_path = self.root / "events.log"
        self.correspondence_dir.mkdir(exist_ok=True)
        self.homography_dir.mkdir(exist_ok=True)

        self.annotations: Dataset | None = None
        annotations_path = self.root / "annotations.json"
        if annotations_path.is_file():
            self.annotations = parse_dataset(annotations_path.read_text())

        self._seq, revisions = self._replay_events()
        self._locks = {p.pair_id: threading.Lock() for p in self.pairs}
        self._log_lock = threading.Lock()
        self._state: dict[str, PairSnapshot] = {}
        for pair in self.pairs:
            points = self._load_points(pair)
            fit, diagnostics, fit_error = compute_fit(points)
            self._state[pair.pair_id] = PairSnapshot(
                pair=pair,
                points=points,
                revision=revisions.get(pair.pair_id, 0),
                fit=fit,
                diagnostics=diagnostics,
                fit_error=fit_error,
            )

    # -- loading ----------------------------------------------------------

    def _replay_events(self) -> tuple[int, dict[str, int]]:
        seq = 0
        revisions: dict[str, int] = {}
        if self.events_path.is_file():
            for line in self.events_path.read_text().splitlines():
                if not line.strip():
                    continue
                event = json.loads(line)
                seq = max(seq, event.get("seq", 0))
                pair_id = event.get("pair_id")
                if pair_id is not None:
                    revisions[pair_id] = max(revisions.get(pair_id, 0), event.get("revision", 0))
        return seq, revisions

    def _load_points(self, pair: ImagePair) -> tuple[Correspondence, ...]:
        path = self.correspondence_dir / f"{pair.pair_id}.json"
        if not path.is_file():
            return ()
        return correspondence_set_from_json(path.read_text()).points

    # -- reads ------------------------------------------------------------

    def pair_ids(self) -> list[str]:
        return [p.pair_id for p in self.pairs]

    def snapshot(self, pair_id: str) -> PairSnapshot:
        try:
            return self._state[pair_id]
        except KeyError:
            raise UnknownPair(f"unknown pair {pair_id!r}") from None

    def image_path(self, pair_id: str, which: str) -> Path:
        snap = self.snapshot(pair_id)
        name = snap.pair.source_image if which == "source" else snap.pair.target_image
        path = (self.images_dir / name).resolve()
        if not str(path).startswith(str(self.images_dir.resolve()) + os.sep):
            raise UnknownPair(f"image path escapes the workspace: {name!r}")
        return path

    def preview_boxes(self, pair_id: str) -> list[dict] | None:
        """Source-frame annotation boxes projected into the target frame, or
        None when the pair has no fit."""
        snap = self.snapshot(pair_id)
        if snap.fit is None:
            return None
        if self.annotations is None:
            return []
        image = self.annotations.image_by_file_name(snap.pair.source_image)
        if image is None:
            return []
        names = {c.id: c.name for c in self.annotations.categories}
        boxes = []
        for a in self.annotations.annotations:
            if a.image_id != image.id:
                continue
            try:
                b = project_bbox(snap.fit, a.bbox)
            except XspecError:
                continue
            boxes.append(
                {
                    "annotation_id": a.id,
                    "label": names[a.category_id],
                    "x": b.x,
                    "y": b.y,
                    "w": b.w,
                    "h": b.h,
                }
            )
        return boxes

    # -- mutations --------------------------------------------------------

    def add_point(self, pair_id: str, point: Correspondence, revision: int) -> PairSnapshot:
        return self._mutate(pair_id, revision, "add_point", lambda pts: pts + (point,))

    def delete_point(self, pair_id: str, index: int, revision: int) -> PairSnapshot:
        def apply(pts: tuple[Correspondence, ...]) -> tuple[Correspondence, ...]:
            if not 0 <= index < len(pts):
                raise IndexError(f"point index {index} out of range (have {len(pts)})")
            return pts[:index] + pts[index + 1 :]

        return self._mutate(pair_id, revision, "delete_point", apply)

    def _mutate(self, pair_id: str, revision: int, action: str, apply) -> PairSnapshot:
        if pair_id not in self._locks:
            raise UnknownPair(f"unknown pair {pair_id!r}")
        with self._locks[pair_id]:
            current = self._state[pair_id]
            if revision != current.revision:
                raise StaleRevision(pair_id, current.revision, revision)
            points = apply(current.points)
            fit, diagnostics, fit_error = compute_fit(points)
            new = PairSnapshot(
                pair=current.pair,
                points=points,
                revision=current.revision + 1,
                fit=fit,
                diagnostics=diagnostics,
                fit_error=fit_error,
            )
            self._persist(new, action)
            self._state[pair_id] = new
            return new

    def _persist(self, snap: PairSnapshot, action: str) -> None:
        pair = snap.pair
        cs = CorrespondenceSet(
            pair_id=pair.pair_id,
            source_image=pair.source_image,
            target_image=pair.target_image,
            points=snap.points,
        )
        self._atomic_write(
            self.correspondence_dir / f"{pair.pair_id}.json", correspondence_set_to_json(cs)
        )
        fit_path = self.homography_dir / f"{pair.pair_id}.json"
        if snap.fit is not None:
            self._atomic_write(fit_path, homography_to_json(snap.fit, pair.pair_id))
        elif fit_path.exists():
            fit_path.unlink()
        self._append_event(pair.pair_id, action, snap.revision)
        if len(snap.points) >= 4:
            self._append_event(pair.pair_id, "refit", snap.revision)
        if snap.fit is not None:
            self._append_event(pair.pair_id, "export", snap.revision)

    @staticmethod
    def _atomic_write(path: Path, text: str) -> None:
        tmp = path.with_suffix(path.suffix + ".tmp")
        tmp.write_text(text)
        os.replace(tmp, path)

    def _append_event(self, pair_id: str, action: str, revision: int) -> None:
        with self._log_lock:
            self._seq += 1
            event = {
                "seq": self._seq,
                "pair_id": pair_id,
                "action": action,
                "timestamp": datetime.now(timezone.utc).isoformat(),
                "revision": revision,
            }
            with open(self.events_path, "a", encoding="utf-8") as f:
                f.write(json.dumps(event) + "\n")
                f.flush()
                os.fsync(f.fileno())
