"""Shared generators for randomized tests.

All randomness is numpy Generator based and seeded by the caller, so every
test run is reproducible.
"""

from __future__ import annotations

import numpy as np

from xspec.geometry import Correspondence, Point2


def random_ground_truth_matrix(rng: np.random.Generator) -> np.ndarray:
    """Well-conditioned projective matrix: similarity plus mild perspective."""
    angle = rng.uniform(-0.6, 0.6)
    scale = rng.uniform(0.6, 1.8)
    tx, ty = rng.uniform(-80.0, 80.0, size=2)
    c, s = np.cos(angle), np.sin(angle)
    px, py = rng.uniform(-1e-4, 1e-4, size=2)
    return np.array(
        [
            [scale * c, -scale * s, tx],
            [scale * s, scale * c, ty],
            [px, py, 1.0],
        ]
    )


def random_frame_points(
    rng: np.random.Generator, n: int, width: float = 640.0, height: float = 512.0
) -> np.ndarray:
    return np.column_stack(
        [rng.uniform(0.0, width, size=n), rng.uniform(0.0, height, size=n)]
    )


def project_rows(m: np.ndarray, pts: np.ndarray) -> np.ndarray:
    """Forward projection oracle on raw arrays (independent of the package's
    projection path)."""
    homog = np.hstack([pts, np.ones((len(pts), 1))])
    mapped = homog @ np.asarray(m, dtype=float).T
    return mapped[:, :2] / mapped[:, 2:3]


def correspondences_from_arrays(src: np.ndarray, tgt: np.ndarray) -> list[Correspondence]:
    return [
        Correspondence(Point2(float(sx), float(sy)), Point2(float(tx), float(ty)))
        for (sx, sy), (tx, ty) in zip(src, tgt)
    ]


def exact_correspondences(
    m: np.ndarray, rng: np.random.Generator, n: int
) -> list[Correspondence]:
    src = random_frame_points(rng, n)
    tgt = project_rows(m, src)
    return correspondences_from_arrays(src, tgt)


def canonical_matrix(m: np.ndarray) -> np.ndarray:
    """Test-local canonicalization: Frobenius norm 1, bottom-right (or first
    nonzero) entry nonnegative."""
    out = np.asarray(m, dtype=float) / np.linalg.norm(m)
    anchor = out[2, 2]
    if anchor == 0.0:
        nonzero = out.ravel()[out.ravel() != 0.0]
        anchor = nonzero[0] if nonzero.size else 1.0
    return -out if anchor < 0.0 else out


def random_scene(
    rng: np.random.Generator,
    classes: tuple[str, ...] = ("Bicycle", "Car", "Dog", "Person"),
    n_images: int = 3,
    max_gt_per_image: int = 4,
    max_detections: int = 6,
):
    """Small ground-truth/detection scene in both package and plain form.

    Returns (gt_dataset, detection_set, gt_by_class, det_by_class) where the
    last two feed the reference oracle: label -> image_id -> (x, y, w, h)
    and label -> [(image_id, box, score)] in input order.
    """
    from xspec.dataset import AnnotationRecord, CategoryDef, Dataset, ImageRecord
    from xspec.evaluation import Detection, DetectionSet
    from xspec.geometry import BBox

    cats = tuple(CategoryDef(id=i + 1, name=n) for i, n in enumerate(classes))
    images = tuple(
        ImageRecord(id=i + 1, file_name=f"im{i}.png", width=640, height=512)
        for i in range(n_images)
    )

    def random_box():
        x = float(rng.uniform(0, 540))
        y = float(rng.uniform(0, 420))
        w = float(rng.uniform(8, 90))
        h = float(rng.uniform(8, 80))
        return (x, y, w, h)

    gt_by_class: dict[str, dict[int, list[tuple]]] = {
        c.name: {im.id: [] for im in images} for c in cats
    }
    annotations = []
    ann_id = 1
    for im in images:
        for c in cats:
            for _ in range(int(rng.integers(0, max_gt_per_image + 1))):
                box = random_box()
                gt_by_class[c.name][im.id].append(box)
                annotations.append(
                    AnnotationRecord(
                        id=ann_id, image_id=im.id, category_id=c.id,
                        bbox=BBox(*box), area=box[2] * box[3],
                    )
                )
                ann_id += 1
    if not annotations:  # keep mAP defined
        box = random_box()
        gt_by_class[cats[0].name][1].append(box)
        annotations.append(
            AnnotationRecord(id=1, image_id=1, category_id=1, bbox=BBox(*box),
                             area=box[2] * box[3])
        )

    det_by_class: dict[str, list[tuple]] = {c.name: [] for c in cats}
    detections = []
    for c in cats:
        n_det = int(rng.integers(0, max_detections + 1))
        gt_pool = [
            (im_id, box) for im_id, boxes in gt_by_class[c.name].items() for box in boxes
        ]
        for _ in range(n_det):
            # coarse scores force ties through the stable ordering rule
            score = round(float(rng.uniform(0.05, 1.0)), 1)
            if gt_pool and rng.random() < 0.7:
                im_id, (x, y, w, h) = gt_pool[int(rng.integers(0, len(gt_pool)))]
                jitter = rng.uniform(-0.3, 0.3, size=4)
                box = (x + jitter[0] * w, y + jitter[1] * h,
                       w * (1 + float(jitter[2])), h * (1 + float(jitter[3])))
            else:
                im_id = int(rng.integers(1, n_images + 1))
                box = random_box()
            det_by_class[c.name].append((im_id, box, score))
            detections.append(
                Detection(image_id=im_id, category_id=c.id, bbox=BBox(*box), score=score)
            )

    gt = Dataset(images=images, annotations=tuple(annotations), categories=cats)
    dets = DetectionSet(detections=tuple(detections), source_tag="synthetic")
    return gt, dets, gt_by_class, det_by_class
