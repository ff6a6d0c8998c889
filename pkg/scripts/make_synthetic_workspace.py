#!/usr/bin/env python3
"""Regenerate the synthetic fixture workspace and its golden pipeline outputs.

The workspace under tests/data/workspace mimics a small thermal/visible rig:
three image pairs (identity, scale+shift, mild projective), a source dataset
with driving-style labels, exact hand-picked correspondences, a day/night
manifest, and two synthetic detection files.  Golden outputs under
tests/data/golden are produced by running the real CLI end to end and are
committed, so the pipeline test can compare byte for byte.

Run from the repository root:

    python3 scripts/make_synthetic_workspace.py
"""

from __future__ import annotations

import json
import shutil
import sys
from pathlib import Path

import numpy as np
from PIL import Image

ROOT = Path(__file__).resolve().parents[1]
sys.path.insert(0, str(ROOT / "src"))

from xspec.cli import main as cli_main  # noqa: E402
from xspec.dataset import parse_dataset  # noqa: E402
from xspec.evaluation import detections_to_json, Detection, DetectionSet  # noqa: E402
from xspec.geometry import BBox  # noqa: E402

DATA = ROOT / "tests" / "data"
WORKSPACE = DATA / "workspace"
GOLDEN = DATA / "golden"

THERMAL_W, THERMAL_H = 160, 128

PAIRS = [
    {"pair_id": "p00", "source_image": "t00.png", "target_image": "v00.png",
     "target_width": 160, "target_height": 128},
    {"pair_id": "p01", "source_image": "t01.png", "target_image": "v01.png",
     "target_width": 320, "target_height": 256},
    {"pair_id": "p02", "source_image": "t02.png", "target_image": "v02.png",
     "target_width": 320, "target_height": 256},
]

# ground-truth transforms used to synthesize exact correspondences
TRUE_H = {
    "p00": np.eye(3),
    "p01": np.array([[2.0, 0.0, 16.0], [0.0, 2.0, 12.0], [0.0, 0.0, 1.0]]),
    "p02": np.array(
        [[1.9, 0.08, 6.0], [-0.05, 1.85, 9.0], [1e-4, -8e-5, 1.0]]
    ),
}

PICKED_POINTS = [
    (10.0, 10.0), (150.0, 12.0), (148.0, 118.0), (12.0, 120.0),
    (80.0, 20.0), (85.0, 110.0), (20.0, 64.0), (140.0, 70.0),
]

CATEGORIES = ["Person", "Rider", "Car", "Autorickshaw", "Motorcycle", "Bus", "Animal"]

# (image_index, category, bbox) — includes boxes that clip, drop below the
# minimum area, or vanish at remap time, so the golden run covers those paths
ANNOTATIONS = [
    (0, "Person", (20, 30, 14, 30)),
    (0, "Car", (60, 50, 40, 22)),
    (0, "Bus", (100, 20, 36, 26)),
    (0, "Rider", (10, 80, 12, 24)),
    (0, "Car", (140, 100, 18, 14)),
    (0, "Person", (50, 5, 1.5, 1.2)),
    (1, "Autorickshaw", (30, 40, 24, 20)),
    (1, "Motorcycle", (70, 60, 16, 12)),
    (1, "Car", (120, 90, 30, 24)),
    (1, "Person", (140, 100, 18, 20)),
    (2, "Animal", (40, 30, 20, 16)),
    (2, "Person", (90, 70, 12, 26)),
    (2, "Car", (10, 100, 30, 20)),
    (2, "Bus", (120, 10, 30, 20)),
]

SPLIT = [("v00.png", "night"), ("v01.png", "day"), ("v02.png", "night")]


def project(m: np.ndarray, x: float, y: float) -> tuple[float, float]:
    v = m @ np.array([x, y, 1.0])
    return float(v[0] / v[2]), float(v[1] / v[2])


def write_image(path: Path, width: int, height: int, seed: int, boxes=()) -> None:
    rng = np.random.default_rng(seed)
    base = np.add.outer(np.linspace(30, 170, height), np.linspace(0, 60, width))
    img = (base + rng.normal(0, 6, size=(height, width))).clip(0, 255).astype(np.uint8)
    for (x, y, w, h) in boxes:
        x0, y0 = max(int(x), 0), max(int(y), 0)
        x1, y1 = min(int(x + w), width - 1), min(int(y + h), height - 1)
        if x1 > x0 and y1 > y0:
            img[y0:y1, x0] = 250
            img[y0:y1, x1] = 250
            img[y0, x0:x1] = 250
            img[y1, x0:x1] = 250
    Image.fromarray(img).save(path)


def build_workspace() -> None:
    shutil.rmtree(WORKSPACE, ignore_errors=True)
    (WORKSPACE / "images").mkdir(parents=True)
    (WORKSPACE / "correspondences").mkdir()

    (WORKSPACE / "pairs.json").write_text(json.dumps(PAIRS, indent=2) + "\n")

    images = [
        {"id": i + 1, "file_name": f"t{i:02d}.png", "width": THERMAL_W, "height": THERMAL_H}
        for i in range(3)
    ]
    cat_ids = {name: i + 1 for i, name in enumerate(CATEGORIES)}
    annotations = [
        {
            "id": k + 1,
            "image_id": img_idx + 1,
            "category_id": cat_ids[cat],
            "bbox": list(map(float, bbox)),
            "area": float(bbox[2]) * float(bbox[3]),
        }
        for k, (img_idx, cat, bbox) in enumerate(ANNOTATIONS)
    ]
    categories = [{"id": cat_ids[n], "name": n} for n in CATEGORIES]
    (WORKSPACE / "annotations.json").write_text(
        json.dumps(
            {"images": images, "annotations": annotations, "categories": categories},
            indent=2,
        )
        + "\n"
    )

    for pair in PAIRS:
        m = TRUE_H[pair["pair_id"]]
        points = [
            {"sx": sx, "sy": sy, "tx": tx, "ty": ty}
            for (sx, sy) in PICKED_POINTS
            for (tx, ty) in [project(m, sx, sy)]
        ]
        doc = {
            "pair_id": pair["pair_id"],
            "source_image": pair["source_image"],
            "target_image": pair["target_image"],
            "points": points,
        }
        (WORKSPACE / "correspondences" / f"{pair['pair_id']}.json").write_text(
            json.dumps(doc, indent=2) + "\n"
        )

    for i, pair in enumerate(PAIRS):
        src_boxes = [bbox for (img_idx, _, bbox) in ANNOTATIONS if img_idx == i]
        write_image(WORKSPACE / "images" / pair["source_image"],
                    THERMAL_W, THERMAL_H, seed=100 + i, boxes=src_boxes)
        m = TRUE_H[pair["pair_id"]]
        tgt_boxes = []
        for (x, y, w, h) in src_boxes:
            x0, y0 = project(m, x, y)
            x1, y1 = project(m, x + w, y + h)
            tgt_boxes.append((x0, y0, x1 - x0, y1 - y0))
        write_image(WORKSPACE / "images" / pair["target_image"],
                    pair["target_width"], pair["target_height"],
                    seed=200 + i, boxes=tgt_boxes)

    (DATA / "split.csv").write_text(
        "image,phase\n" + "\n".join(f"{img},{phase}" for img, phase in SPLIT) + "\n"
    )


def build_detections(night_path: Path) -> None:
    """Two synthetic detectors scored against the night ground truth: a noisy
    baseline and a tighter 'augmented' variant."""
    night = parse_dataset(night_path.read_text())
    out_dir = DATA / "detections"
    shutil.rmtree(out_dir, ignore_errors=True)
    out_dir.mkdir(parents=True)

    specs = {
        "baseline": {"seed": 11, "jitter": 0.35, "miss": 0.3, "fp": 3, "lo": 0.3},
        "augmented": {"seed": 12, "jitter": 0.10, "miss": 0.0, "fp": 1, "lo": 0.6},
    }
    for tag, spec in specs.items():
        rng = np.random.default_rng(spec["seed"])
        dets = []
        for a in night.annotations:
            if rng.random() < spec["miss"]:
                continue
            j = rng.uniform(-spec["jitter"], spec["jitter"], size=4)
            x = a.bbox.x + j[0] * a.bbox.w
            y = a.bbox.y + j[1] * a.bbox.h
            w = a.bbox.w * (1 + j[2])
            h = a.bbox.h * (1 + j[3])
            dets.append(
                Detection(
                    image_id=a.image_id,
                    category_id=a.category_id,
                    bbox=BBox(round(x, 2), round(y, 2), round(max(w, 1), 2), round(max(h, 1), 2)),
                    score=round(float(rng.uniform(spec["lo"], 0.98)), 2),
                )
            )
        image_ids = [im.id for im in night.images]
        cat_ids = [c.id for c in night.categories]
        for _ in range(spec["fp"]):
            dets.append(
                Detection(
                    image_id=int(rng.choice(image_ids)),
                    category_id=int(rng.choice(cat_ids)),
                    bbox=BBox(
                        round(float(rng.uniform(0, 100)), 2),
                        round(float(rng.uniform(0, 80)), 2),
                        round(float(rng.uniform(8, 30)), 2),
                        round(float(rng.uniform(8, 30)), 2),
                    ),
                    score=round(float(rng.uniform(0.1, 0.6)), 2),
                )
            )
        (out_dir / f"{tag}.json").write_text(
            detections_to_json(DetectionSet(tuple(dets), tag))
        )


def run(args: list[str]) -> None:
    code = cli_main(args)
    if code != 0:
        raise SystemExit(f"command failed ({code}): xspec {' '.join(args)}")


def build_golden() -> None:
    shutil.rmtree(GOLDEN, ignore_errors=True)
    GOLDEN.mkdir(parents=True)
    ws = WORKSPACE

    run(["register",
         "--pairs", str(ws / "pairs.json"),
         "--correspondences", str(ws / "correspondences"),
         "--out", str(GOLDEN / "homographies")])
    run(["transfer",
         "--dataset", str(ws / "annotations.json"),
         "--pairs", str(ws / "pairs.json"),
         "--homographies", str(GOLDEN / "homographies"),
         "--out", str(GOLDEN / "transferred.json")])
    run(["remap",
         "--dataset", str(GOLDEN / "transferred.json"),
         "--map", "idd_to_flir",
         "--out", str(GOLDEN / "remapped.json")])
    run(["split",
         "--dataset", str(GOLDEN / "remapped.json"),
         "--manifest", str(DATA / "split.csv")])

    build_detections(GOLDEN / "remapped.night.json")

    run(["eval",
         str(DATA / "detections" / "baseline.json"),
         str(DATA / "detections" / "augmented.json"),
         "--gt", str(GOLDEN / "remapped.night.json"),
         "--out", str(GOLDEN / "eval.md")])


if __name__ == "__main__":
    build_workspace()
    build_golden()
    print(f"workspace: {WORKSPACE}")
    print(f"golden:    {GOLDEN}")
