"""CLI behavior: flags, exit codes, outputs, determinism."""

import json
from pathlib import Path

import pytest

from xspec.cli import main
from xspec.dataset import parse_dataset
from xspec.geometry import homography_from_json

DATA = Path(__file__).parent / "data"
WORKSPACE = DATA / "workspace"


def write_pairs(path: Path, n: int, width=160, height=128):
    pairs = [
        {
            "pair_id": f"p{i:02d}",
            "source_image": f"t{i:02d}.png",
            "target_image": f"v{i:02d}.png",
            "target_width": width,
            "target_height": height,
        }
        for i in range(n)
    ]
    path.write_text(json.dumps(pairs))
    return pairs


def write_correspondences(directory: Path, pair_id: str, points):
    directory.mkdir(parents=True, exist_ok=True)
    doc = {
        "pair_id": pair_id,
        "source_image": "t.png",
        "target_image": "v.png",
        "points": [{"sx": sx, "sy": sy, "tx": tx, "ty": ty} for sx, sy, tx, ty in points],
    }
    (directory / f"{pair_id}.json").write_text(json.dumps(doc))


IDENTITY_8 = [
    (10, 10, 10, 10), (150, 12, 150, 12), (148, 118, 148, 118), (12, 120, 12, 120),
    (80, 20, 80, 20), (85, 110, 85, 110), (20, 64, 20, 64), (140, 70, 140, 70),
]


# ---------------------------------------------------------------------------
# register

def test_register_exact_points_reports_zero_rmse(tmp_path, capsys):
    pairs_file = tmp_path / "pairs.json"
    write_pairs(pairs_file, 1)
    write_correspondences(tmp_path / "corr", "p00", IDENTITY_8)
    out = tmp_path / "homographies"
    code = main(["register", "--pairs", str(pairs_file),
                 "--correspondences", str(tmp_path / "corr"), "--out", str(out)])
    assert code == 0
    assert capsys.readouterr().out.startswith("p00: rmse=0.000000")
    _, h = homography_from_json((out / "p00.json").read_text())
    summary = json.loads((out / "summary.json").read_text())
    assert summary["failed"] == 0
    assert summary["pairs"][0]["rmse"] < 1e-9


def test_register_too_few_points_fails_that_pair(tmp_path, capsys):
    pairs_file = tmp_path / "pairs.json"
    write_pairs(pairs_file, 1)
    write_correspondences(tmp_path / "corr", "p00", IDENTITY_8[:3])
    code = main(["register", "--pairs", str(pairs_file),
                 "--correspondences", str(tmp_path / "corr"),
                 "--out", str(tmp_path / "h")])
    assert code == 1
    assert "TooFewPoints" in capsys.readouterr().err


def test_register_continues_past_degenerate_pair(tmp_path, capsys):
    pairs_file = tmp_path / "pairs.json"
    write_pairs(pairs_file, 3)
    corr = tmp_path / "corr"
    write_correspondences(corr, "p00", IDENTITY_8)
    collinear = [(i * 10, i * 10, i * 10, i * 10) for i in range(8)]
    write_correspondences(corr, "p01", collinear)
    write_correspondences(corr, "p02", IDENTITY_8)
    out = tmp_path / "h"
    code = main(["register", "--pairs", str(pairs_file),
                 "--correspondences", str(corr), "--out", str(out)])
    assert code == 1
    assert (out / "p00.json").is_file()
    assert not (out / "p01.json").exists()
    assert (out / "p02.json").is_file()
    summary = json.loads((out / "summary.json").read_text())
    assert summary["failed"] == 1
    assert "DegenerateConfiguration" in summary["pairs"][1]["error"]


def test_register_missing_correspondence_file_listed(tmp_path, capsys):
    pairs_file = tmp_path / "pairs.json"
    write_pairs(pairs_file, 2)
    write_correspondences(tmp_path / "corr", "p00", IDENTITY_8)
    code = main(["register", "--pairs", str(pairs_file),
                 "--correspondences", str(tmp_path / "corr"),
                 "--out", str(tmp_path / "h")])
    assert code == 1
    assert "p01" in capsys.readouterr().err


# ---------------------------------------------------------------------------
# transfer

def run_fixture_register(tmp_path) -> Path:
    out = tmp_path / "homographies"
    code = main(["register", "--pairs", str(WORKSPACE / "pairs.json"),
                 "--correspondences", str(WORKSPACE / "correspondences"),
                 "--out", str(out)])
    assert code == 0
    return out


def test_transfer_writes_dataset_and_report(tmp_path, capsys):
    hdir = run_fixture_register(tmp_path)
    out = tmp_path / "transferred.json"
    code = main(["transfer", "--dataset", str(WORKSPACE / "annotations.json"),
                 "--pairs", str(WORKSPACE / "pairs.json"),
                 "--homographies", str(hdir), "--out", str(out)])
    assert code == 0
    d = parse_dataset(out.read_text())
    assert [im.file_name for im in d.images] == ["v00.png", "v01.png", "v02.png"]
    report = json.loads((tmp_path / "transferred.report.json").read_text())
    assert report["totals"]["projected"] == 14
    # diagnostics from the register summary ride along
    assert "rmse" in report["pairs"][0]


def test_transfer_missing_homography_fails_fast(tmp_path, capsys):
    hdir = run_fixture_register(tmp_path)
    (hdir / "p01.json").unlink()
    code = main(["transfer", "--dataset", str(WORKSPACE / "annotations.json"),
                 "--pairs", str(WORKSPACE / "pairs.json"),
                 "--homographies", str(hdir), "--out", str(tmp_path / "t.json")])
    assert code == 1
    assert "p01" in capsys.readouterr().err


def test_transfer_is_deterministic(tmp_path):
    hdir = run_fixture_register(tmp_path)
    outs = []
    for name in ("a.json", "b.json"):
        out = tmp_path / name
        assert main(["transfer", "--dataset", str(WORKSPACE / "annotations.json"),
                     "--pairs", str(WORKSPACE / "pairs.json"),
                     "--homographies", str(hdir), "--out", str(out)]) == 0
        outs.append(out.read_bytes())
    assert outs[0] == outs[1]


def test_transfer_policy_flags(tmp_path):
    hdir = run_fixture_register(tmp_path)
    out = tmp_path / "open.json"
    code = main(["transfer", "--dataset", str(WORKSPACE / "annotations.json"),
                 "--pairs", str(WORKSPACE / "pairs.json"),
                 "--homographies", str(hdir), "--out", str(out),
                 "--no-clip", "--min-visible-fraction", "0", "--min-pixel-area", "0"])
    assert code == 0
    # nothing is dropped or clipped with the permissive policy
    report = json.loads((tmp_path / "open.report.json").read_text())
    assert report["totals"]["kept"] == 14
    assert all(p["clipped"] == 0 for p in report["pairs"])


# ---------------------------------------------------------------------------
# remap

def test_remap_builtin_map(tmp_path, capsys):
    out = tmp_path / "remapped.json"
    code = main(["remap", "--dataset", str(WORKSPACE / "annotations.json"),
                 "--map", "idd_to_flir", "--out", str(out)])
    assert code == 0
    d = parse_dataset(out.read_text())
    assert {c.name for c in d.categories} == {"Person", "Car", "Bicycle", "Dog"}
    names = {c.id: c.name for c in d.categories}
    assert all(names[a.category_id] in names.values() for a in d.annotations)
    report = json.loads((tmp_path / "remapped.report.json").read_text())
    assert report["dropped"] == {"Bus": 2}
    assert report["kept"]["Rider"] == 1


def test_remap_unknown_builtin_name(tmp_path, capsys):
    code = main(["remap", "--dataset", str(WORKSPACE / "annotations.json"),
                 "--map", "nope_to_nowhere", "--out", str(tmp_path / "o.json")])
    assert code == 1
    err = capsys.readouterr().err
    assert "idd_to_flir" in err and "kitti_to_flir" in err


def test_remap_strict_unmapped_label(tmp_path, capsys):
    doc = {
        "images": [{"id": 1, "file_name": "x.png", "width": 64, "height": 64}],
        "annotations": [
            {"id": 1, "image_id": 1, "category_id": 1, "bbox": [1, 1, 5, 5], "area": 25}
        ],
        "categories": [{"id": 1, "name": "Hovercraft"}],
    }
    src = tmp_path / "src.json"
    src.write_text(json.dumps(doc))
    code = main(["remap", "--dataset", str(src), "--map", "idd_to_flir",
                 "--out", str(tmp_path / "o.json")])
    assert code == 1
    assert "Hovercraft" in capsys.readouterr().err
    code = main(["remap", "--dataset", str(src), "--map", "idd_to_flir",
                 "--out", str(tmp_path / "o.json"), "--drop-unmapped"])
    assert code == 0


def test_remap_with_map_file(tmp_path):
    map_file = tmp_path / "custom.json"
    map_file.write_text(json.dumps({
        "name": "custom",
        "entries": [{"source": n, "target": "Car"} for n in
                    ("Person", "Rider", "Car", "Autorickshaw", "Motorcycle", "Bus", "Animal")],
    }))
    out = tmp_path / "o.json"
    code = main(["remap", "--dataset", str(WORKSPACE / "annotations.json"),
                 "--map", str(map_file), "--out", str(out)])
    assert code == 0
    d = parse_dataset(out.read_text())
    assert [c.name for c in d.categories] == ["Car"]
    assert len(d.annotations) == 14


# ---------------------------------------------------------------------------
# split

def test_split_writes_phase_files(tmp_path):
    out = tmp_path / "remapped.json"
    assert main(["remap", "--dataset", str(WORKSPACE / "annotations.json"),
                 "--map", "idd_to_flir", "--out", str(out)]) == 0
    manifest = tmp_path / "m.csv"
    manifest.write_text("image,phase\nt00.png,night\nt01.png,day\nt02.png,night\n")
    assert main(["split", "--dataset", str(out), "--manifest", str(manifest)]) == 0
    night = parse_dataset((tmp_path / "remapped.night.json").read_text())
    day = parse_dataset((tmp_path / "remapped.day.json").read_text())
    assert [im.file_name for im in night.images] == ["t00.png", "t02.png"]
    assert [im.file_name for im in day.images] == ["t01.png"]


def test_split_night_substring_convenience(tmp_path):
    doc = {
        "images": [
            {"id": 1, "file_name": "clip_night_001.png", "width": 64, "height": 64},
            {"id": 2, "file_name": "clip_day_001.png", "width": 64, "height": 64},
        ],
        "annotations": [],
        "categories": [{"id": 1, "name": "Car"}],
    }
    src = tmp_path / "d.json"
    src.write_text(json.dumps(doc))
    assert main(["split", "--dataset", str(src), "--night-substring", "night"]) == 0
    night = parse_dataset((tmp_path / "d.night.json").read_text())
    assert [im.file_name for im in night.images] == ["clip_night_001.png"]


def test_transfer_default_homography_fills_missing_pairs(tmp_path):
    hdir = run_fixture_register(tmp_path)
    (hdir / "p01.json").unlink()
    out = tmp_path / "t.json"
    code = main(["transfer", "--dataset", str(WORKSPACE / "annotations.json"),
                 "--pairs", str(WORKSPACE / "pairs.json"),
                 "--homographies", str(hdir),
                 "--default-homography", str(hdir / "p00.json"),
                 "--out", str(out)])
    assert code == 0
    d = parse_dataset(out.read_text())
    assert len(d.images) == 3


def test_split_uncovered_image_fails(tmp_path, capsys):
    manifest = tmp_path / "m.csv"
    manifest.write_text("image,phase\nt00.png,night\n")
    code = main(["split", "--dataset", str(WORKSPACE / "annotations.json"),
                 "--manifest", str(manifest)])
    assert code == 1
    assert "not covered" in capsys.readouterr().err


# ---------------------------------------------------------------------------
# eval

def night_fixture(tmp_path) -> Path:
    # remap then split the committed fixture inside tmp
    remapped = tmp_path / "remapped.json"
    assert main(["remap", "--dataset", str(WORKSPACE / "annotations.json"),
                 "--map", "idd_to_flir", "--out", str(remapped)]) == 0
    manifest = tmp_path / "m.csv"
    manifest.write_text("image,phase\nt00.png,night\nt01.png,day\nt02.png,night\n")
    assert main(["split", "--dataset", str(remapped), "--manifest", str(manifest)]) == 0
    return tmp_path / "remapped.night.json"


def test_eval_perfect_detections_row_of_ones(tmp_path, capsys):
    gt_path = night_fixture(tmp_path)
    gt = parse_dataset(gt_path.read_text())
    dets = [
        {"image_id": a.image_id, "category_id": a.category_id,
         "bbox": [a.bbox.x, a.bbox.y, a.bbox.w, a.bbox.h], "score": 1.0}
        for a in gt.annotations
    ]
    det_file = tmp_path / "perfect.json"
    det_file.write_text(json.dumps(dets))
    capsys.readouterr()  # discard fixture-prep output
    code = main(["eval", str(det_file), "--gt", str(gt_path), "--format", "csv"])
    assert code == 0
    lines = capsys.readouterr().out.splitlines()
    assert lines[0] == "Train Dataset,Test Dataset,Bicycle,Car,Dog,Person,mAP"
    assert lines[1] == "perfect,remapped.night,-,1.000,1.000,1.000,1.000"


def test_eval_two_files_two_rows_in_order(tmp_path, capsys):
    gt_path = night_fixture(tmp_path)
    for name in ("zzz", "aaa"):
        (tmp_path / f"{name}.json").write_text(json.dumps([]))
    out = tmp_path / "table.md"
    code = main(["eval", str(tmp_path / "zzz.json"), str(tmp_path / "aaa.json"),
                 "--gt", str(gt_path), "--out", str(out)])
    assert code == 0
    rows = [l for l in out.read_text().splitlines() if l.startswith("|") and "---" not in l]
    assert "zzz" in rows[1] and "aaa" in rows[2]
    report = json.loads((tmp_path / "table.report.json").read_text())
    assert [r["train_tag"] for r in report] == ["zzz", "aaa"]


def test_eval_bad_file_gives_partial_table_and_nonzero_exit(tmp_path, capsys):
    gt_path = night_fixture(tmp_path)
    good = tmp_path / "good.json"
    good.write_text(json.dumps([]))
    bad = tmp_path / "bad.json"
    bad.write_text("{not json")
    capsys.readouterr()  # discard fixture-prep output
    code = main(["eval", str(good), str(bad), "--gt", str(gt_path)])
    captured = capsys.readouterr()
    assert code == 1
    assert "good" in captured.out
    assert "bad.json" in captured.err


# ---------------------------------------------------------------------------
# plumbing

def test_unknown_command_rejected():
    with pytest.raises(SystemExit):
        main(["frobnicate"])


def test_missing_input_file_is_validation_error(tmp_path, capsys):
    code = main(["split", "--dataset", str(tmp_path / "none.json"),
                 "--manifest", str(tmp_path / "none.csv")])
    assert code == 1
