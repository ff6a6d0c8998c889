"""Command line entry points: register, transfer, remap, split, eval, serve.

Exit codes: 0 success, 1 validation or input failure, 2 internal error.
Every command is deterministic: identical inputs and flags produce
byte-identical outputs.
"""

from __future__ import annotations

import argparse
import json
import socket
import sys
import traceback
from pathlib import Path

from . import __version__
from .dataset import (
    builtin_map,
    builtin_maps,
    category_map_from_json,
    manifest_from_substring,
    parse_dataset,
    remap_labels,
    split_by_manifest,
    split_manifest_from_csv,
    write_dataset,
)
from .errors import MissingHomography, XspecError
from .evaluation import detections_from_json, evaluate, render_table
from .geometry import (
    FitDiagnostics,
    correspondence_set_from_json,
    fit_homography,
    homography_from_json,
    homography_to_json,
    residuals,
)
from .transfer import TransferPolicy, pair_catalog, to_json, transfer_dataset


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="xspec",
        description="Cross-spectral registration, annotation transfer, and evaluation",
    )
    parser.add_argument("--version", action="version", version=f"xspec {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("register", help="fit homographies from correspondence files")
    p.add_argument("--pairs", required=True, help="pair catalog JSON")
    p.add_argument("--correspondences", required=True, help="directory of <pair_id>.json files")
    p.add_argument("--out", required=True, help="output directory for homography files")
    p.set_defaults(func=cmd_register)

    p = sub.add_parser("transfer", help="project annotations into the target frames")
    p.add_argument("--dataset", required=True, help="source annotation JSON")
    p.add_argument("--pairs", required=True, help="pair catalog JSON")
    p.add_argument("--homographies", required=True, help="directory of homography files")
    p.add_argument("--default-homography",
                   help="homography file used for pairs without their own fit")
    p.add_argument("--out", required=True, help="output dataset path")
    p.add_argument("--report", help="report path (default: <out>.report.json)")
    p.add_argument("--no-clip", action="store_true", help="keep projected boxes unclipped")
    p.add_argument("--min-visible-fraction", type=float, default=0.25)
    p.add_argument("--min-pixel-area", type=float, default=4.0)
    p.set_defaults(func=cmd_transfer)

    p = sub.add_parser("remap", help="translate labels into a target ontology")
    p.add_argument("--dataset", required=True)
    p.add_argument("--map", required=True, dest="map_spec",
                   help="builtin map name or a map JSON file")
    p.add_argument("--out", required=True)
    p.add_argument("--report", help="report path (default: <out>.report.json)")
    mode = p.add_mutually_exclusive_group()
    mode.add_argument("--strict", action="store_true", default=True,
                      help="fail on labels with no map entry (default)")
    mode.add_argument("--drop-unmapped", action="store_true",
                      help="drop annotations with unmapped labels instead of failing")
    p.set_defaults(func=cmd_remap)

    p = sub.add_parser("split", help="split a dataset into night/day files")
    p.add_argument("--dataset", required=True)
    source = p.add_mutually_exclusive_group(required=True)
    source.add_argument("--manifest", help="CSV with header image,phase")
    source.add_argument("--night-substring",
                        help="tag images whose file name contains this as night")
    p.add_argument("--out-dir", help="output directory (default: beside the dataset)")
    p.set_defaults(func=cmd_split)

    p = sub.add_parser("eval", help="score detection files against a ground truth")
    p.add_argument("detections", nargs="+", help="detection JSON files (COCO results)")
    p.add_argument("--gt", required=True, help="ground-truth dataset JSON")
    p.add_argument("--iou-threshold", type=float, default=0.5)
    p.add_argument("--format", choices=("markdown", "csv"), default="markdown")
    p.add_argument("--out", help="write the table here plus <out>.report.json")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("serve", help="run the correspondence picker service")
    p.add_argument("--workspace", required=True)
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=8000, help="0 picks a free port")
    p.add_argument("--frontend", help="directory of built UI assets")
    p.set_defaults(func=cmd_serve)

    return parser


def cmd_register(args) -> int:
    pairs = pair_catalog_lenient(Path(args.pairs))
    corr_dir = Path(args.correspondences)
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)

    summary = []
    failed = 0
    for pair in pairs:
        path = corr_dir / f"{pair.pair_id}.json"
        entry: dict = {"pair_id": pair.pair_id}
        try:
            if not path.is_file():
                raise XspecError(f"missing correspondence file {path.name}")
            cs = correspondence_set_from_json(path.read_text())
            fit = fit_homography(cs.points)
            diag = residuals(fit, cs.points)
            (out_dir / f"{pair.pair_id}.json").write_text(
                homography_to_json(fit, pair.pair_id)
            )
            entry.update(
                status="ok",
                points=len(cs.points),
                rmse=diag.rmse,
                max_error=diag.max_error,
                per_point=list(diag.per_point),
            )
            print(f"{pair.pair_id}: rmse={diag.rmse:.6f} max={diag.max_error:.6f} "
                  f"({len(cs.points)} points)")
        except XspecError as exc:
            failed += 1
            entry.update(status="failed", error=f"{type(exc).__name__}: {exc}")
            print(f"{pair.pair_id}: FAILED {type(exc).__name__}: {exc}", file=sys.stderr)
        summary.append(entry)

    (out_dir / "summary.json").write_text(
        json.dumps({"pairs": summary, "failed": failed}, indent=2) + "\n"
    )
    return 1 if failed else 0


def pair_catalog_lenient(pairs_path: Path):
    from .transfer import load_image_pairs

    return load_image_pairs(pairs_path.read_text())


def cmd_transfer(args) -> int:
    source = parse_dataset(Path(args.dataset).read_text())
    pairs = pair_catalog(source, Path(args.pairs).read_text())
    hdir = Path(args.homographies)

    default = None
    if args.default_homography:
        _, default = homography_from_json(Path(args.default_homography).read_text())

    homographies = {}
    for pair in pairs:
        path = hdir / f"{pair.pair_id}.json"
        if path.is_file():
            _, homographies[pair.pair_id] = homography_from_json(path.read_text())
        elif default is not None:
            homographies[pair.pair_id] = default
        else:
            raise MissingHomography(f"no homography file for pair {pair.pair_id!r}: {path}")

    diagnostics = {}
    summary_path = hdir / "summary.json"
    if summary_path.is_file():
        for entry in json.loads(summary_path.read_text()).get("pairs", []):
            if entry.get("status") == "ok":
                diagnostics[entry["pair_id"]] = FitDiagnostics(
                    rmse=entry["rmse"],
                    max_error=entry["max_error"],
                    per_point=tuple(entry.get("per_point", ())),
                )

    policy = TransferPolicy(
        clip_to_frame=not args.no_clip,
        min_visible_fraction=args.min_visible_fraction,
        min_pixel_area=args.min_pixel_area,
    )
    out, report = transfer_dataset(source, pairs, homographies, policy, diagnostics or None)

    out_path = Path(args.out)
    out_path.write_text(write_dataset(out))
    report_path = Path(args.report) if args.report else out_path.with_suffix(".report.json")
    report_path.write_text(to_json(report))
    doc = report.to_json_dict()
    print(f"transferred {doc['totals']['kept']} of {doc['totals']['projected']} "
          f"annotations across {len(pairs)} pairs -> {out_path}")
    return 0


def resolve_map(spec: str):
    m = builtin_map(spec)
    if m is not None:
        return m
    path = Path(spec)
    if path.is_file():
        return category_map_from_json(path.read_text())
    names = ", ".join(m.name for m in builtin_maps())
    raise XspecError(f"no builtin map or file named {spec!r} (builtins: {names})")


def cmd_remap(args) -> int:
    d = parse_dataset(Path(args.dataset).read_text())
    m = resolve_map(args.map_spec)
    out, report = remap_labels(d, m, strict=not args.drop_unmapped)

    out_path = Path(args.out)
    out_path.write_text(write_dataset(out))
    report_path = Path(args.report) if args.report else out_path.with_suffix(".report.json")
    report_path.write_text(json.dumps(report.to_json_dict(), indent=2) + "\n")
    print(f"remapped with {m.name}: kept {report.kept_total}, dropped {report.dropped_total}")
    if report.empty_result:
        print("warning: every annotation was dropped", file=sys.stderr)
    return 0


def cmd_split(args) -> int:
    dataset_path = Path(args.dataset)
    d = parse_dataset(dataset_path.read_text())
    if args.manifest:
        manifest = split_manifest_from_csv(Path(args.manifest).read_text())
    else:
        manifest = manifest_from_substring(d, args.night_substring)
    night, day = split_by_manifest(d, manifest)

    out_dir = Path(args.out_dir) if args.out_dir else dataset_path.parent
    out_dir.mkdir(parents=True, exist_ok=True)
    night_path = out_dir / dataset_path.with_suffix(".night.json").name
    day_path = out_dir / dataset_path.with_suffix(".day.json").name
    night_path.write_text(write_dataset(night))
    day_path.write_text(write_dataset(day))
    print(f"night: {len(night.images)} images, {len(night.annotations)} annotations -> {night_path}")
    print(f"day: {len(day.images)} images, {len(day.annotations)} annotations -> {day_path}")
    return 0


def cmd_eval(args) -> int:
    gt_path = Path(args.gt)
    gt = parse_dataset(gt_path.read_text())
    test_tag = gt_path.name.removesuffix(".json")

    reports = []
    failed = 0
    for det_file in args.detections:
        det_path = Path(det_file)
        try:
            dets = detections_from_json(
                det_path.read_text(), source_tag=det_path.name.removesuffix(".json")
            )
            reports.append(evaluate(gt, dets, args.iou_threshold, test_tag=test_tag))
        except (OSError, XspecError) as exc:
            failed += 1
            print(f"{det_file}: {type(exc).__name__}: {exc}", file=sys.stderr)

    if reports:
        table = render_table(reports, format=args.format)
        print(table, end="")
        if args.out:
            out_path = Path(args.out)
            out_path.write_text(table)
            report_path = out_path.with_suffix(".report.json")
            report_path.write_text(
                json.dumps([r.to_json_dict() for r in reports], indent=2) + "\n"
            )
    return 1 if failed else 0


def cmd_serve(args) -> int:
    import uvicorn

    from .service import create_app, default_frontend_dir

    host, port = args.host, args.port
    probe = socket.socket(socket.AF_INET, socket.SOCK_STREAM)
    try:
        probe.bind((host, port))
        port = probe.getsockname()[1]
    except OSError as exc:
        raise XspecError(f"cannot bind {host}:{port}: {exc}") from exc
    finally:
        probe.close()

    frontend = Path(args.frontend) if args.frontend else default_frontend_dir()
    app = create_app(Path(args.workspace), frontend)
    print(f"serving on http://{host}:{port}", flush=True)
    uvicorn.run(app, host=host, port=port, log_level="warning")
    return 0


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except XspecError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except Exception:
        traceback.print_exc()
        return 2


def entrypoint() -> None:
    sys.exit(main())


if __name__ == "__main__":
    sys.exit(main())
