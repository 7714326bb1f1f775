"""``semvps`` command line.

Exit status: 0 success, 1 unexpected failure, 2 usage error, 3 invalid input
(model, config, query or sample file), 4 database does not cover the search,
5 output already exists.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import shutil
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__
from .camera import CameraIntrinsics
from .city_model import ModelParseError, ModelValidationError, load_model, save_model
from .config import ConfigError, EngineConfig, config_preset, load_config
from .geodesy import GeoCoord, GridCoord, ProjectionRangeError, geo_to_grid, grid_to_geo
from .images import LabelImage, Pose, Rotation
from .labelio import load_label_image, pose_from_dict, pose_to_dict, save_label_image, write_color
from .matching import calibrate
from .projection import erp_to_view, render_erp, render_view
from .scenes import SCENE_CENTER, asymmetric_scene, street_scene, tiny_scene
from .search import (
    INDEX_NAME,
    CandidateDatabase,
    CoverageError,
    QueryRecord,
    build_database,
    emit_heatmap,
    localize,
    score_table_text,
)
from .sensitivity import StudyConfig, run_study, summarize, summary_text, trials_text

log = logging.getLogger("semvps")

EXIT_OK = 0
EXIT_FAILURE = 1
EXIT_USAGE = 2
EXIT_INPUT = 3
EXIT_COVERAGE = 4
EXIT_EXISTS = 5


class InputError(ValueError):
    pass


def _json_dump(path: Path, obj) -> None:
    path.write_text(json.dumps(obj, indent=1, sort_keys=True) + "\n")


def _engine_config(args) -> EngineConfig:
    cfg = load_config(args.config) if args.config else config_preset(args.preset)
    if args.config and args.preset != "standard":
        log.warning("--preset ignored because --config was given")
    return cfg


def _grid_from_args(args, datum, alt):
    if args.center_grid is not None:
        return GridCoord(args.center_grid[0], args.center_grid[1], alt)
    lat, lon = args.center_geo
    return geo_to_grid(GeoCoord(lat, lon, alt), datum)


def _load_model(path, cfg: EngineConfig):
    m = load_model(path)
    if cfg.datum is not None and cfg.datum != m.datum:
        raise InputError(f"configured datum {cfg.datum.name!r} differs from the model's datum {m.datum.name!r}")
    return m


# ---------------------------------------------------------------------------
# query records


def load_query(path, cfg: EngineConfig) -> QueryRecord:
    path = Path(path)
    try:
        rec = json.loads(path.read_text())
        img = load_label_image(path.parent / rec["image"])
        fix = rec["initial_fix"]
        rot = rec.get("initial_rotation", {})
        intr = CameraIntrinsics.from_dict(rec["intrinsics"]) if "intrinsics" in rec else cfg.intrinsics
        gt = pose_from_dict(rec["ground_truth"]) if rec.get("ground_truth") else None
        return QueryRecord(
            image=LabelImage(img.pixels),
            initial_fix=GeoCoord(float(fix["lat"]), float(fix["lon"]), float(fix.get("alt", 0.0))),
            initial_rotation=Rotation(float(rot.get("yaw", 0.0)), float(rot.get("pitch", 0.0)), float(rot.get("roll", 0.0))),
            intrinsics=intr,
            rectified=bool(rec.get("rectified", False)),
            ground_truth=gt,
        )
    except (KeyError, TypeError, json.JSONDecodeError) as exc:
        raise InputError(f"{path}: malformed query record ({exc!r})") from None


def write_query(path, image_name: str, fix: GeoCoord, rot: Rotation, intr: CameraIntrinsics, gt: Pose = None) -> None:
    rec = {
        "image": image_name,
        "initial_fix": {"lat": fix.lat, "lon": fix.lon, "alt": fix.alt},
        "initial_rotation": {"yaw": rot.yaw, "pitch": rot.pitch, "roll": rot.roll},
        "intrinsics": intr.to_dict(),
        "rectified": False,
    }
    if gt is not None:
        rec["ground_truth"] = pose_to_dict(gt)
    _json_dump(Path(path), rec)


# ---------------------------------------------------------------------------
# commands


def cmd_build_db(args) -> int:
    cfg = _engine_config(args)
    m = _load_model(args.model, cfg)
    out = Path(args.out)
    if (out / INDEX_NAME).exists():
        if not args.force:
            print(f"error: database already exists at {out}; pass --force to rebuild", file=sys.stderr)
            return EXIT_EXISTS
        shutil.rmtree(out / "erp", ignore_errors=True)
        (out / INDEX_NAME).unlink()
    center = _grid_from_args(args, m.datum, args.alt)
    radius = cfg.search.radius if args.radius is None else args.radius
    step = cfg.search.step if args.step is None else args.step
    r = cfg.renderer
    t0 = time.perf_counter()
    db = build_database(
        m, center, radius, step=step, face_size=r.face_size, erp_width=r.erp_width, erp_height=r.erp_height, threads=args.threads
    )
    size = db.save(out, force=True)
    dt = time.perf_counter() - t0
    print(f"positions: {len(db)} (inside buildings, skipped: {len(db.excluded)})")
    print(f"storage: {size} bytes")
    print(f"wall-clock: {dt:.2f} s")
    return EXIT_OK


def _result_record(res, q: QueryRecord) -> dict:
    rec = {
        "mode": res.mode,
        "pose": pose_to_dict(res.pose),
        "grid": {"easting": float(res.grid_position[0]), "northing": float(res.grid_position[1]), "alt": res.altitude},
        "likelihood": res.likelihood,
        "scores": {"dice": res.scores.dice, "jaccard": res.scores.jaccard, "bf": res.scores.bf},
        "segmentation_difference": res.segmentation_difference,
        "low_confidence": res.low_confidence,
        "tied_candidates": res.n_tied,
        "candidates": int(res.likelihoods.size),
    }
    if q.ground_truth is not None:
        pe, ye = res.errors_to(q.ground_truth)
        rec["error"] = {"position_m": pe, "yaw_deg": ye}
    return rec


def _print_result(rec: dict) -> None:
    p = rec["pose"]
    print(
        f"[{rec['mode']}] lat {p['lat']:.8f} lon {p['lon']:.8f} yaw {p['yaw']:.1f} pitch {p['pitch']:.1f} "
        f"roll {p['roll']:.1f} likelihood {rec['likelihood']:.6f}"
    )
    s = rec["scores"]
    flag = " LOW CONFIDENCE (fallback recommended)" if rec["low_confidence"] else ""
    print(f"  dice {s['dice']:.4f} jaccard {s['jaccard']:.4f} bf {s['bf']:.4f} seg-diff {rec['segmentation_difference']:.4f}{flag}")
    if "error" in rec:
        print(f"  error vs ground truth: {rec['error']['position_m']:.3f} m, {rec['error']['yaw_deg']:.2f} deg")


def cmd_localize(args) -> int:
    cfg = _engine_config(args)
    search = cfg.search
    over = {k: getattr(args, k) for k in ("radius", "yaw_span", "rotation_mode") if getattr(args, k) is not None}
    if over:
        search = type(search)(**{**search.to_dict(), **over})
    q = load_query(args.query, cfg)
    db = CandidateDatabase.load(args.db, verify=args.verify)
    kw = dict(bf_threshold=cfg.bf_threshold, bf_fixed_classes=cfg.bf_fixed_classes, threads=args.threads)
    t0 = time.perf_counter()
    res = localize(q, db, search, cfg.fusion, **kw)
    dt = time.perf_counter() - t0
    out = {"result": _result_record(res, q)}
    _print_result(out["result"])
    results = [("", res)]
    if args.baseline:
        base = localize(q, db, type(search)(**{**search.to_dict(), "baseline": True}), cfg.fusion, **kw)
        out["baseline"] = _result_record(base, q)
        _print_result(out["baseline"])
        results.append(("baseline_", base))
    print(f"query time: {dt:.2f} s over {res.likelihoods.size} candidates")
    if args.out:
        _json_dump(Path(args.out), out)
    if args.table:
        Path(args.table).write_text(score_table_text(res, args.top))
    if args.heatmap:
        for tag, r in results:
            for axis in ("position", "yaw"):
                emit_heatmap(r, axis).write(f"{args.heatmap}_{tag}{axis}.tsv")
    return EXIT_OK


def read_samples(path) -> np.ndarray:
    try:
        data = np.loadtxt(path, comments="#", ndmin=2, dtype=np.float64)
    except ValueError:
        # tolerate a header row
        data = np.loadtxt(path, comments="#", ndmin=2, dtype=np.float64, skiprows=1)
    if data.shape[1] < 3:
        raise InputError(f"{path}: expected columns dice, jaccard, bf")
    return data[:, -3:]


def cmd_calibrate(args) -> int:
    samples = read_samples(args.samples)
    try:
        params = calibrate(samples)
    except ValueError as exc:
        raise InputError(str(exc)) from None
    frag = {"fusion": params.to_dict()}
    text = json.dumps(frag, indent=1, sort_keys=True) + "\n"
    if args.out:
        Path(args.out).write_text(text)
    print(text, end="")
    return EXIT_OK


def cmd_sensitivity(args) -> int:
    cfg = _engine_config(args)
    db = CandidateDatabase.load(args.db)
    if args.query:
        q = load_query(args.query, cfg)
        if q.ground_truth is None:
            raise InputError(f"{args.query}: the sensitivity study needs a ground_truth pose")
        gt, intr = q.ground_truth, q.intrinsics
    else:
        e, n, yaw = args.gt_grid
        geo = grid_to_geo(GridCoord(e, n, db.altitude), db.datum)
        gt, intr = Pose(geo, Rotation(yaw, args.pitch, args.roll)), cfg.intrinsics
    study = cfg.study
    over = {}
    if args.trials is not None:
        over["n_trials"] = args.trials
    if args.magnitudes is not None:
        over["magnitudes"] = tuple(args.magnitudes)
    if args.seed is not None:
        over["seed"] = args.seed
    if over:
        study = StudyConfig.from_dict({**study.to_dict(), **over})
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    t0 = time.perf_counter()
    recs = run_study(
        db, gt, intr, study, cfg.fusion, bf_threshold=cfg.bf_threshold, bf_fixed_classes=cfg.bf_fixed_classes, threads=args.threads
    )
    bins = summarize(recs, study.bin_width)
    (out / "trials.tsv").write_text(trials_text(recs))
    (out / "summary.tsv").write_text(summary_text(bins))
    print(summary_text(bins), end="")
    print(f"{len(recs)} trials in {time.perf_counter() - t0:.1f} s")
    return EXIT_OK


def cmd_render(args) -> int:
    cfg = _engine_config(args)
    m = _load_model(args.model, cfg)
    if args.pose_grid is not None:
        e, n, alt, yaw, pitch, roll = args.pose_grid
        geo = grid_to_geo(GridCoord(e, n, alt), m.datum)
    else:
        lat, lon, alt, yaw, pitch, roll = args.pose_geo
        geo = GeoCoord(lat, lon, alt)
    pose = Pose(geo, Rotation(yaw, pitch, roll))
    intr = cfg.intrinsics
    if args.via_erp:
        r = cfg.renderer
        img = erp_to_view(render_erp(m, geo, r.face_size, r.erp_width, r.erp_height), pose.rotation, intr)
    else:
        img = render_view(m, pose, intr)
    out = Path(args.out)
    save_label_image(out, img, intr)
    if args.color:
        write_color(args.color, img.pixels)
    if args.query_record:
        g = geo_to_grid(geo, m.datum)
        de, dn = args.fix_offset
        fix = grid_to_geo(GridCoord(g.easting + de, g.northing + dn, g.alt), m.datum)
        rel = os.path.relpath(out.resolve(), Path(args.query_record).resolve().parent)
        write_query(args.query_record, rel, fix, pose.rotation, intr, gt=pose)
    print(f"wrote {out} ({intr.width}x{intr.height})")
    return EXIT_OK


_SCENES = {"asymmetric": asymmetric_scene, "tiny": tiny_scene, "street": street_scene}


def cmd_make_scene(args) -> int:
    m = _SCENES[args.kind](seed=0 if args.seed is None else args.seed)
    save_model(m, args.out)
    c = SCENE_CENTER
    print(f"wrote {args.out}: {len(m.buildings)} buildings around grid ({c.easting}, {c.northing})")
    return EXIT_OK


# ---------------------------------------------------------------------------
# parser


def _common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="engine configuration (JSON)")
    p.add_argument("--preset", default="standard", choices=["standard", "desk"], help="base configuration when --config is absent")
    p.add_argument("--threads", type=int, default=1, help="worker threads (default 1)")
    p.add_argument("--seed", type=int, default=None, help="master random seed")
    p.add_argument("-v", "--verbose", action="store_true")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="semvps", description="Material-segmentation visual positioning against a city model.")
    ap.add_argument("--version", action="version", version=f"semvps {__version__}")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("build-db", help="render the offline ERP database around a centre point")
    _common(p)
    p.add_argument("--model", required=True)
    p.add_argument("--out", required=True, help="database directory")
    g = p.add_mutually_exclusive_group(required=True)
    g.add_argument("--center-grid", nargs=2, type=float, metavar=("E", "N"))
    g.add_argument("--center-geo", nargs=2, type=float, metavar=("LAT", "LON"))
    p.add_argument("--alt", type=float, default=SCENE_CENTER.alt, help="camera altitude in metres")
    p.add_argument("--radius", type=float, default=None)
    p.add_argument("--step", type=float, default=None)
    p.add_argument("--force", action="store_true", help="overwrite an existing database")
    p.set_defaults(func=cmd_build_db)

    p = sub.add_parser("localize", help="estimate the pose of a segmented query image")
    _common(p)
    p.add_argument("--query", required=True, help="query record (JSON)")
    p.add_argument("--db", required=True)
    p.add_argument("--out", help="result record (JSON)")
    p.add_argument("--table", help="ranked candidate table (TSV)")
    p.add_argument("--top", type=int, default=None, help="limit the ranked table to the best N rows")
    p.add_argument("--heatmap", metavar="PREFIX", help="write PREFIX_position.tsv and PREFIX_yaw.tsv")
    p.add_argument("--baseline", action="store_true", help="also report the sky/non-sky baseline")
    p.add_argument("--radius", type=float, default=None)
    p.add_argument("--yaw-span", type=float, default=None)
    p.add_argument("--rotation-mode", choices=["imu", "grid"], default=None)
    p.add_argument("--verify", action="store_true", help="check database content hashes while loading")
    p.set_defaults(func=cmd_localize)

    p = sub.add_parser("calibrate", help="fit fusion Gaussians to a score sample")
    _common(p)
    p.add_argument("--samples", required=True, help="whitespace table with columns dice jaccard bf")
    p.add_argument("--out", help="write the fusion fragment here")
    p.set_defaults(func=cmd_calibrate)

    p = sub.add_parser("sensitivity", help="Monte-Carlo segmentation-error study")
    _common(p)
    p.add_argument("--db", required=True)
    g = p.add_mutually_exclusive_group(required=True)
    g.add_argument("--query", help="query record whose ground_truth is the study pose")
    g.add_argument("--gt-grid", nargs=3, type=float, metavar=("E", "N", "YAW"))
    p.add_argument("--pitch", type=float, default=0.0)
    p.add_argument("--roll", type=float, default=0.0)
    p.add_argument("--out-dir", required=True)
    p.add_argument("--trials", type=int, default=None)
    p.add_argument("--magnitudes", type=float, nargs="+", default=None)
    p.set_defaults(func=cmd_sensitivity)

    p = sub.add_parser("render", help="render a label image at a pose")
    _common(p)
    p.add_argument("--model", required=True)
    g = p.add_mutually_exclusive_group(required=True)
    g.add_argument("--pose-grid", nargs=6, type=float, metavar=("E", "N", "ALT", "YAW", "PITCH", "ROLL"))
    g.add_argument("--pose-geo", nargs=6, type=float, metavar=("LAT", "LON", "ALT", "YAW", "PITCH", "ROLL"))
    p.add_argument("--out", required=True, help="label image (PGM) plus JSON sidecar")
    p.add_argument("--color", help="palette-coloured copy")
    p.add_argument("--via-erp", action="store_true", help="go through cube map and ERP like the database does")
    p.add_argument("--query-record", help="also write a query record for this image")
    p.add_argument("--fix-offset", nargs=2, type=float, default=(0.0, 0.0), metavar=("DE", "DN"),
                   help="initial fix offset from the true position, metres")
    p.set_defaults(func=cmd_render)

    p = sub.add_parser("make-scene", help="write one of the built-in synthetic city models")
    p.add_argument("--kind", choices=sorted(_SCENES), default="asymmetric")
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("-v", "--verbose", action="store_true")
    p.set_defaults(func=cmd_make_scene)
    return ap


def main(argv=None) -> int:
    ap = build_parser()
    args = ap.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    if getattr(args, "threads", 1) < 1:
        ap.error("--threads must be at least 1")
    try:
        return args.func(args)
    except (ModelParseError, ModelValidationError, ConfigError, InputError, ProjectionRangeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except CoverageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_COVERAGE
    except FileExistsError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_EXISTS
    except (FileNotFoundError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except Exception as exc:  # noqa: BLE001
        log.debug("unexpected failure", exc_info=True)
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_FAILURE


if __name__ == "__main__":
    sys.exit(main())
