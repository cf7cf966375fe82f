"""Command-line front end: analyze, plan, render, dataset and plotdata.

Exit codes: 0 success, 1 runtime failure, 2 usage or configuration error.
"""
from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import dataset as ds
from .cem import CandidateSet, cem_plan, point_cloud, sample_candidates_from_depth, segment
from .config import ConfigError, RunConfig, load_config
from .contact import gravity_wrench, resist_at_contact
from .evaluation import average_precision, pr_series, write_series
from .geometry import MeshError, RigidTransform, load_mesh, sample_surface, save_obj, stable_poses
from .metrics import METRIC_KINDS, QualityMetric, Scene
from .robustness import binary_label, export_records, robust_wrench_resistance
from .seal import check_seal
from .sensor import (CameraIntrinsics, DepthImage, camera_from_spherical, corrupt_depth,
                     project_grasp, render_depth)

logger = logging.getLogger("suctiongrasp")


class UsageError(Exception):
    pass


def _config(args) -> RunConfig:
    cfg = load_config(args.config) if getattr(args, "config", None) else RunConfig()
    if getattr(args, "seed", None) is not None:
        from dataclasses import replace
        cfg = replace(cfg, seed=args.seed)
    if getattr(args, "log_level", None) is None:
        logging.getLogger().setLevel(getattr(logging, cfg.log_level.upper(), logging.INFO))
    return cfg


def _fmt(x, nd=4):
    return " ".join(f"{v:.{nd}f}" for v in np.atleast_1d(x))


# ---------------------------------------------------------------- analyze

def analyze_grasp(cfg: RunConfig, mesh, p, v, with_lambda: bool = True) -> dict:
    seal = check_seal(cfg.cup, p, v, mesh, cfg.seal)
    row = {"p": [float(x) for x in p], "v": [float(x) for x in v], "seal": seal.feasible,
           "failure_reason": seal.failure_reason,
           "max_strain": float(seal.max_strain) if np.isfinite(seal.max_strain) else None}
    if seal.feasible:
        w = gravity_wrench(cfg.perturbation.mass, mesh.center_of_mass, p, (0.0, 0.0, -1.0))
        res = resist_at_contact(cfg.contact, p, v, w)
        row.update(residual=float(res.residual), resists=bool(res.resists))
    else:
        row.update(residual=None, resists=False)
    if with_lambda:
        rob = robust_wrench_resistance(cfg.cup, cfg.contact, mesh, (p, v), cfg.perturbation,
                                       cfg.seed, cfg.seal)
        row.update(lam=rob.lam, label=binary_label(rob, cfg.perturbation.threshold))
        row["_result"] = rob
    return row


def cmd_analyze(args) -> int:
    cfg = _config(args)
    mesh = load_mesh(args.mesh, scale=args.scale, mass=cfg.perturbation.mass)
    if args.grasp is not None:
        p = np.array(args.grasp[:3])
        v = np.array(args.grasp[3:])
        if np.linalg.norm(v) == 0:
            raise UsageError("approach direction must be nonzero")
        grasps = [(p, v / np.linalg.norm(v))]
    elif args.sample:
        pts, normals, _ = sample_surface(mesh, args.sample, np.random.default_rng(cfg.seed))
        grasps = list(zip(pts, normals))
    else:
        raise UsageError("give --grasp PX PY PZ VX VY VZ or --sample N")
    rows = []
    for p, v in grasps:
        row = analyze_grasp(cfg, mesh, p, v, with_lambda=not args.no_robustness)
        if args.metric:
            row["score"] = QualityMetric(args.metric, disc_radius=cfg.cup.radius, cup=cfg.cup,
                                         contact=cfg.contact, perturbation=cfg.perturbation,
                                         seal=cfg.seal, seed=cfg.seed)((p, v), Scene(mesh=mesh))
        rows.append(row)
    if args.metric:
        rows.sort(key=lambda r: -r["score"])
    header = f"{'#':>3} {'p (m)':>26} {'v':>23} {'seal':>16} {'strain':>7} {'resid':>9} {'wr':>3}"
    header += f" {'lambda':>6} {'lbl':>3}" if not args.no_robustness else ""
    header += f" {'score':>10}" if args.metric else ""
    print(header)
    for i, r in enumerate(rows):
        strain = f"{r['max_strain']:.4f}" if r["max_strain"] is not None else "-"
        resid = f"{r['residual']:.2e}" if r["residual"] is not None else "-"
        line = (f"{i:>3} {_fmt(r['p']):>26} {_fmt(r['v'], 3):>23} "
                f"{'ok' if r['seal'] else r['failure_reason']:>16} {strain:>7} {resid:>9} "
                f"{int(r['resists']):>3}")
        if not args.no_robustness:
            line += f" {r['lam']:>6.3f} {r['label']:>3}"
        if args.metric:
            line += f" {r['score']:>10.4g}"
        print(line)
    if args.records and rows and "_result" in rows[0]:
        export_records(rows[0]["_result"], args.records)
    if args.json:
        clean = [{k: v for k, v in r.items() if not k.startswith("_")} for r in rows]
        Path(args.json).write_text(json.dumps(clean, indent=2))
    return 0


# ---------------------------------------------------------------- render / plan

def save_camera(path, pose: RigidTransform, intr: CameraIntrinsics) -> None:
    Path(path).write_text(json.dumps({
        "intrinsics": ds.config_to_dict(intr),
        "rotation": pose.rotation.tolist(), "translation": pose.translation.tolist()}, indent=2))


def load_camera(path):
    d = json.loads(Path(path).read_text())
    return RigidTransform(np.array(d["rotation"]), np.array(d["translation"])), \
        CameraIntrinsics(**d["intrinsics"])


def cmd_render(args) -> int:
    cfg = _config(args)
    mesh = load_mesh(args.mesh, scale=args.scale, mass=cfg.perturbation.mass)
    poses = stable_poses(mesh)
    if not 0 <= args.stable_pose < len(poses):
        raise UsageError(f"--stable-pose must be in [0, {len(poses) - 1}]")
    mesh = mesh.transform(poses[args.stable_pose].transform)
    rng = np.random.default_rng(cfg.seed)
    if args.radius is None:
        r, az, polar = (float(x) for x in ds.sample_camera(cfg.dataset.state, rng))
    else:
        r, az, polar = args.radius, args.azimuth, args.polar
    cam = camera_from_spherical(r, az, polar)
    img = render_depth(mesh, None, cam, cfg.camera)
    if args.noise:
        img = corrupt_depth(img, rng, cfg.noise)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    img.save(out.with_suffix(".depth"))
    img.save_png(out.with_suffix(".png"))
    save_camera(out.with_suffix(".camera.json"), cam, cfg.camera)
    save_obj(mesh, out.with_suffix(".obj"))
    print(f"wrote {out.with_suffix('.depth')}, {out.with_suffix('.png')} and the posed mesh "
          f"(camera r={r:.3f} azimuth={az:.3f} polar={polar:.3f})")
    return 0


def cmd_plan(args) -> int:
    cfg = _config(args)
    img = DepthImage.load(args.depth)
    cam, intr = load_camera(args.camera)
    rng = np.random.default_rng(cfg.seed)
    cands = sample_candidates_from_depth(img, cam, cfg.cem.num_candidates, rng, intr,
                                         cfg.constraints, cfg.cem.normal_window)
    if len(cands) == 0:
        raise RuntimeError("no grasp candidates satisfy the constraints")
    pts = point_cloud(img, cam, intr)
    cloud = pts[segment(pts, cfg.constraints)]
    mesh = load_mesh(args.mesh, mass=cfg.perturbation.mass) if args.mesh else None
    metric = QualityMetric(args.metric, disc_radius=cfg.cup.radius, cup=cfg.cup,
                           contact=cfg.contact, perturbation=cfg.perturbation, seal=cfg.seal,
                           seed=cfg.seed)
    if metric.needs_mesh and mesh is None:
        raise UsageError(f"metric {args.metric} needs --mesh")
    scene = Scene(cloud=cloud, mesh=mesh)
    result = cem_plan(CandidateSet(cands.points, cands.approaches), lambda G: metric.batch(G, scene),
                      rng, surface=cloud, iterations=args.cem_iters or cfg.cem.iterations,
                      elite_fraction=cfg.cem.elite_fraction,
                      gmm_components=cfg.cem.gmm_components, constraints=cfg.constraints)
    p, v = result.grasp
    proj = project_grasp((p, v), cam, intr)
    record = {"p": p.tolist(), "v": v.tolist(), "quality": result.quality,
              "pixel": [proj.u, proj.v], "metric": args.metric, "history": result.history}
    text = json.dumps(record, indent=2)
    if args.out:
        Path(args.out).write_text(text)
    print(text)
    return 0


# ---------------------------------------------------------------- dataset

def cmd_dataset_generate(args) -> int:
    cfg = _config(args)
    dcfg = cfg.dataset_config()
    m = ds.generate_dataset(args.objects, dcfg, args.out, workers=args.workers)
    print(f"{m['tuple_count']} tuples in {len(m['shards'])} shards; positive fraction "
          f"{m['positive_fraction']:.3f} (reference {m['reference_positive_fraction']:.3f})")
    return 0


def cmd_dataset_verify(args) -> int:
    bad = ds.verify_checksums(args.out)
    audit = ds.audit_labels(args.out, args.audit_fraction)
    print(f"checksums: {'ok' if not bad else 'FAILED ' + ', '.join(bad)}")
    print(f"label audit: {audit['audited']} tuples, {len(audit['mismatches'])} mismatches")
    return 0 if not bad and not audit["mismatches"] else 1


def cmd_dataset_stats(args) -> int:
    st = ds.dataset_stats(args.out)
    print(f"tuples {st['tuples']}  shards {st['shards']}  positive fraction "
          f"{st['positive_fraction']:.3f} (reference {st['reference_positive_fraction']:.3f})")
    for name, o in st["objects"].items():
        print(f"  {name:<20} {o['tuples']:>7} tuples {o['positive']:>6} positive")
    return 0


# ---------------------------------------------------------------- plotdata

def _read_scores(path: Path):
    """Scores and labels from a dataset directory or a CSV.

    A CSV needs a ``label`` column plus a ``score`` column (any metric) or a
    ``lam`` column; ``score`` wins when both are present.
    """
    if path.is_dir():
        data = ds.read_tuples(path)
        return data["lam"].astype(float), data["label"].astype(int)
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        fields = set(reader.fieldnames or ())
        col = "score" if "score" in fields else "lam"
        if "label" not in fields or col not in fields:
            raise UsageError("CSV input needs a 'label' column and a 'score' or 'lam' column")
        try:
            rows = [(float(r[col]), int(r["label"])) for r in reader]
        except ValueError as exc:
            raise UsageError(f"bad CSV value: {exc}") from None
    if not rows:
        raise UsageError("input has no rows")
    lam, label = zip(*rows)
    return np.array(lam), np.array(label)


def cmd_plotdata(args) -> int:
    lam, label = _read_scores(Path(args.input))
    if len(lam) == 0:
        raise UsageError("input has no rows")
    rows = pr_series(lam, label)
    if args.out:
        write_series(rows, args.out)
    else:
        w = csv.writer(sys.stdout)
        w.writerow(("tau", "precision", "recall", "attempt_rate", "success_rate"))
        for r in rows:
            w.writerow([f"{x:.10g}" for x in r])
    print(f"AP {average_precision(lam, label):.6f}", file=sys.stderr)
    return 0


# ---------------------------------------------------------------- parser

def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="TOML run configuration")
    common.add_argument("--seed", type=int, help="overrides the configured seed")
    common.add_argument("--log-level", default=None, help="DEBUG, INFO, WARNING or ERROR")

    parser = argparse.ArgumentParser(prog="suctiongrasp",
                                     description="Suction grasp analysis and dataset tools.")
    sub = parser.add_subparsers(dest="command", required=True)

    a = sub.add_parser("analyze", parents=[common], help="seal, wrench resistance and robustness")
    a.add_argument("mesh")
    a.add_argument("--grasp", type=float, nargs=6, metavar=("PX", "PY", "PZ", "VX", "VY", "VZ"))
    a.add_argument("--sample", type=int, help="analyze N surface-sampled grasps")
    a.add_argument("--metric", choices=METRIC_KINDS, help="rank grasps by this metric")
    a.add_argument("--scale", type=float, default=1.0, help="mesh unit scale to meters")
    a.add_argument("--no-robustness", action="store_true", help="skip the Monte-Carlo estimate")
    a.add_argument("--json", help="write the report as JSON")
    a.add_argument("--records", help="write per-trial records of the first grasp as CSV")
    a.set_defaults(func=cmd_analyze)

    r = sub.add_parser("render", parents=[common], help="render a depth image of a mesh on a table")
    r.add_argument("mesh")
    r.add_argument("--out", required=True, help="output path prefix")
    r.add_argument("--scale", type=float, default=1.0)
    r.add_argument("--radius", type=float, help="camera distance; random when omitted")
    r.add_argument("--azimuth", type=float, default=0.0)
    r.add_argument("--polar", type=float, default=0.0)
    r.add_argument("--noise", action="store_true", help="apply the depth noise model")
    r.add_argument("--stable-pose", type=int, default=0,
                   help="index of the resting pose, most probable first")
    r.set_defaults(func=cmd_render)

    p = sub.add_parser("plan", parents=[common], help="plan a grasp on a depth image with CEM")
    p.add_argument("--depth", required=True, help="depth file written by render")
    p.add_argument("--camera", required=True, help="camera JSON written by render")
    p.add_argument("--mesh", help="object mesh in world coordinates (3D metrics)")
    p.add_argument("--metric", default="planarity_centroid", choices=METRIC_KINDS)
    p.add_argument("--cem-iters", type=int)
    p.add_argument("--out", help="write the chosen grasp as JSON")
    p.set_defaults(func=cmd_plan)

    d = sub.add_parser("dataset", help="generate, verify or summarize datasets")
    dsub = d.add_subparsers(dest="dataset_command", required=True)
    g = dsub.add_parser("generate", parents=[common], help="generate a dataset")
    g.add_argument("--objects", required=True, help="directory of OBJ/STL meshes")
    g.add_argument("--out", required=True)
    g.add_argument("--workers", type=int, default=1)
    g.set_defaults(func=cmd_dataset_generate)
    v = dsub.add_parser("verify", parents=[common], help="check shard checksums and audit labels")
    v.add_argument("--out", required=True)
    v.add_argument("--audit-fraction", type=float, default=None)
    v.set_defaults(func=cmd_dataset_verify)
    s = dsub.add_parser("stats", parents=[common], help="print counts and positive fraction")
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_dataset_stats)

    q = sub.add_parser("plotdata", parents=[common],
                       help="precision, recall, attempt and success rate series")
    q.add_argument("input", help="dataset directory, or CSV with label and score (or lam) columns")
    q.add_argument("--out", help="CSV output (stdout by default)")
    q.set_defaults(func=cmd_plotdata)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code) if exc.code is not None else 0
    level = args.log_level or "WARNING"
    logging.basicConfig(level=getattr(logging, level.upper(), logging.WARNING),
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return int(args.func(args) or 0)
    except (ConfigError, UsageError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (MeshError, OSError, ValueError, RuntimeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
