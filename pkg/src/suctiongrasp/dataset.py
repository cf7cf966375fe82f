"""Synthetic grasp dataset: robustness labels, rendered thumbnails, shards and manifest.

Work is split into (object, stable pose) tasks. Every random draw comes from
a generator seeded by the run seed and the indices of what it belongs to, so
the output does not depend on how tasks are scheduled across workers.
"""
from __future__ import annotations

import hashlib
import json
import logging
import multiprocessing as mp
from dataclasses import MISSING, asdict, dataclass, field, fields
from pathlib import Path

import numpy as np

from .cem import CandidateConstraints
from .contact import RingContactModel, SoftFingerContactModel
from .geometry import Mesh, RigidTransform, load_mesh, sample_surface, stable_poses
from .robustness import PerturbationSpec, binary_label, robust_wrench_resistance, sample_friction
from .seal import CupModel, SealConfig
from .sensor import (CameraIntrinsics, NoiseModel, camera_from_spherical, corrupt_depth,
                     extract_thumbnail, project_grasp, render_depth)

logger = logging.getLogger(__name__)

SCHEMA_VERSION = 1
REFERENCE_POSITIVE_FRACTION = 0.118
MESH_SUFFIXES = (".obj", ".stl")


@dataclass(frozen=True)
class StateDistribution:
    planar_half_extent: float = 0.1
    camera_radius: tuple = (0.5, 0.7)
    camera_polar: tuple = (0.01 * np.pi, 0.1 * np.pi)

    @classmethod
    def preset(cls, name: str) -> "StateDistribution":
        if name == "main":
            return cls()
        if name == "supplement":
            return cls(camera_radius=(0.65, 0.75), camera_polar=(0.05 * np.pi, 0.1 * np.pi))
        raise ValueError(f"unknown state preset {name!r}")


@dataclass(frozen=True)
class DatasetConfig:
    grasps_per_object: int = 250
    images_per_pose: int = 10
    max_stable_poses: int = 5
    thumbnail_side: int = 32
    visibility_tolerance: float = 0.005
    shard_size: int = 1024
    audit_fraction: float = 0.01
    seed: int = 0
    cup: CupModel = field(default_factory=CupModel)
    seal: SealConfig = field(default_factory=SealConfig)
    contact: RingContactModel = field(default_factory=RingContactModel)
    perturbation: PerturbationSpec = field(default_factory=PerturbationSpec)
    state: StateDistribution = field(default_factory=StateDistribution)
    camera: CameraIntrinsics = field(default_factory=CameraIntrinsics)
    noise: NoiseModel = field(default_factory=NoiseModel)
    constraints: CandidateConstraints = field(default_factory=CandidateConstraints)


def config_to_dict(cfg) -> dict:
    return json.loads(json.dumps(asdict(cfg)))


def config_from_dict(d: dict, cls=DatasetConfig):
    kwargs = {}
    for f in fields(cls):
        if f.name not in d:
            continue
        value = d[f.name]
        if isinstance(value, dict) and f.default_factory is not MISSING:
            sub = type(f.default_factory())
            if f.name == "contact" and "gamma" in value:
                sub = SoftFingerContactModel
            value = config_from_dict(value, sub)
        elif isinstance(value, list):
            value = tuple(value)
        kwargs[f.name] = value
    return cls(**kwargs)


def derive_rng(*key: int) -> np.random.Generator:
    return np.random.default_rng([int(k) for k in key])


def derive_seed(*key: int) -> int:
    return int(np.random.SeedSequence([int(k) for k in key]).generate_state(1)[0])


# stream tags keep generators for different purposes independent
_GRASPS, _LAMBDA, _IMAGE, _AUDIT = 1, 2, 3, 4


@dataclass
class StateSample:
    object_id: int
    friction: float
    stable_pose: int
    planar: tuple          # (x, y, theta)
    camera: tuple          # (radius, azimuth, polar)

    def planar_transform(self) -> RigidTransform:
        x, y, th = self.planar
        c, s = np.cos(th), np.sin(th)
        return RigidTransform(np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]]),
                              np.array([x, y, 0.0]))

    def camera_pose(self) -> RigidTransform:
        return camera_from_spherical(*self.camera)


def sample_camera(dist: StateDistribution, rng: np.random.Generator, size=None):
    r = rng.uniform(*dist.camera_radius, size)
    az = rng.uniform(0.0, 2 * np.pi, size)
    polar = rng.uniform(*dist.camera_polar, size)
    return r, az, polar


def sample_state(num_poses_per_object, perturbation: PerturbationSpec, dist: StateDistribution,
                 rng: np.random.Generator, object_id: int | None = None,
                 stable_pose: int | None = None) -> StateSample:
    """Draw (friction, object, stable pose, planar pose, camera) in that order.

    ``object_id`` and ``stable_pose`` may be fixed, which is how the pipeline
    renders a fixed number of images per stable pose.
    """
    mu = float(sample_friction(perturbation, rng))
    obj = int(rng.integers(len(num_poses_per_object))) if object_id is None else object_id
    pose = int(rng.integers(num_poses_per_object[obj])) if stable_pose is None else stable_pose
    h = dist.planar_half_extent
    planar = (float(rng.uniform(-h, h)), float(rng.uniform(-h, h)),
              float(rng.uniform(0.0, 2 * np.pi)))
    r, az, polar = sample_camera(dist, rng)
    return StateSample(obj, mu, pose, planar, (float(r), float(az), float(polar)))


@dataclass
class ObjectGrasps:
    points: np.ndarray            # (k, 3) object frame
    approaches: np.ndarray        # (k, 3) object frame, inward
    lam: np.ndarray               # (poses, k); NaN where the approach is outside the cone
    labels: np.ndarray            # (poses, k) int8; -1 where not evaluated


def object_grasp_candidates(mesh: Mesh, count: int, seed: int, object_id: int):
    rng = derive_rng(seed, _GRASPS, object_id)
    pts, normals, _ = sample_surface(mesh, count, rng)
    return pts, normals


def grasp_lambda_seed(seed: int, object_id: int, pose: int, grasp: int) -> int:
    return derive_seed(seed, _LAMBDA, object_id, pose, grasp)


def evaluate_grasp(posed: Mesh, pose_T: RigidTransform, p, v, cfg: DatasetConfig,
                   seed: int, object_id: int, pose: int, grasp: int) -> float:
    """Robustness of an object-frame grasp on the posed mesh, or NaN outside the cone."""
    pw = pose_T.apply(np.asarray(p)[None])[0]
    vw = pose_T.rotation @ v
    if not cfg.constraints.approach_ok(vw)[0]:
        return float("nan")
    res = robust_wrench_resistance(cfg.cup, cfg.contact, posed, (pw, vw), cfg.perturbation,
                                   grasp_lambda_seed(seed, object_id, pose, grasp), cfg.seal,
                                   keep_records=False)
    return res.lam


def precompute_object_grasps(mesh: Mesh, cfg: DatasetConfig, object_id: int,
                             poses: list | None = None) -> ObjectGrasps:
    """Candidate grasps for one object and their robustness in each stable pose."""
    poses = poses if poses is not None else stable_poses(mesh)[:cfg.max_stable_poses]
    pts, normals = object_grasp_candidates(mesh, cfg.grasps_per_object, cfg.seed, object_id)
    lam = np.full((len(poses), len(pts)), np.nan)
    for s, sp in enumerate(poses):
        posed = mesh.transform(sp.transform)
        for g in range(len(pts)):
            lam[s, g] = evaluate_grasp(posed, sp.transform, pts[g], normals[g], cfg, cfg.seed,
                                       object_id, s, g)
    labels = np.where(np.isnan(lam), -1,
                      (lam >= cfg.perturbation.threshold).astype(np.int8)).astype(np.int8)
    return ObjectGrasps(pts, normals, lam, labels)


def tuple_dtype(side: int) -> np.dtype:
    return np.dtype([
        ("thumbnail", "<f4", (side, side)),
        ("gripper_depth", "<f4"),
        ("approach_angle", "<f4"),
        ("rotation", "<f4"),
        ("pixel", "<f4", (2,)),
        ("lam", "<f4"),
        ("label", "u1"),
        ("object", "<i4"),
        ("pose", "<i4"),
        ("grasp", "<i4"),
        ("image", "<i4"),
    ])


def _pose_task(args):
    """All tuples for one (object, stable pose): labels, then images."""
    obj_id, mesh_path, pose_index, cfg_dict, seed = args
    cfg = config_from_dict(cfg_dict)
    mesh = load_mesh(mesh_path)
    poses = stable_poses(mesh)[:cfg.max_stable_poses]
    sp = poses[pose_index]
    posed = mesh.transform(sp.transform)
    pts, normals = object_grasp_candidates(mesh, cfg.grasps_per_object, seed, obj_id)
    lam = np.array([evaluate_grasp(posed, sp.transform, pts[g], normals[g], cfg, seed, obj_id,
                                   pose_index, g) for g in range(len(pts))])
    evaluated = np.nonzero(~np.isnan(lam))[0]
    P = sp.transform.apply(pts)
    V = normals @ sp.transform.rotation.T
    dtype = tuple_dtype(cfg.thumbnail_side)
    rows = []
    num_poses = [len(poses)]
    for i in range(cfg.images_per_pose):
        rng = derive_rng(seed, _IMAGE, obj_id, pose_index, i)
        state = sample_state(num_poses, cfg.perturbation, cfg.state, rng, 0, pose_index)
        T = state.planar_transform()
        cam = state.camera_pose()
        clean = render_depth(posed, T, cam, cfg.camera)
        noisy = corrupt_depth(clean, rng, cfg.noise)
        eye = cam.translation
        for g in evaluated:
            pw = T.apply(P[g][None])[0]
            vw = T.rotation @ V[g]
            if vw @ (pw - eye) <= 0:
                continue
            try:
                proj = project_grasp((pw, vw), cam, cfg.camera)
            except ValueError:
                continue
            col, row = int(round(proj.u)), int(round(proj.v))
            if not (0 <= col < cfg.camera.width and 0 <= row < cfg.camera.height):
                continue
            if abs(clean.data[row, col] - proj.depth) > cfg.visibility_tolerance:
                continue
            thumb = extract_thumbnail(noisy, proj, cfg.thumbnail_side)
            rec = np.zeros((), dtype)
            rec["thumbnail"] = thumb.crop
            rec["gripper_depth"] = proj.depth
            rec["approach_angle"] = proj.table_angle
            rec["rotation"] = proj.angle
            rec["pixel"] = (proj.u, proj.v)
            rec["lam"] = lam[g]
            rec["label"] = binary_label(lam[g], cfg.perturbation.threshold)
            rec["object"], rec["pose"], rec["grasp"], rec["image"] = obj_id, pose_index, g, i
            rows.append(rec)
    out = np.array(rows, dtype) if rows else np.zeros(0, dtype)
    logger.info("object %d pose %d: %d evaluated grasps, %d tuples", obj_id, pose_index,
                len(evaluated), len(out))
    return out


def sha256_file(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def list_objects(objects) -> list[Path]:
    if isinstance(objects, (str, Path)):
        d = Path(objects)
        paths = sorted(p for p in d.iterdir() if p.suffix.lower() in MESH_SUFFIXES)
    else:
        paths = [Path(p) for p in objects]
    if not paths:
        raise ValueError("no object meshes given")
    return paths


class _ShardWriter:
    def __init__(self, out_dir: Path, dtype: np.dtype, shard_size: int):
        self.out_dir, self.dtype, self.shard_size = out_dir, dtype, shard_size
        self.buffer: list[np.ndarray] = []
        self.buffered = 0
        self.shards: list[dict] = []
        self.positives = 0
        self.total = 0

    def add(self, records: np.ndarray):
        self.buffer.append(records)
        self.buffered += len(records)
        self.positives += int(records["label"].sum()) if len(records) else 0
        self.total += len(records)
        while self.buffered >= self.shard_size:
            self._flush(self.shard_size)

    def _flush(self, n: int):
        data = np.concatenate(self.buffer) if self.buffer else np.zeros(0, self.dtype)
        chunk, rest = data[:n], data[n:]
        name = f"shard_{len(self.shards):05d}.bin"
        path = self.out_dir / name
        chunk.tofile(path)
        self.shards.append({"file": name, "count": int(len(chunk)), "sha256": sha256_file(path)})
        self.buffer = [rest] if len(rest) else []
        self.buffered = len(rest)

    def close(self):
        if self.buffered:
            self._flush(self.buffered)


def generate_dataset(objects, cfg: DatasetConfig, out_dir, workers: int = 1) -> dict:
    """Render, label and shard a dataset; returns the manifest that was written."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    paths = list_objects(objects)
    cfg_dict = config_to_dict(cfg)
    obj_info, tasks = [], []
    for obj_id, path in enumerate(paths):
        mesh = load_mesh(path)
        poses = stable_poses(mesh)[:cfg.max_stable_poses]
        obj_info.append({"name": path.stem, "path": str(path.resolve()),
                         "sha256": sha256_file(path), "stable_poses": len(poses),
                         "pose_probabilities": [float(p.probability) for p in poses],
                         "grasps": cfg.grasps_per_object})
        tasks += [(obj_id, str(path), s, cfg_dict, cfg.seed) for s in range(len(poses))]
    dtype = tuple_dtype(cfg.thumbnail_side)
    writer = _ShardWriter(out_dir, dtype, cfg.shard_size)
    try:
        if workers > 1:
            with mp.get_context("spawn").Pool(workers) as pool:
                for records in pool.imap(_pose_task, tasks):
                    writer.add(records)
        else:
            for t in tasks:
                writer.add(_pose_task(t))
        writer.close()
    except Exception:
        for s in writer.shards:
            (out_dir / s["file"]).unlink(missing_ok=True)
        raise
    manifest = {
        "schema_version": SCHEMA_VERSION,
        "seed": cfg.seed,
        "config": cfg_dict,
        "record_dtype": str(dtype.descr),
        "objects": obj_info,
        "shards": writer.shards,
        "tuple_count": writer.total,
        "positive_fraction": writer.positives / writer.total if writer.total else 0.0,
        "reference_positive_fraction": REFERENCE_POSITIVE_FRACTION,
    }
    (out_dir / "manifest.json").write_text(json.dumps(manifest, indent=2))
    logger.info("wrote %d tuples in %d shards; positive fraction %.3f (reference %.3f)",
                writer.total, len(writer.shards), manifest["positive_fraction"],
                REFERENCE_POSITIVE_FRACTION)
    return manifest


def load_manifest(path) -> dict:
    path = Path(path)
    if path.is_dir():
        path = path / "manifest.json"
    return json.loads(path.read_text())


def read_tuples(out_dir) -> np.ndarray:
    out_dir = Path(out_dir)
    m = load_manifest(out_dir)
    dtype = tuple_dtype(m["config"]["thumbnail_side"])
    parts = [np.fromfile(out_dir / s["file"], dtype=dtype) for s in m["shards"]]
    return np.concatenate(parts) if parts else np.zeros(0, dtype)


def verify_checksums(out_dir) -> list[str]:
    """Names of shards whose checksum or record count does not match the manifest."""
    out_dir = Path(out_dir)
    m = load_manifest(out_dir)
    size = tuple_dtype(m["config"]["thumbnail_side"]).itemsize
    bad = []
    for s in m["shards"]:
        path = out_dir / s["file"]
        if (not path.exists() or sha256_file(path) != s["sha256"]
                or path.stat().st_size != s["count"] * size):
            bad.append(s["file"])
    return bad


def regenerate(manifest_path, out_dir, workers: int = 1) -> dict:
    m = load_manifest(manifest_path)
    cfg = config_from_dict(m["config"])
    return generate_dataset([o["path"] for o in m["objects"]], cfg, out_dir, workers)


def audit_labels(out_dir, fraction: float | None = None) -> dict:
    """Recompute robustness labels for a seeded random subset of tuples."""
    out_dir = Path(out_dir)
    m = load_manifest(out_dir)
    cfg = config_from_dict(m["config"])
    data = read_tuples(out_dir)
    fraction = cfg.audit_fraction if fraction is None else fraction
    n = min(len(data), max(1, int(round(fraction * len(data))))) if len(data) else 0
    rng = derive_rng(cfg.seed, _AUDIT)
    idx = np.sort(rng.choice(len(data), size=n, replace=False)) if n else np.zeros(0, int)
    cache: dict = {}
    mismatches = []
    for k in idx:
        rec = data[k]
        o, s, g = int(rec["object"]), int(rec["pose"]), int(rec["grasp"])
        if o not in cache:
            mesh = load_mesh(m["objects"][o]["path"])
            pts, normals = object_grasp_candidates(mesh, cfg.grasps_per_object, cfg.seed, o)
            cache[o] = (mesh, stable_poses(mesh)[:cfg.max_stable_poses], pts, normals)
        mesh, poses, pts, normals = cache[o]
        sp = poses[s]
        lam = evaluate_grasp(mesh.transform(sp.transform), sp.transform, pts[g], normals[g], cfg,
                             cfg.seed, o, s, g)
        label = binary_label(lam, cfg.perturbation.threshold)
        if label != int(rec["label"]) or np.float32(lam) != rec["lam"]:
            mismatches.append(int(k))
    return {"audited": int(n), "mismatches": mismatches}


def dataset_stats(out_dir) -> dict:
    m = load_manifest(out_dir)
    data = read_tuples(out_dir)
    per_object = {}
    for o, info in enumerate(m["objects"]):
        sel = data["object"] == o
        per_object[info["name"]] = {"tuples": int(sel.sum()),
                                    "positive": int(data["label"][sel].sum())}
    total = len(data)
    return {"tuples": total, "shards": len(m["shards"]),
            "positive_fraction": float(data["label"].mean()) if total else 0.0,
            "reference_positive_fraction": REFERENCE_POSITIVE_FRACTION,
            "objects": per_object}

