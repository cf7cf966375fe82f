"""Grasp quality metrics. Every metric is oriented so that higher is better."""
from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .contact import RingContactModel
from .geometry import Mesh, ray_intersect_many
from .robustness import PerturbationSpec, robust_wrench_resistance, wrench_resistance_metric
from .seal import CupModel, SealConfig, check_seal, ring_axes

logger = logging.getLogger(__name__)

ETA = 1e-12
METRIC_KINDS = ("planarity", "centroid", "planarity_centroid", "pc3d", "spring_stretch",
                "wrench_resistance", "robust_wrench_resistance")


def plane_fit_sse(points) -> float:
    """Sum of squared distances to the least-squares plane."""
    P = np.asarray(points, float)
    if len(P) < 3:
        raise ValueError("plane fit needs at least 3 points")
    s = np.linalg.svd(P - P.mean(axis=0), compute_uv=False)
    return float(s[-1] ** 2) if len(s) == 3 else 0.0


def disc_points_from_cloud(cloud: np.ndarray, p, v, radius: float) -> np.ndarray:
    """Cloud points within ``radius`` of the approach axis and of ``p`` along it."""
    d = np.asarray(cloud) - p
    axial = d @ v
    lateral = np.linalg.norm(d - axial[:, None] * v, axis=1)
    return cloud[(lateral <= radius) & (np.abs(axial) <= radius)]


def disc_points_from_mesh(mesh: Mesh, p, v, radius: float, grid: int = 9) -> np.ndarray:
    """First surface hits of rays along ``v`` through a grid over the cup disc."""
    p, v = np.asarray(p, float), np.asarray(v, float)
    e1, e2 = ring_axes(v)
    ticks = np.linspace(-radius, radius, grid)
    gx, gy = np.meshgrid(ticks, ticks)
    keep = gx ** 2 + gy ** 2 <= radius ** 2 + 1e-18
    offsets = gx[keep][:, None] * e1 + gy[keep][:, None] * e2
    standoff = 2.0 * mesh.extent + float(np.linalg.norm(p - mesh.center_of_mass))
    origins = p + offsets - standoff * v
    t, _ = ray_intersect_many(mesh, origins, v[None])
    hit = np.isfinite(t)
    return origins[hit] + t[hit, None] * v


def planarity_score(points) -> float:
    if len(points) < 3:
        return 0.0
    return 1.0 / (plane_fit_sse(points) + ETA)


def centroid_score(centroid, p) -> float:
    return 1.0 / (float(np.linalg.norm(np.asarray(p) - centroid)) + ETA)


def planarity_centroid_score(points, centroid, p, threshold_per_point: float = 1e-6) -> float:
    """Centroid score if the disc is planar enough (SSE <= threshold * N), else 0."""
    if len(points) < 3:
        return 0.0
    if plane_fit_sse(points) > threshold_per_point * len(points):
        return 0.0
    return centroid_score(centroid, p)


def spring_stretch_score(max_strain: float) -> float:
    """1 / (1 + stretch); seals that fail for a non-strain reason score 0."""
    return 0.0 if not np.isfinite(max_strain) else 1.0 / (1.0 + max_strain)


@dataclass
class Scene:
    """What a metric may look at: a point cloud and, for 3D metrics, the posed mesh."""
    cloud: np.ndarray | None = None
    mesh: Mesh | None = None
    centroid: np.ndarray | None = None
    down: tuple = (0.0, 0.0, -1.0)

    def __post_init__(self):
        if self.centroid is None:
            if self.mesh is not None:
                self.centroid = self.mesh.center_of_mass
            elif self.cloud is not None and len(self.cloud):
                self.centroid = np.asarray(self.cloud).mean(axis=0)


@dataclass
class QualityMetric:
    kind: str
    disc_radius: float = 0.0075
    planarity_threshold: float = 1e-6
    cup: CupModel = field(default_factory=CupModel)
    contact: RingContactModel = field(default_factory=RingContactModel)
    perturbation: PerturbationSpec = field(default_factory=PerturbationSpec)
    seal: SealConfig = field(default_factory=SealConfig)
    seed: int = 0

    def __post_init__(self):
        if self.kind not in METRIC_KINDS:
            raise ValueError(f"unknown metric {self.kind!r}; choose from {METRIC_KINDS}")

    @property
    def needs_mesh(self) -> bool:
        return self.kind in ("pc3d", "spring_stretch", "wrench_resistance",
                             "robust_wrench_resistance")

    def __call__(self, grasp, scene: Scene) -> float:
        p, v = (np.asarray(x, float) for x in grasp)
        v = v / np.linalg.norm(v)
        if self.needs_mesh and scene.mesh is None:
            raise ValueError(f"metric {self.kind} needs the object mesh")
        if self.kind == "planarity":
            return planarity_score(disc_points_from_cloud(scene.cloud, p, v, self.disc_radius))
        if self.kind == "centroid":
            return centroid_score(scene.centroid, p)
        if self.kind == "planarity_centroid":
            pts = disc_points_from_cloud(scene.cloud, p, v, self.disc_radius)
            return planarity_centroid_score(pts, scene.centroid, p, self.planarity_threshold)
        if self.kind == "pc3d":
            pts = disc_points_from_mesh(scene.mesh, p, v, self.disc_radius)
            return planarity_centroid_score(pts, scene.centroid, p, self.planarity_threshold)
        if self.kind == "spring_stretch":
            return spring_stretch_score(check_seal(self.cup, p, v, scene.mesh, self.seal).max_strain)
        if self.kind == "wrench_resistance":
            return float(wrench_resistance_metric(self.cup, self.contact, scene.mesh, (p, v),
                                                  self.perturbation.mass, self.seal, scene.down))
        res = robust_wrench_resistance(self.cup, self.contact, scene.mesh, (p, v),
                                       self.perturbation, self.seed, self.seal, scene.down,
                                       keep_records=False)
        return res.lam

    def batch(self, grasps, scene: Scene) -> np.ndarray:
        return np.array([self(g, scene) for g in grasps], float)

