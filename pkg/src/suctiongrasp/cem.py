"""Grasp candidates from depth images and the cross-entropy method planner."""
from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np
from scipy import ndimage
from scipy.spatial import cKDTree
from sklearn.mixture import GaussianMixture

from .geometry import RigidTransform
from .sensor import CameraIntrinsics, DepthImage, deproject

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class CandidateConstraints:
    """Approach cone about straight down, and the 3D workspace box for segmentation."""
    max_approach_angle: float = np.pi / 3
    workspace_min: tuple = (-0.3, -0.3, 0.002)
    workspace_max: tuple = (0.3, 0.3, 0.5)

    def approach_ok(self, v) -> np.ndarray:
        v = np.atleast_2d(v)
        # compare cosines; arccos near 1 loses about half the digits
        cosang = -v[:, 2] / np.linalg.norm(v, axis=1)
        return cosang >= np.cos(self.max_approach_angle) - 1e-12


@dataclass
class CandidateSet:
    points: np.ndarray          # (k, 3) world
    approaches: np.ndarray      # (k, 3) unit, pointing into the object
    quality: np.ndarray | None = None
    pixels: np.ndarray | None = None

    def __len__(self):
        return len(self.points)

    def grasps(self):
        return list(zip(self.points, self.approaches))


def point_cloud(img: DepthImage, camera_pose: RigidTransform,
                intrinsics: CameraIntrinsics = CameraIntrinsics()) -> np.ndarray:
    """World coordinates for every pixel, shape (h, w, 3); no-return pixels are NaN."""
    h, w = img.shape
    u, v = np.meshgrid(np.arange(w, dtype=float), np.arange(h, dtype=float))
    pts = deproject(u, v, img.data, camera_pose, intrinsics)
    pts[img.data <= 0] = np.nan
    return pts


def segment(points: np.ndarray, constraints: CandidateConstraints = CandidateConstraints()):
    lo, hi = np.asarray(constraints.workspace_min), np.asarray(constraints.workspace_max)
    with np.errstate(invalid="ignore"):
        return np.all((points >= lo) & (points <= hi), axis=-1)


def estimate_normals(points: np.ndarray, mask: np.ndarray, window: int = 5) -> np.ndarray:
    """Outward unit normals from plane fits over ``window`` x ``window`` pixel patches.

    Only masked pixels contribute to each fit. Normals are flipped to face the
    camera side (positive world z component is not assumed).
    """
    m = mask.astype(float)
    P = np.where(mask[..., None], points, 0.0)
    count = ndimage.uniform_filter(m, window, mode="constant")
    with np.errstate(invalid="ignore", divide="ignore"):
        mean = np.stack([ndimage.uniform_filter(P[..., i], window, mode="constant")
                         for i in range(3)], -1) / count[..., None]
        cov = np.empty(points.shape[:2] + (3, 3))
        for i in range(3):
            for j in range(i, 3):
                e = ndimage.uniform_filter(P[..., i] * P[..., j], window, mode="constant") / count
                cov[..., i, j] = cov[..., j, i] = e - mean[..., i] * mean[..., j]
    normals = np.full(points.shape, np.nan)
    ok = mask & (count * window * window >= 3 - 1e-9)
    _, vecs = np.linalg.eigh(cov[ok])
    normals[ok] = vecs[:, :, 0]
    return normals


def sample_candidates_from_depth(img: DepthImage, camera_pose: RigidTransform, count: int,
                                 rng: np.random.Generator,
                                 intrinsics: CameraIntrinsics = CameraIntrinsics(),
                                 constraints: CandidateConstraints = CandidateConstraints(),
                                 window: int = 5) -> CandidateSet:
    """Uniform draws over segmented pixels whose inward normal satisfies the cone."""
    if count == 0:
        return CandidateSet(np.zeros((0, 3)), np.zeros((0, 3)), pixels=np.zeros((0, 2), int))
    pts = point_cloud(img, camera_pose, intrinsics)
    mask = segment(pts, constraints)
    if not mask.any():
        raise ValueError("segmented foreground is empty")
    normals = estimate_normals(pts, mask, window)
    # orient toward the camera, then approach = inward normal
    to_cam = camera_pose.translation - pts
    flip = np.einsum("...i,...i->...", normals, to_cam) < 0
    normals[flip] *= -1
    approach = -normals
    valid = mask & np.isfinite(approach).all(-1)
    rows, cols = np.nonzero(valid)
    ok = constraints.approach_ok(approach[rows, cols])
    rows, cols = rows[ok], cols[ok]
    if len(rows) == 0:
        return CandidateSet(np.zeros((0, 3)), np.zeros((0, 3)), pixels=np.zeros((0, 2), int))
    pick = rng.choice(len(rows), size=min(count, len(rows)), replace=False)
    r, c = rows[pick], cols[pick]
    return CandidateSet(pts[r, c], approach[r, c], pixels=np.c_[c, r])


def to_angles(v: np.ndarray) -> np.ndarray:
    """(polar, azimuth) of unit vectors; polar measured from world -z."""
    v = v / np.linalg.norm(v, axis=1, keepdims=True)
    polar = np.arccos(np.clip(-v[:, 2], -1.0, 1.0))
    azimuth = np.arctan2(v[:, 1], v[:, 0])
    return np.c_[polar, azimuth]


def from_angles(angles: np.ndarray) -> np.ndarray:
    polar, azimuth = angles[:, 0], angles[:, 1]
    s = np.sin(polar)
    return np.c_[s * np.cos(azimuth), s * np.sin(azimuth), -np.cos(polar)]


@dataclass
class CEMResult:
    grasp: tuple
    quality: float
    history: list                 # incumbent quality after each round


def cem_plan(candidates: CandidateSet, quality, rng: np.random.Generator,
             surface: np.ndarray | None = None, iterations: int = 3,
             num_samples: int | None = None, elite_fraction: float = 0.25,
             gmm_components: int = 3,
             constraints: CandidateConstraints = CandidateConstraints()) -> CEMResult:
    """Cross-entropy search over grasps.

    ``quality`` maps a list of ``(p, v)`` to scores. Each round fits a
    Gaussian mixture to the elite grasps in (point, polar, azimuth)
    coordinates, samples new grasps, and re-anchors their points to the
    nearest ``surface`` point (the initial candidate points by default).
    Sampled approaches outside the cone are dropped.
    """
    if len(candidates) == 0:
        raise ValueError("no candidates to plan over")
    P = np.asarray(candidates.points, float)
    V = np.asarray(candidates.approaches, float)
    num_samples = num_samples or len(P)
    tree = cKDTree(P if surface is None else surface)
    anchor = P if surface is None else np.asarray(surface)
    scores = np.asarray(quality(list(zip(P, V))), float)
    best = int(np.argmax(scores))
    incumbent = (P[best].copy(), V[best].copy(), float(scores[best]))
    history = [incumbent[2]]
    for it in range(iterations):
        n_elite = max(1, int(np.ceil(elite_fraction * len(P))))
        elite = np.argsort(-scores, kind="stable")[:n_elite]
        X = np.c_[P[elite], to_angles(V[elite])]
        k = max(1, min(gmm_components, len(X)))
        gmm = GaussianMixture(k, reg_covar=1e-6, random_state=int(rng.integers(2 ** 31)))
        gmm.fit(X)
        Y, _ = gmm.sample(num_samples)
        _, idx = tree.query(Y[:, :3])
        P_new = anchor[idx]
        V_new = from_angles(Y[:, 3:])
        keep = constraints.approach_ok(V_new)
        if not keep.any():
            logger.info("round %d: every resampled approach left the cone", it)
            history.append(incumbent[2])
            continue
        P, V = P_new[keep], V_new[keep]
        scores = np.asarray(quality(list(zip(P, V))), float)
        best = int(np.argmax(scores))
        if scores[best] > incumbent[2]:
            incumbent = (P[best].copy(), V[best].copy(), float(scores[best]))
        history.append(incumbent[2])
    return CEMResult((incumbent[0], incumbent[1]), incumbent[2], history)
