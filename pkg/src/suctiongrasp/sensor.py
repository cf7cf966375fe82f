"""Depth rendering by ray casting, image noise, grasp projection and thumbnails.

Camera frames follow the pinhole convention: z along the optical axis, x to
the right (image columns), y down (image rows). A camera pose maps camera
coordinates to world coordinates. The table is the world plane z = 0.
"""
from __future__ import annotations

import json
import logging
from dataclasses import asdict, dataclass
from functools import lru_cache
from pathlib import Path

import numpy as np
from scipy import ndimage

from .geometry import Mesh, RigidTransform

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class CameraIntrinsics:
    fx: float = 525.0
    fy: float = 525.0
    cx: float = 319.5
    cy: float = 239.5
    width: int = 640
    height: int = 480

    def __post_init__(self):
        if self.fx <= 0 or self.fy <= 0:
            raise ValueError("focal lengths must be positive")
        if not (0 <= self.cx < self.width and 0 <= self.cy < self.height):
            raise ValueError("principal point must lie inside the image")

    def pixel_rays(self) -> np.ndarray:
        """Camera-frame ray directions with unit z, shape (height, width, 3)."""
        u, v = np.meshgrid(np.arange(self.width, dtype=float), np.arange(self.height, dtype=float))
        return np.stack([(u - self.cx) / self.fx, (v - self.cy) / self.fy, np.ones_like(u)], -1)


@dataclass
class DepthImage:
    """Depth in meters along the optical axis; 0 encodes no return."""
    data: np.ndarray

    def __post_init__(self):
        self.data = np.asarray(self.data, dtype=np.float64)
        if self.data.ndim != 2:
            raise ValueError("depth image must be 2-D")

    @property
    def shape(self):
        return self.data.shape

    def save(self, path) -> None:
        """Flat little-endian float32 payload plus a JSON header next to it."""
        path = Path(path)
        self.data.astype("<f4").tofile(path)
        header = {"width": int(self.data.shape[1]), "height": int(self.data.shape[0]),
                  "units": "meters", "dtype": "<f4"}
        path.with_suffix(path.suffix + ".json").write_text(json.dumps(header, indent=2))

    @classmethod
    def load(cls, path) -> "DepthImage":
        path = Path(path)
        header = json.loads(path.with_suffix(path.suffix + ".json").read_text())
        data = np.fromfile(path, dtype=header.get("dtype", "<f4"))
        return cls(data.reshape(header["height"], header["width"]))

    def save_png(self, path) -> None:
        """16-bit PNG preview with depth quantized to millimeters."""
        from PIL import Image

        mm = np.clip(np.round(self.data * 1000.0), 0, 65535).astype(np.uint16)
        Image.fromarray(mm).save(path)


def camera_from_spherical(radius: float, azimuth: float, polar: float,
                          target=(0.0, 0.0, 0.0)) -> RigidTransform:
    """Camera on a sphere around ``target`` looking at it.

    ``polar`` is measured from the world z axis. The image x axis is the
    azimuthal tangent, which stays well defined directly overhead.
    """
    target = np.asarray(target, float)
    sp, cp = np.sin(polar), np.cos(polar)
    eye = target + radius * np.array([sp * np.cos(azimuth), sp * np.sin(azimuth), cp])
    z = (target - eye) / radius
    x = np.array([-np.sin(azimuth), np.cos(azimuth), 0.0])
    y = np.cross(z, x)
    return RigidTransform(np.column_stack([x, y, z]), eye)


def render_depth(mesh: Mesh | None, object_pose: RigidTransform | None,
                 camera_pose: RigidTransform, intrinsics: CameraIntrinsics = CameraIntrinsics(),
                 table: bool = True) -> DepthImage:
    """Nearest-hit depth per pixel over the posed mesh and the table plane."""
    dirs_cam = intrinsics.pixel_rays().reshape(-1, 3)
    R, eye = camera_pose.rotation, camera_pose.translation
    dirs_world = dirs_cam @ R.T
    depth = np.full(len(dirs_cam), np.inf)
    if table:
        dz = dirs_world[:, 2]
        with np.errstate(divide="ignore", invalid="ignore"):
            t = -eye[2] / dz
        depth = np.where((dz < 0) & (t > 0), t, np.inf)
    if mesh is not None:
        pose = object_pose if object_pose is not None else RigidTransform()
        inv = pose.inverse()
        origin = inv.apply(eye[None])[0]
        dirs_obj = dirs_world @ inv.rotation.T
        # ray parameter t with unit-z camera directions is the depth itself
        t_mesh, _ = mesh.bvh.intersect(np.repeat(origin[None], len(dirs_obj), 0), dirs_obj)
        depth = np.minimum(depth, t_mesh)
    depth[~np.isfinite(depth)] = 0.0
    return DepthImage(depth.reshape(intrinsics.height, intrinsics.width))


@dataclass(frozen=True)
class NoiseModel:
    """Multiplicative Gamma gain plus a smooth Gaussian-process field.

    ``alpha_shape=None`` disables the gain and ``sigma=0`` disables the field.
    """
    alpha_shape: float | None = 1000.0
    alpha_scale: float = 0.001
    sigma: float = 0.005
    bandwidth: float = float(np.sqrt(2.0))

    @classmethod
    def none(cls) -> "NoiseModel":
        return cls(alpha_shape=None, sigma=0.0)


@lru_cache(maxsize=8)
def _filtered_white_noise_std(kernel_sigma: float) -> float:
    delta = np.zeros((65, 65))
    delta[32, 32] = 1.0
    return float(np.sqrt((ndimage.gaussian_filter(delta, kernel_sigma) ** 2).sum()))


def gp_noise(shape, sigma: float, bandwidth: float, rng: np.random.Generator) -> np.ndarray:
    """Stationary field with covariance sigma^2 exp(-d^2 / (2 bandwidth^2)).

    White noise blurred by a Gaussian of std ``bandwidth / sqrt(2)`` has a
    Gaussian autocovariance of std ``bandwidth``.
    """
    kernel_sigma = bandwidth / np.sqrt(2.0)
    field = ndimage.gaussian_filter(rng.standard_normal(shape), kernel_sigma, mode="wrap")
    return field * (sigma / _filtered_white_noise_std(kernel_sigma))


def sample_gain(noise: NoiseModel, rng: np.random.Generator, size=None):
    return rng.gamma(noise.alpha_shape, noise.alpha_scale, size)


def corrupt_depth(img: DepthImage, rng: np.random.Generator,
                  noise: NoiseModel = NoiseModel()) -> DepthImage:
    """y = alpha * y_hat + eps on returning pixels, clamped at zero."""
    data = img.data.copy()
    valid = data > 0
    if noise.alpha_shape is not None:
        data[valid] *= sample_gain(noise, rng)
    if noise.sigma > 0:
        data[valid] += gp_noise(data.shape, noise.sigma, noise.bandwidth, rng)[valid]
    negative = int((data < 0).sum())
    if negative:
        logger.info("clamped %d negative depth pixels to zero", negative)
        np.maximum(data, 0.0, out=data)
    return DepthImage(data)


@dataclass(frozen=True)
class GraspProjection:
    u: float                    # column
    v: float                    # row
    depth: float                # camera-frame z of the target, meters
    angle: float                # in-plane rotation that aligns the approach with +rows
    table_angle: float          # between the approach and the downward table normal


def project_point(point, camera_pose: RigidTransform, intrinsics: CameraIntrinsics):
    pc = camera_pose.inverse().apply(np.atleast_2d(point))
    if np.any(pc[:, 2] <= 0):
        raise ValueError("point lies behind the camera")
    u = intrinsics.fx * pc[:, 0] / pc[:, 2] + intrinsics.cx
    v = intrinsics.fy * pc[:, 1] / pc[:, 2] + intrinsics.cy
    return u, v, pc[:, 2]


def deproject(u, v, depth, camera_pose: RigidTransform,
              intrinsics: CameraIntrinsics = CameraIntrinsics()) -> np.ndarray:
    """World points for pixel coordinates and depths (broadcasting)."""
    u, v, depth = np.broadcast_arrays(np.asarray(u, float), np.asarray(v, float),
                                      np.asarray(depth, float))
    pc = np.stack([(u - intrinsics.cx) / intrinsics.fx * depth,
                   (v - intrinsics.cy) / intrinsics.fy * depth, depth], -1)
    return camera_pose.apply(pc.reshape(-1, 3)).reshape(pc.shape)


def project_grasp(grasp, camera_pose: RigidTransform,
                  intrinsics: CameraIntrinsics = CameraIntrinsics()) -> GraspProjection:
    """Pixel, depth and angles of a world-frame grasp ``(p, v)``."""
    p, a = (np.asarray(x, float) for x in grasp)
    pc = camera_pose.inverse().apply(p[None])[0]
    if pc[2] <= 0:
        raise ValueError("grasp target lies behind the camera")
    ac = camera_pose.rotation.T @ a
    x, y, z = pc
    u = intrinsics.fx * x / z + intrinsics.cx
    v = intrinsics.fy * y / z + intrinsics.cy
    # image-plane velocity of the target moving along the approach
    du = intrinsics.fx * (ac[0] * z - x * ac[2]) / z ** 2
    dv = intrinsics.fy * (ac[1] * z - y * ac[2]) / z ** 2
    angle = float(np.arctan2(-du, dv)) if np.hypot(du, dv) > 1e-12 else 0.0
    table_angle = float(np.arccos(np.clip(-a[2] / np.linalg.norm(a), -1.0, 1.0)))
    return GraspProjection(float(u), float(v), float(z), angle, table_angle)


@dataclass
class GraspThumbnail:
    crop: np.ndarray
    gripper_depth: float
    approach_angle: float
    pixel: tuple
    rotation: float


def thumbnail_coordinates(u: float, v: float, angle: float, side: int):
    """Source (row, col) for every crop pixel.

    Crop rows run along the rotated approach direction; the target sits at
    the crop center ``(side - 1) / 2``.
    """
    c = (side - 1) / 2.0
    di, dj = np.meshgrid(np.arange(side) - c, np.arange(side) - c, indexing="ij")
    ca, sa = np.cos(angle), np.sin(angle)
    cols = u + dj * ca - di * sa
    rows = v + dj * sa + di * ca
    return rows, cols


def extract_thumbnail(img: DepthImage, projection: GraspProjection, side: int = 32) -> GraspThumbnail:
    """Rotated, target-centered crop with bilinear resampling; outside pixels read 0."""
    rows, cols = thumbnail_coordinates(projection.u, projection.v, projection.angle, side)
    crop = ndimage.map_coordinates(img.data, [rows, cols], order=1, mode="constant", cval=0.0)
    return GraspThumbnail(crop, projection.depth, projection.table_angle,
                          (projection.u, projection.v), projection.angle)


def sample_bilinear(img: DepthImage, u: float, v: float) -> float:
    return float(ndimage.map_coordinates(img.data, [[v], [u]], order=1, mode="constant")[0])


def intrinsics_to_dict(intr: CameraIntrinsics) -> dict:
    return asdict(intr)
