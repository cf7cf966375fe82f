"""Conical spring cup model and geometric seal-formation test.

The cup is a right pyramid over a regular n-gon. Its base ring is projected
along the approach direction onto the mesh, the apex is placed on the
approach line, and each spring's strain is compared with a per-spring limit.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

from .geometry import Mesh, ray_intersect_many

logger = logging.getLogger(__name__)

FAILURE_REASONS = ("none", "collision", "hole", "vertex_miss", "strain_exceeded")


@dataclass(frozen=True)
class CupModel:
    n: int = 8
    radius: float = 0.0075
    height: float = 0.01
    strain_limit: float = 0.10

    def __post_init__(self):
        if self.n < 3 or self.radius <= 0 or self.height <= 0:
            raise ValueError("cup needs n >= 3 and positive radius and height")
        if not 0 < self.strain_limit < 1:
            raise ValueError("strain limit must lie in (0, 1)")

    @property
    def perimeter_rest(self) -> float:
        return 2 * self.radius * np.sin(np.pi / self.n)

    @property
    def flexion_rest(self) -> float:
        return 2 * self.radius * np.sin(2 * np.pi / self.n)

    @property
    def cone_rest(self) -> float:
        return float(np.hypot(self.radius, self.height))


@dataclass(frozen=True)
class SealConfig:
    samples_per_spring: int = 16
    hole_grid: int = 8
    collision_steps: int = 10


@dataclass
class CupState:
    base_vertices: np.ndarray          # (n, 3)
    apex: np.ndarray                   # (3,)
    approach: np.ndarray               # unit v
    plane_origin: np.ndarray           # centroid of the undeformed base
    perimeter_paths: np.ndarray | None = None  # (n, m + 1, 3) polylines
    rest_lengths: dict = field(default_factory=dict)
    current_lengths: dict = field(default_factory=dict)
    hit_distances: np.ndarray | None = None


@dataclass
class SealResult:
    feasible: bool
    failure_reason: str
    max_strain: float
    per_spring_strains: np.ndarray
    state: CupState | None = None

    def __post_init__(self):
        assert self.failure_reason in FAILURE_REASONS


class SealFailure(Exception):
    def __init__(self, reason: str, state: CupState | None = None):
        super().__init__(reason)
        self.reason = reason
        self.state = state


def ring_axes(v, reference=None):
    """Orthonormal (e1, e2) spanning the plane normal to ``v``.

    e1 is ``reference`` (world x by default) projected into the plane, with
    world y as fallback when the projection degenerates.
    """
    v = np.asarray(v, float)
    ref = np.array([1.0, 0.0, 0.0]) if reference is None else np.asarray(reference, float)
    e1 = ref - (ref @ v) * v
    if np.linalg.norm(e1) < 1e-6:
        ref = np.array([0.0, 1.0, 0.0])
        e1 = ref - (ref @ v) * v
    e1 /= np.linalg.norm(e1)
    return e1, np.cross(v, e1)


def init_cup(cup: CupModel, p, v, mesh: Mesh, reference=None, angle: float = 0.0) -> CupState:
    """Undeformed cup whose axis is the approach line, clear of the mesh."""
    p = np.asarray(p, float)
    v = np.asarray(v, float) / np.linalg.norm(v)
    extent = float(np.linalg.norm(mesh.vertices - p, axis=1).max())
    standoff = extent + cup.height + 1e-3
    apex = p - standoff * v
    center = apex + cup.height * v
    e1, e2 = ring_axes(v, reference)
    theta = angle + 2 * np.pi * np.arange(cup.n) / cup.n
    base = center + cup.radius * (np.cos(theta)[:, None] * e1 + np.sin(theta)[:, None] * e2)
    rest = {"perimeter": np.full(cup.n, cup.perimeter_rest),
            "cone": np.full(cup.n, cup.cone_rest),
            "flexion": np.full(cup.n, cup.flexion_rest)}
    state = CupState(base, apex, v, center, rest_lengths=rest)
    state.perimeter_paths = np.stack([base, np.roll(base, -1, axis=0)], axis=1)
    _update_lengths(state)
    return state


def _update_lengths(state: CupState) -> None:
    V = state.base_vertices
    state.current_lengths = {
        "perimeter": np.sqrt((np.diff(state.perimeter_paths, axis=1) ** 2).sum(-1)).sum(-1),
        "cone": np.linalg.norm(V - state.apex, axis=1),
        "flexion": np.linalg.norm(V - np.roll(V, -2, axis=0), axis=1),
    }


def _to_plane(points, origin, v):
    return points - ((points - origin) @ v)[:, None] * v


@lru_cache(maxsize=32)
def _unit_polygon_grid(n: int, grid: int) -> np.ndarray:
    """Grid points strictly inside the regular unit n-gon with a vertex on +x."""
    theta = 2 * np.pi * np.arange(n) / n
    P = np.c_[np.cos(theta), np.sin(theta)]
    ticks = (np.arange(grid) + 0.5) / grid * 2.0 - 1.0
    gx, gy = np.meshgrid(ticks, ticks)
    Q = np.c_[gx.ravel(), gy.ravel()]
    inside = np.ones(len(Q), bool)
    for i in range(n):
        a, b = P[i], P[(i + 1) % n]
        cross = (b[0] - a[0]) * (Q[:, 1] - a[1]) - (b[1] - a[1]) * (Q[:, 0] - a[0])
        inside &= cross > 1e-12
    Q = Q[inside]
    Q.setflags(write=False)
    return Q


def _ring_polygon_grid(base_plane, origin, v, grid):
    """Grid points inside the undeformed base polygon, in its plane."""
    radial = base_plane[0] - origin
    radius = float(np.linalg.norm(radial))
    e1 = radial / radius
    e2 = np.cross(v, e1)
    Q = _unit_polygon_grid(len(base_plane), grid) * radius
    return origin + Q[:, :1] * e1 + Q[:, 1:] * e2


def project_perimeter(state: CupState, mesh: Mesh, config: SealConfig = SealConfig()) -> CupState:
    """Drop the base ring along the approach direction onto the mesh.

    Rays start from the undeformed base plane, so projecting an already
    projected state reproduces it. Raises :class:`SealFailure` with reason
    ``vertex_miss`` or ``hole``.
    """
    v, origin = state.approach, state.plane_origin
    n = len(state.base_vertices)
    m = config.samples_per_spring
    base_plane = _to_plane(state.base_vertices, origin, v)
    s = (np.arange(m + 1) / m)[None, :, None]
    nxt = np.roll(base_plane, -1, axis=0)
    # n*(m+1) points; shared endpoints are repeated so each path is complete
    samples = (base_plane[:, None] + s * (nxt - base_plane)[:, None]).reshape(-1, 3)
    grid = _ring_polygon_grid(base_plane, origin, v, config.hole_grid)
    origins = np.concatenate([samples, grid])
    t, _ = ray_intersect_many(mesh, origins, v[None])
    t_perim, t_grid = t[:len(samples)], t[len(samples):]
    new = CupState(state.base_vertices.copy(), state.apex.copy(), v, origin,
                   rest_lengths=state.rest_lengths)
    if not np.all(np.isfinite(t_perim)):
        raise SealFailure("vertex_miss", new)
    if not np.all(np.isfinite(t_grid)):
        raise SealFailure("hole", new)
    hits = samples + t_perim[:, None] * v
    paths = hits.reshape(n, m + 1, 3)
    new.base_vertices = paths[:, 0].copy()
    new.hit_distances = t_perim.reshape(n, m + 1)[:, 0].copy()
    new.perimeter_paths = paths
    _update_lengths(new)
    return new


def apex_offset(vertices, p, v, height: float) -> float:
    """Closed-form apex distance: min(mean((v_i - p) . v) - h, 0)."""
    mean = float(np.mean((np.asarray(vertices) - p) @ v))
    return min(mean - height, 0.0)


def place_apex(state: CupState, p, v, cup: CupModel) -> CupState:
    """Put the apex on the approach line at the closed-form offset.

    The offset is non-positive; the apex sits at ``p + t* v``, i.e. ``|t*|``
    behind the target against the approach direction.
    """
    p = np.asarray(p, float)
    v = np.asarray(v, float)
    t_star = apex_offset(state.base_vertices, p, v, cup.height)
    new = CupState(state.base_vertices, p + t_star * v, state.approach, state.plane_origin,
                   perimeter_paths=state.perimeter_paths, rest_lengths=state.rest_lengths,
                   hit_distances=state.hit_distances)
    _update_lengths(new)
    return new


_FACE_BARY = np.array([[0.25, 0.375, 0.375], [0.5, 0.25, 0.25],
                       [0.25, 0.625, 0.125], [0.25, 0.125, 0.625]])


def _face_samples(apex, base):
    """Four interior points per cone face; ``apex`` (..., 3), ``base`` (..., n, 3)."""
    nxt = np.roll(base, -1, axis=-2)
    apex = np.asarray(apex)[..., None, :]
    pts = (_FACE_BARY[:, 0, None, None] * apex[..., None, :, :]
           + _FACE_BARY[:, 1, None, None] * base[..., None, :, :]
           + _FACE_BARY[:, 2, None, None] * nxt[..., None, :, :])
    return pts.reshape(-1, 3)


def _collides(mesh: Mesh, points, direction, t_max=np.inf) -> bool:
    t, _ = ray_intersect_many(mesh, points, direction[None], t_max)
    return bool(np.isfinite(t).any())


def approach_collision(init: CupState, contact: CupState, mesh: Mesh,
                       config: SealConfig = SealConfig()) -> bool:
    """Sweep the cone faces along the approach and through deformation.

    Phase one moves the rigid cup until its first base vertex touches; each
    face sample is a ray of that length. Phase two blends from the touching
    shape to the contact shape over ``collision_steps`` stages and requires
    every face sample to have free space behind it (against the approach).
    """
    v = init.approach
    travel = float(np.min(contact.hit_distances))
    if _collides(mesh, _face_samples(init.apex, init.base_vertices), v, travel):
        return True
    touch_apex = init.apex + travel * v
    touch_base = init.base_vertices + travel * v
    steps = max(config.collision_steps, 1)
    w = (np.arange(1, steps + 1) / steps)[:, None, None]
    apexes = (1 - w[:, 0]) * touch_apex + w[:, 0] * contact.apex      # (steps, 3)
    bases = (1 - w) * touch_base + w * contact.base_vertices          # (steps, n, 3)
    return _collides(mesh, _face_samples(apexes, bases), -v)


def spring_strains(state: CupState) -> np.ndarray:
    out = []
    for kind in ("perimeter", "cone", "flexion"):
        rest = state.rest_lengths[kind]
        out.append(np.abs(state.current_lengths[kind] - rest) / rest)
    return np.concatenate(out)


def check_seal(cup: CupModel, p, v, mesh: Mesh, config: SealConfig = SealConfig(),
               reference=None, angle: float = 0.0) -> SealResult:
    """Seal feasibility of grasp (p, v) on ``mesh``.

    Order of checks: ring projection (vertex_miss, hole), apex placement,
    cone collision during approach and deformation, then spring strain.
    """
    p = np.asarray(p, float)
    v = np.asarray(v, float) / np.linalg.norm(v)
    state = init_cup(cup, p, v, mesh, reference, angle)
    empty = np.zeros(0)
    try:
        projected = project_perimeter(state, mesh, config)
    except SealFailure as fail:
        return SealResult(False, fail.reason, np.inf, empty, fail.state)
    contact = place_apex(projected, p, v, cup)
    if approach_collision(state, contact, mesh, config):
        return SealResult(False, "collision", np.inf, empty, contact)
    strains = spring_strains(contact)
    max_strain = float(strains.max())
    ok = max_strain <= cup.strain_limit
    return SealResult(ok, "none" if ok else "strain_exceeded", max_strain, strains, contact)


def spring_stretch_metric(cup: CupModel, p, v, mesh: Mesh,
                          config: SealConfig = SealConfig()) -> float:
    """Maximum spring strain; ``inf`` when the seal fails for a non-strain reason."""
    return check_seal(cup, p, v, mesh, config).max_strain
