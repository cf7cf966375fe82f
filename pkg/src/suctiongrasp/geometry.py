"""Triangle meshes, rigid transforms, BVH ray casting and stable poses.

All lengths are in meters. Meshes are treated as immutable once built; the
BVH is constructed lazily on first query and then shared read-only.
"""
from __future__ import annotations

import logging
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numba
import numpy as np
from scipy.spatial import ConvexHull, QhullError

logger = logging.getLogger(__name__)

DEGENERATE_AREA = 1e-12
RAY_EPS = 1e-9
BVH_LEAF_SIZE = 4


class MeshError(ValueError):
    """Raised when a mesh cannot be parsed or is unusable for a query."""


def skew(v: np.ndarray) -> np.ndarray:
    return np.array([[0.0, -v[2], v[1]], [v[2], 0.0, -v[0]], [-v[1], v[0], 0.0]])


def so3_exp(omega: np.ndarray) -> np.ndarray:
    """Rotation matrix for a rotation vector (Rodrigues)."""
    omega = np.asarray(omega, dtype=float)
    theta = float(np.linalg.norm(omega))
    if theta < 1e-12:
        return np.eye(3) + skew(omega)
    K = skew(omega / theta)
    return np.eye(3) + np.sin(theta) * K + (1.0 - np.cos(theta)) * (K @ K)


def rotation_between(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Minimal rotation taking unit vector ``a`` onto unit vector ``b``."""
    a = np.asarray(a, float) / np.linalg.norm(a)
    b = np.asarray(b, float) / np.linalg.norm(b)
    axis = np.cross(a, b)
    s = np.linalg.norm(axis)
    c = float(np.dot(a, b))
    if s < 1e-12:
        if c > 0:
            return np.eye(3)
        # antiparallel: rotate pi about any axis orthogonal to a
        perp = np.cross(a, [1.0, 0.0, 0.0])
        if np.linalg.norm(perp) < 1e-6:
            perp = np.cross(a, [0.0, 1.0, 0.0])
        return so3_exp(np.pi * perp / np.linalg.norm(perp))
    return so3_exp(axis / s * np.arctan2(s, c))


@dataclass(frozen=True)
class RigidTransform:
    rotation: np.ndarray = field(default_factory=lambda: np.eye(3))
    translation: np.ndarray = field(default_factory=lambda: np.zeros(3))

    def __post_init__(self):
        R = np.asarray(self.rotation, dtype=float).reshape(3, 3)
        t = np.asarray(self.translation, dtype=float).reshape(3)
        if not np.allclose(R.T @ R, np.eye(3), atol=1e-9) or np.linalg.det(R) < 0:
            raise ValueError("rotation must be orthonormal with det +1")
        object.__setattr__(self, "rotation", R)
        object.__setattr__(self, "translation", t)

    @classmethod
    def from_matrix(cls, T: np.ndarray) -> "RigidTransform":
        T = np.asarray(T, dtype=float)
        return cls(T[:3, :3], T[:3, 3])

    def matrix(self) -> np.ndarray:
        T = np.eye(4)
        T[:3, :3] = self.rotation
        T[:3, 3] = self.translation
        return T

    def apply(self, points: np.ndarray) -> np.ndarray:
        return np.asarray(points, float) @ self.rotation.T + self.translation

    def apply_vectors(self, vectors: np.ndarray) -> np.ndarray:
        return np.asarray(vectors, float) @ self.rotation.T

    def inverse(self) -> "RigidTransform":
        Rt = self.rotation.T
        return RigidTransform(Rt, -Rt @ self.translation)

    def __matmul__(self, other: "RigidTransform") -> "RigidTransform":
        return RigidTransform(
            self.rotation @ other.rotation,
            self.rotation @ other.translation + self.translation,
        )

    def adjoint(self) -> np.ndarray:
        """6x6 map taking (force, torque) wrenches from this frame to its parent."""
        R, t = self.rotation, self.translation
        A = np.zeros((6, 6))
        A[:3, :3] = R
        A[3:, 3:] = R
        A[3:, :3] = skew(t) @ R
        return A


def _triangle_areas(vertices: np.ndarray, triangles: np.ndarray) -> np.ndarray:
    a, b, c = (vertices[triangles[:, i]] for i in range(3))
    return 0.5 * np.linalg.norm(np.cross(b - a, c - a), axis=1)


class Mesh:
    """Triangle surface with uniform-density mass properties.

    Triangles wound counter-clockwise seen from outside are treated as
    outward facing. A globally inverted winding (negative enclosed volume)
    is flipped on construction.
    """

    def __init__(self, vertices, triangles, mass: float = 1.0, center_of_mass=None,
                 drop_degenerate: bool = True):
        V = np.ascontiguousarray(vertices, dtype=np.float64).reshape(-1, 3)
        F = np.ascontiguousarray(triangles, dtype=np.int64).reshape(-1, 3)
        if F.size and (F.min() < 0 or F.max() >= len(V)):
            raise MeshError("triangle index out of range")
        self.num_degenerate = 0
        if drop_degenerate and len(F):
            keep = _triangle_areas(V, F) >= DEGENERATE_AREA
            self.num_degenerate = int((~keep).sum())
            if self.num_degenerate:
                logger.warning("dropped %d degenerate triangles", self.num_degenerate)
                F = F[keep]
        if len(F) == 0:
            raise MeshError("mesh has no usable triangles")

        self.is_watertight = _is_watertight(F)
        volume, centroid = _volume_and_centroid(V, F)
        if self.is_watertight and volume < 0:
            F = F[:, ::-1].copy()
            volume = -volume
        self.vertices = V
        self.triangles = F
        self.volume = volume
        self.mass = float(mass)
        if center_of_mass is not None:
            com = np.asarray(center_of_mass, float)
        elif self.is_watertight and abs(volume) > 1e-18:
            com = centroid
        else:
            areas = _triangle_areas(V, F)
            com = (V[F].mean(axis=1) * areas[:, None]).sum(0) / areas.sum()
        self.center_of_mass = np.asarray(com, float)
        for arr in (self.vertices, self.triangles, self.center_of_mass):
            arr.setflags(write=False)
        self._bvh = None
        self._normals = None
        self._areas = None

    def __repr__(self):
        return (f"Mesh(vertices={len(self.vertices)}, triangles={len(self.triangles)}, "
                f"watertight={self.is_watertight})")

    @property
    def areas(self) -> np.ndarray:
        if self._areas is None:
            self._areas = _triangle_areas(self.vertices, self.triangles)
        return self._areas

    @property
    def face_normals(self) -> np.ndarray:
        """Outward unit normals per triangle."""
        if self._normals is None:
            a, b, c = (self.vertices[self.triangles[:, i]] for i in range(3))
            n = np.cross(b - a, c - a)
            self._normals = n / np.linalg.norm(n, axis=1, keepdims=True)
        return self._normals

    @property
    def extent(self) -> float:
        """Largest distance of a vertex from the bounding-box center."""
        center = 0.5 * (self.vertices.min(0) + self.vertices.max(0))
        return float(np.linalg.norm(self.vertices - center, axis=1).max())

    @property
    def bvh(self) -> "BVH":
        if self._bvh is None:
            self._bvh = BVH(self.vertices, self.triangles)
        return self._bvh

    def transform(self, T: RigidTransform) -> "Mesh":
        return Mesh(T.apply(self.vertices), self.triangles, mass=self.mass,
                    center_of_mass=T.apply(self.center_of_mass), drop_degenerate=False)

    def scaled(self, factor: float) -> "Mesh":
        return Mesh(self.vertices * factor, self.triangles, mass=self.mass,
                    center_of_mass=self.center_of_mass * factor, drop_degenerate=False)


def _is_watertight(F: np.ndarray) -> bool:
    edges = np.concatenate([F[:, [0, 1]], F[:, [1, 2]], F[:, [2, 0]]])
    edges = np.sort(edges, axis=1)
    _, counts = np.unique(edges, axis=0, return_counts=True)
    return bool(np.all(counts == 2))


def _volume_and_centroid(V: np.ndarray, F: np.ndarray):
    a, b, c = V[F[:, 0]], V[F[:, 1]], V[F[:, 2]]
    signed = np.einsum("ij,ij->i", a, np.cross(b, c)) / 6.0
    volume = signed.sum()
    if abs(volume) < 1e-18:
        return 0.0, np.full(3, np.nan)
    centroid = ((a + b + c) / 4.0 * signed[:, None]).sum(0) / volume
    return float(volume), centroid


# --------------------------------------------------------------------------
# file formats

def load_mesh(path, scale: float = 1.0, mass: float = 1.0) -> Mesh:
    """Load an ASCII OBJ or binary STL file; vertices are multiplied by ``scale``."""
    path = Path(path)
    suffix = path.suffix.lower()
    try:
        if suffix == ".obj":
            V, F = _parse_obj(path.read_text())
        elif suffix == ".stl":
            V, F = _parse_stl_binary(path.read_bytes())
        else:
            raise MeshError(f"unsupported mesh format: {suffix}")
    except (ValueError, IndexError, struct.error) as exc:
        if isinstance(exc, MeshError):
            raise
        raise MeshError(f"failed to parse {path}: {exc}") from exc
    return Mesh(V * scale, F, mass=mass)


def _parse_obj(text: str):
    verts, faces = [], []
    for lineno, line in enumerate(text.splitlines(), 1):
        parts = line.split()
        if not parts or parts[0].startswith("#"):
            continue
        if parts[0] == "v":
            if len(parts) < 4:
                raise MeshError(f"line {lineno}: vertex needs 3 coordinates")
            verts.append([float(x) for x in parts[1:4]])
        elif parts[0] == "f":
            idx = []
            for tok in parts[1:]:
                i = int(tok.split("/")[0])
                idx.append(i - 1 if i > 0 else len(verts) + i)
            if len(idx) < 3:
                raise MeshError(f"line {lineno}: face needs at least 3 vertices")
            for k in range(1, len(idx) - 1):
                faces.append([idx[0], idx[k], idx[k + 1]])
    if not verts or not faces:
        raise MeshError("OBJ contains no geometry")
    return np.array(verts, float), np.array(faces, np.int64)


_STL_DTYPE = np.dtype([("normal", "<f4", 3), ("v", "<f4", (3, 3)), ("attr", "<u2")])


def _parse_stl_binary(data: bytes):
    if len(data) < 84:
        raise MeshError("STL file too short")
    (count,) = struct.unpack("<I", data[80:84])
    if len(data) < 84 + 50 * count:
        raise MeshError("STL triangle count exceeds file size")
    recs = np.frombuffer(data, dtype=_STL_DTYPE, count=count, offset=84)
    corners = recs["v"].reshape(-1, 3).astype(np.float64)
    verts, inverse = np.unique(corners, axis=0, return_inverse=True)
    return verts, inverse.reshape(-1, 3)


def save_obj(mesh: Mesh, path) -> None:
    lines = [f"v {x:.17g} {y:.17g} {z:.17g}" for x, y, z in mesh.vertices]
    lines += [f"f {a + 1} {b + 1} {c + 1}" for a, b, c in mesh.triangles]
    Path(path).write_text("\n".join(lines) + "\n")


def save_stl(mesh: Mesh, path) -> None:
    recs = np.zeros(len(mesh.triangles), dtype=_STL_DTYPE)
    recs["normal"] = mesh.face_normals
    recs["v"] = mesh.vertices[mesh.triangles]
    with open(path, "wb") as fh:
        fh.write(b"\0" * 80)
        fh.write(struct.pack("<I", len(recs)))
        fh.write(recs.tobytes())


# --------------------------------------------------------------------------
# ray casting

class BVH:
    """Median-split bounding volume hierarchy over triangles, flattened to arrays."""

    def __init__(self, vertices: np.ndarray, triangles: np.ndarray, leaf_size: int = BVH_LEAF_SIZE):
        tri = vertices[triangles]
        self.v0 = np.ascontiguousarray(tri[:, 0])
        self.e1 = np.ascontiguousarray(tri[:, 1] - tri[:, 0])
        self.e2 = np.ascontiguousarray(tri[:, 2] - tri[:, 0])
        lo, hi = tri.min(axis=1), tri.max(axis=1)
        centroids = tri.mean(axis=1)

        bmin, bmax, left, right, start, count = [], [], [], [], [], []
        order = np.arange(len(tri))
        # iterative build; node children are appended after their parent
        stack = [(0, len(tri), -1, False)]
        while stack:
            s, e, parent, is_right = stack.pop()
            node = len(bmin)
            idx = order[s:e]
            bmin.append(lo[idx].min(0))
            bmax.append(hi[idx].max(0))
            left.append(-1)
            right.append(-1)
            start.append(s)
            count.append(e - s)
            if parent >= 0:
                (right if is_right else left)[parent] = node
            if e - s <= leaf_size:
                continue
            c = centroids[idx]
            axis = int(np.argmax(c.max(0) - c.min(0)))
            srt = idx[np.argsort(c[:, axis], kind="stable")]
            order[s:e] = srt
            mid = s + (e - s) // 2
            count[node] = 0
            stack.append((mid, e, node, True))
            stack.append((s, mid, node, False))

        self.order = order.astype(np.int64)
        self.bmin = np.array(bmin)
        self.bmax = np.array(bmax)
        self.left = np.array(left, np.int64)
        self.right = np.array(right, np.int64)
        self.start = np.array(start, np.int64)
        self.count = np.array(count, np.int64)

    def intersect(self, origins: np.ndarray, directions: np.ndarray,
                  t_max: float = np.inf):
        """Nearest hits for a batch of rays: (distance, triangle id); inf / -1 on miss."""
        O = np.ascontiguousarray(np.atleast_2d(origins), dtype=np.float64)
        D = np.ascontiguousarray(np.atleast_2d(directions), dtype=np.float64)
        return _bvh_intersect(O, D, float(t_max), self.v0, self.e1, self.e2,
                              self.bmin, self.bmax, self.left, self.right,
                              self.start, self.count, self.order)


@numba.njit(cache=True)
def _ray_triangle(ox, oy, oz, dx, dy, dz, v0, e1, e2, k):
    # Moller-Trumbore, two-sided
    px = dy * e2[k, 2] - dz * e2[k, 1]
    py = dz * e2[k, 0] - dx * e2[k, 2]
    pz = dx * e2[k, 1] - dy * e2[k, 0]
    det = e1[k, 0] * px + e1[k, 1] * py + e1[k, 2] * pz
    if abs(det) < 1e-18:
        return np.inf
    inv = 1.0 / det
    tx = ox - v0[k, 0]
    ty = oy - v0[k, 1]
    tz = oz - v0[k, 2]
    u = (tx * px + ty * py + tz * pz) * inv
    if u < -1e-12 or u > 1.0 + 1e-12:
        return np.inf
    qx = ty * e1[k, 2] - tz * e1[k, 1]
    qy = tz * e1[k, 0] - tx * e1[k, 2]
    qz = tx * e1[k, 1] - ty * e1[k, 0]
    w = (dx * qx + dy * qy + dz * qz) * inv
    if w < -1e-12 or u + w > 1.0 + 1e-12:
        return np.inf
    t = (e2[k, 0] * qx + e2[k, 1] * qy + e2[k, 2] * qz) * inv
    return t


@numba.njit(cache=True)
def _slab(ox, oy, oz, ix, iy, iz, lo, hi, tbest):
    t0 = 0.0
    t1 = tbest
    o = (ox, oy, oz)
    inv = (ix, iy, iz)
    for a in range(3):
        ta = (lo[a] - o[a]) * inv[a]
        tb = (hi[a] - o[a]) * inv[a]
        if ta > tb:
            ta, tb = tb, ta
        if ta != ta:  # 0 * inf on a slab boundary
            ta = -np.inf
        if tb != tb:
            tb = np.inf
        if ta > t0:
            t0 = ta
        if tb < t1:
            t1 = tb
        if t0 > t1 * (1.0 + 1e-12) + 1e-15:
            return False
    return True


@numba.njit(cache=True)
def _bvh_intersect(O, D, t_max, v0, e1, e2, bmin, bmax, left, right, start, count, order):
    n = O.shape[0]
    dist = np.full(n, np.inf)
    tri = np.full(n, -1, np.int64)
    stack = np.empty(128, np.int64)
    for r in range(n):
        ox, oy, oz = O[r, 0], O[r, 1], O[r, 2]
        dx, dy, dz = D[r, 0], D[r, 1], D[r, 2]
        ix = 1.0 / dx if dx != 0.0 else np.inf
        iy = 1.0 / dy if dy != 0.0 else np.inf
        iz = 1.0 / dz if dz != 0.0 else np.inf
        best = t_max
        best_k = -1
        sp = 0
        stack[sp] = 0
        sp += 1
        while sp > 0:
            sp -= 1
            node = stack[sp]
            if not _slab(ox, oy, oz, ix, iy, iz, bmin[node], bmax[node], best):
                continue
            if count[node] > 0:
                for j in range(start[node], start[node] + count[node]):
                    k = order[j]
                    t = _ray_triangle(ox, oy, oz, dx, dy, dz, v0, e1, e2, k)
                    if t > 1e-9 and (t < best or (t == best and k < best_k)):
                        best = t
                        best_k = k
            else:
                stack[sp] = left[node]
                stack[sp + 1] = right[node]
                sp += 2
        if best_k >= 0:
            dist[r] = best
            tri[r] = best_k
    return dist, tri


@dataclass(frozen=True)
class RayHit:
    point: np.ndarray
    triangle: int
    distance: float


def ray_intersect(mesh: Mesh, origin, direction) -> RayHit | None:
    """Nearest intersection farther than 1e-9 m along a unit-direction ray."""
    o = np.asarray(origin, float)
    d = np.asarray(direction, float)
    t, k = mesh.bvh.intersect(o[None], d[None])
    if k[0] < 0:
        return None
    return RayHit(o + t[0] * d, int(k[0]), float(t[0]))


def ray_intersect_many(mesh: Mesh, origins, directions, t_max: float = np.inf):
    """Vectorized :func:`ray_intersect`; returns (distances, triangle ids)."""
    O = np.atleast_2d(np.asarray(origins, float))
    D = np.atleast_2d(np.asarray(directions, float))
    if D.shape[0] == 1 and O.shape[0] > 1:
        D = np.repeat(D, O.shape[0], axis=0)
    return mesh.bvh.intersect(O, D, t_max)


def ray_intersect_bruteforce(mesh: Mesh, origins, directions):
    """All-triangle scan; reference for the BVH."""
    O = np.atleast_2d(np.asarray(origins, float))
    D = np.atleast_2d(np.asarray(directions, float))
    tri = mesh.vertices[mesh.triangles]
    v0, e1, e2 = tri[:, 0], tri[:, 1] - tri[:, 0], tri[:, 2] - tri[:, 0]
    dist = np.full(len(O), np.inf)
    ids = np.full(len(O), -1, np.int64)
    for r in range(len(O)):
        p = np.cross(D[r], e2)
        det = np.einsum("ij,ij->i", e1, p)
        with np.errstate(divide="ignore", invalid="ignore"):
            inv = 1.0 / det
            s = O[r] - v0
            u = np.einsum("ij,ij->i", s, p) * inv
            q = np.cross(s, e1)
            w = (q @ D[r]) * inv
            t = np.einsum("ij,ij->i", e2, q) * inv
        ok = ((np.abs(det) >= 1e-18) & (u >= -1e-12) & (u <= 1 + 1e-12)
              & (w >= -1e-12) & (u + w <= 1 + 1e-12) & (t > 1e-9))
        if ok.any():
            cand = np.where(ok)[0]
            k = cand[np.argmin(t[cand])]
            dist[r], ids[r] = t[k], k
    return dist, ids


# --------------------------------------------------------------------------
# sampling

def sample_surface(mesh: Mesh, count: int, rng: np.random.Generator):
    """Area-uniform surface points with inward unit normals."""
    if count < 0:
        raise ValueError("count must be non-negative")
    areas = mesh.areas
    total = areas.sum()
    if not total > 0:
        raise MeshError("mesh has zero surface area")
    tri_idx = rng.choice(len(areas), size=count, p=areas / total)
    r1 = np.sqrt(rng.random(count))
    r2 = rng.random(count)
    a, b, c = (mesh.vertices[mesh.triangles[tri_idx, i]] for i in range(3))
    pts = (1 - r1)[:, None] * a + (r1 * (1 - r2))[:, None] * b + (r1 * r2)[:, None] * c
    normals = -mesh.face_normals[tri_idx]
    return pts, normals, tri_idx


# --------------------------------------------------------------------------
# stable poses

@dataclass(frozen=True)
class StablePose:
    transform: RigidTransform
    support_facet: int
    probability: float
    normal: np.ndarray  # outward facet normal in the object frame


@dataclass
class _HullFacet:
    normal: np.ndarray
    offset: float
    simplices: list
    vertices: np.ndarray  # polygon vertices (object frame), ordered


def _solid_angle(c, a, b, d):
    """Solid angle of triangle (a, b, d) seen from c."""
    r1, r2, r3 = a - c, b - c, d - c
    n1, n2, n3 = np.linalg.norm(r1), np.linalg.norm(r2), np.linalg.norm(r3)
    num = abs(np.dot(r1, np.cross(r2, r3)))
    den = n1 * n2 * n3 + np.dot(r1, r2) * n3 + np.dot(r1, r3) * n2 + np.dot(r2, r3) * n1
    return 2.0 * np.arctan2(num, den)


def convex_hull_facets(mesh: Mesh, tol: float = 1e-9):
    """Coplanar-merged convex hull facets and their adjacency."""
    try:
        hull = ConvexHull(mesh.vertices)
    except (QhullError, ValueError) as exc:
        raise MeshError(f"convex hull failed: {exc}") from exc
    eq = hull.equations
    ns = len(hull.simplices)
    parent = list(range(ns))

    def find(i):
        while parent[i] != i:
            parent[i] = parent[parent[i]]
            i = parent[i]
        return i

    for i in range(ns):
        for j in hull.neighbors[i]:
            if np.dot(eq[i, :3], eq[j, :3]) > 1 - 1e-9 and abs(eq[i, 3] - eq[j, 3]) < tol:
                parent[find(i)] = find(j)
    groups = {}
    for i in range(ns):
        groups.setdefault(find(i), []).append(i)
    facets = []
    simplex_to_facet = np.empty(ns, np.int64)
    for fid, members in enumerate(groups.values()):
        n = eq[members, :3].mean(0)
        n /= np.linalg.norm(n)
        pts_idx = np.unique(hull.simplices[members].ravel())
        pts = hull.points[pts_idx]
        facets.append(_HullFacet(n, float(-eq[members, 3].mean()), members,
                                 _order_polygon(pts, n)))
        simplex_to_facet[members] = fid
    adjacency = {}
    for i in range(ns):
        for k, j in enumerate(hull.neighbors[i]):
            fi, fj = simplex_to_facet[i], simplex_to_facet[j]
            if fi == fj:
                continue
            edge = np.delete(hull.simplices[i], k)
            adjacency.setdefault(int(fi), []).append((int(fj), hull.points[edge]))
    return hull, facets, adjacency


def _order_polygon(pts, n):
    u = np.cross(n, [1.0, 0.0, 0.0])
    if np.linalg.norm(u) < 1e-6:
        u = np.cross(n, [0.0, 1.0, 0.0])
    u /= np.linalg.norm(u)
    w = np.cross(n, u)
    c = pts.mean(0)
    ang = np.arctan2((pts - c) @ w, (pts - c) @ u)
    return pts[np.argsort(ang)]


def _com_inside(facet: _HullFacet, com: np.ndarray, tol: float = 1e-12) -> bool:
    q = com - (np.dot(com, facet.normal) - facet.offset) * facet.normal
    P = facet.vertices
    for i in range(len(P)):
        a, b = P[i], P[(i + 1) % len(P)]
        if np.dot(np.cross(b - a, q - a), facet.normal) < -tol:
            return False
    return True


def _topple_target(fid, facets, adjacency, com):
    """Neighbor facet reached by rolling over the edge the COM projects past."""
    f = facets[fid]
    q = com - (np.dot(com, f.normal) - f.offset) * f.normal
    centroid = f.vertices.mean(0)
    best, best_score = None, -np.inf
    for nb, edge in adjacency.get(fid, []):
        a, b = edge
        # signed distance of q outside the edge, inward direction points at the centroid
        e = b - a
        inward = np.cross(f.normal, e)
        if np.dot(inward, centroid - a) < 0:
            inward = -inward
        inward /= np.linalg.norm(inward)
        outside = -np.dot(q - a, inward)
        # prefer the edge crossed by the centroid->q segment
        d = q - centroid
        denom = np.dot(d, inward)
        crosses = 0.0
        if denom < 0:
            s = np.dot(a - centroid, inward) / denom
            x = centroid + s * d
            t = np.dot(x - a, e) / np.dot(e, e)
            crosses = 1.0 if -1e-9 <= t <= 1 + 1e-9 and 0 <= s <= 1 + 1e-9 else 0.0
        score = crosses * 1e6 + outside
        if score > best_score:
            best, best_score = nb, score
    return best


def _settle(fid, facets, adjacency, com, stable_set):
    seen = set()
    while fid not in stable_set:
        if fid in seen:  # numerical cycle; stop at the lowest-COM facet visited
            return min(seen, key=lambda i: np.dot(com, facets[i].normal) - facets[i].offset)
        seen.add(fid)
        fid = _topple_target(fid, facets, adjacency, com)
    return fid


def _pose_for_facet(mesh: Mesh, facet: _HullFacet) -> RigidTransform:
    R = rotation_between(facet.normal, np.array([0.0, 0.0, -1.0]))
    p = mesh.vertices @ R.T
    com = R @ mesh.center_of_mass
    t = np.array([-com[0], -com[1], -p[:, 2].min()])
    return RigidTransform(R, t)


def stable_poses(mesh: Mesh) -> list[StablePose]:
    """Resting poses on the z=0 table, one per stable convex-hull facet.

    Each hull facet's probability is the solid angle it subtends at the
    center of mass; unstable facets pass their share to the facet the object
    topples onto.
    """
    if not mesh.is_watertight:
        raise MeshError("stable poses require a watertight mesh")
    _, facets, adjacency = convex_hull_facets(mesh)
    com = mesh.center_of_mass
    omega = np.zeros(len(facets))
    for fid, f in enumerate(facets):
        P = f.vertices
        for i in range(1, len(P) - 1):
            omega[fid] += _solid_angle(com, P[0], P[i], P[i + 1])
    stable = {i for i, f in enumerate(facets) if _com_inside(f, com)}
    if not stable:
        raise MeshError("no stable facet found")
    mass = {i: 0.0 for i in stable}
    for fid in range(len(facets)):
        mass[_settle(fid, facets, adjacency, com, stable)] += omega[fid]
    total = sum(mass.values())
    poses = [StablePose(_pose_for_facet(mesh, facets[i]), i, mass[i] / total, facets[i].normal)
             for i in stable]
    poses.sort(key=lambda s: (-s.probability, s.support_facet))
    return poses
