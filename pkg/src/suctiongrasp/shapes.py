"""Procedural watertight test meshes (boxes, spheres, extrusions, plates)."""
from __future__ import annotations

import numpy as np

from .geometry import Mesh


def box(extents=(1.0, 1.0, 1.0), center=(0.0, 0.0, 0.0), mass: float = 1.0) -> Mesh:
    ex = np.asarray(extents, float) / 2.0
    corners = np.array([[x, y, z] for x in (-1, 1) for y in (-1, 1) for z in (-1, 1)], float)
    V = corners * ex + np.asarray(center, float)
    # index = 4*ix + 2*iy + iz; quads listed counter-clockwise from outside
    quads = [(0, 1, 3, 2), (4, 6, 7, 5), (0, 4, 5, 1), (2, 3, 7, 6), (0, 2, 6, 4), (1, 5, 7, 3)]
    F = []
    for a, b, c, d in quads:
        F += [(a, b, c), (a, c, d)]
    return Mesh(V, F, mass=mass)


def icosphere(radius: float = 1.0, subdivisions: int = 2, center=(0.0, 0.0, 0.0),
              mass: float = 1.0) -> Mesh:
    t = (1.0 + 5 ** 0.5) / 2.0
    V = [(-1, t, 0), (1, t, 0), (-1, -t, 0), (1, -t, 0), (0, -1, t), (0, 1, t),
         (0, -1, -t), (0, 1, -t), (t, 0, -1), (t, 0, 1), (-t, 0, -1), (-t, 0, 1)]
    V = [np.array(v, float) / np.linalg.norm(v) for v in V]
    F = [(0, 11, 5), (0, 5, 1), (0, 1, 7), (0, 7, 10), (0, 10, 11), (1, 5, 9), (5, 11, 4),
         (11, 10, 2), (10, 7, 6), (7, 1, 8), (3, 9, 4), (3, 4, 2), (3, 2, 6), (3, 6, 8),
         (3, 8, 9), (4, 9, 5), (2, 4, 11), (6, 2, 10), (8, 6, 7), (9, 8, 1)]
    for _ in range(subdivisions):
        cache = {}

        def mid(i, j):
            key = (min(i, j), max(i, j))
            if key not in cache:
                m = V[i] + V[j]
                V.append(m / np.linalg.norm(m))
                cache[key] = len(V) - 1
            return cache[key]

        nf = []
        for a, b, c in F:
            ab, bc, ca = mid(a, b), mid(b, c), mid(c, a)
            nf += [(a, ab, ca), (b, bc, ab), (c, ca, bc), (ab, bc, ca)]
        F = nf
    return Mesh(np.array(V) * radius + np.asarray(center, float), F, mass=mass)


def _triangulate_polygon(P: np.ndarray) -> list[tuple[int, int, int]]:
    """Ear clipping for a simple counter-clockwise polygon."""
    idx = list(range(len(P)))
    tris = []

    def cross(o, a, b):
        return (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0])

    guard = 0
    while len(idx) > 3 and guard < 10000:
        guard += 1
        for k in range(len(idx)):
            i0, i1, i2 = idx[k - 1], idx[k], idx[(k + 1) % len(idx)]
            a, b, c = P[i0], P[i1], P[i2]
            if cross(a, b, c) <= 1e-15:
                continue
            inside = False
            for j in idx:
                if j in (i0, i1, i2):
                    continue
                p = P[j]
                if cross(a, b, p) >= 0 and cross(b, c, p) >= 0 and cross(c, a, p) >= 0:
                    inside = True
                    break
            if not inside:
                tris.append((i0, i1, i2))
                idx.pop(k)
                break
        else:
            raise ValueError("polygon could not be triangulated")
    tris.append(tuple(idx))
    return tris


def extrude(polygon, height: float, mass: float = 1.0) -> Mesh:
    """Prism over a simple 2D polygon in the xy plane, spanning z in [0, height]."""
    P = np.asarray(polygon, float)
    area = 0.5 * np.sum(P[:, 0] * np.roll(P[:, 1], -1) - np.roll(P[:, 0], -1) * P[:, 1])
    if area < 0:
        P = P[::-1]
    n = len(P)
    V = np.vstack([np.c_[P, np.zeros(n)], np.c_[P, np.full(n, height)]])
    caps = _triangulate_polygon(P)
    F = [(c, b, a) for a, b, c in caps] + [(a + n, b + n, c + n) for a, b, c in caps]
    for i in range(n):
        j = (i + 1) % n
        F += [(i, j, j + n), (i, j + n, i + n)]
    return Mesh(V, F, mass=mass)


def cylinder(radius: float, height: float, segments: int = 48, mass: float = 1.0) -> Mesh:
    ang = np.linspace(0, 2 * np.pi, segments, endpoint=False)
    return extrude(np.c_[radius * np.cos(ang), radius * np.sin(ang)], height, mass=mass)


def _rotate_xz_profile(mesh: Mesh, width: float) -> Mesh:
    # profile was built in xy and extruded along z; map (x, y, z) -> (x, z - width/2, y)
    V = mesh.vertices.copy()
    V = np.c_[V[:, 0], V[:, 2] - width / 2.0, V[:, 1]]
    return Mesh(V, mesh.triangles[:, ::-1], mass=mesh.mass)


def step_block(length: float, width: float, base_height: float, step_height: float,
               step_x: float = 0.0, mass: float = 1.0) -> Mesh:
    """Block whose top face rises by ``step_height`` for x > ``step_x``."""
    L = length / 2.0
    profile = [(-L, 0.0), (L, 0.0), (L, base_height + step_height),
               (step_x, base_height + step_height), (step_x, base_height), (-L, base_height)]
    return _rotate_xz_profile(extrude(profile, width, mass=mass), width)


def profile_block(profile, width: float, mass: float = 1.0) -> Mesh:
    """Extrude an xz profile polygon along y, centered on y=0."""
    return _rotate_xz_profile(extrude(profile, width, mass=mass), width)


def plate_with_hole(size: float, thickness: float, hole_radius: float,
                    segments: int = 64, mass: float = 1.0) -> Mesh:
    """Square plate centered at the origin, top face at z=0, circular through-hole."""
    ang = np.linspace(0, 2 * np.pi, segments, endpoint=False)
    d = np.c_[np.cos(ang), np.sin(ang)]
    inner = hole_radius * d
    outer = d * (size / 2.0) / np.abs(d).max(axis=1, keepdims=True)
    corners = np.array([[1, 1], [-1, 1], [-1, -1], [1, -1]], float) * size / 2.0
    # insert square corners into the outer loop so the boundary is exact
    ring = []
    corner_ang = np.arctan2(corners[:, 1], corners[:, 0]) % (2 * np.pi)
    for i in range(segments):
        ring.append(outer[i])
        a0, a1 = ang[i], ang[(i + 1) % segments] if i + 1 < segments else 2 * np.pi
        for ca, c in zip(corner_ang, corners):
            if a0 < ca < a1:
                ring.append(c)
    outer = np.array(ring)
    no, ni = len(outer), segments
    top_o, top_i = np.c_[outer, np.zeros(no)], np.c_[inner, np.zeros(ni)]
    V = np.vstack([top_o, top_i, top_o - [0, 0, thickness], top_i - [0, 0, thickness]])
    o, i_, bo, bi = 0, no, no + ni, 2 * no + ni
    F = []
    # zip inner and outer loops by angle
    ang_o = np.arctan2(outer[:, 1], outer[:, 0]) % (2 * np.pi)
    ang_i = ang % (2 * np.pi)
    a, b = 0, 0
    while a < no or b < ni:
        na, nb = (a + 1) % no, (b + 1) % ni
        take_outer = b >= ni or (a < no and (ang_o[na] if na else 2 * np.pi) <= (ang_i[nb] if nb else 2 * np.pi))
        if take_outer:
            F.append((o + a, o + na, i_ + b % ni))
            F.append((bo + a, bi + b % ni, bo + na))
            a += 1
        else:
            F.append((o + a % no, i_ + nb, i_ + b))
            F.append((bo + a % no, bi + b, bi + nb))
            b += 1
    for k in range(no):
        k2 = (k + 1) % no
        F += [(o + k, bo + k, bo + k2), (o + k, bo + k2, o + k2)]
    for k in range(ni):
        k2 = (k + 1) % ni
        F += [(i_ + k, i_ + k2, bi + k2), (i_ + k, bi + k2, bi + k)]
    return Mesh(V, F, mass=mass)


def desk_objects() -> dict[str, Mesh]:
    """Ten small procedural objects for desk-scale datasets and benchmarks."""
    L = [(-0.03, 0.0), (0.03, 0.0), (0.03, 0.012), (-0.018, 0.012), (-0.018, 0.045), (-0.03, 0.045)]
    T = [(-0.035, 0.03), (-0.035, 0.042), (0.035, 0.042), (0.035, 0.03), (0.006, 0.03),
         (0.006, 0.0), (-0.006, 0.0), (-0.006, 0.03)]
    wedge = [(-0.035, 0.0), (0.035, 0.0), (-0.035, 0.03)]
    return {
        "cube": box((0.05, 0.05, 0.05), (0.0, 0.0, 0.025)),
        "flat_box": box((0.09, 0.06, 0.02)),
        "tall_box": box((0.03, 0.04, 0.09)),
        "cylinder": cylinder(0.025, 0.06, segments=32),
        "thin_cylinder": cylinder(0.008, 0.08, segments=24),
        "sphere": icosphere(0.03, subdivisions=2),
        "step": step_block(0.08, 0.05, 0.02, 0.0025),
        "l_block": profile_block(L, 0.04),
        "t_block": profile_block(T, 0.04),
        "wedge": profile_block(wedge, 0.05),
    }


def write_desk_objects(out_dir) -> list:
    """Save :func:`desk_objects` as OBJ files; returns the paths in name order."""
    from pathlib import Path

    from .geometry import save_obj

    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = []
    for name, mesh in sorted(desk_objects().items()):
        path = out / f"{name}.obj"
        save_obj(mesh, path)
        paths.append(path)
    return paths
