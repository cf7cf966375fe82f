"""Suction contact wrench models and QP-based wrench resistance.

Wrenches are 6-vectors (force, torque) in newtons and newton-meters. The
contact frame has its z axis along the approach direction, pointing into the
object, so a positive ``f_z`` pushes the object away from the cup and the
vacuum pulls with ``-V``.
"""
from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .geometry import RigidTransform, skew
from .qp import QPError, solve_qp

GRAVITY = 9.81
RESISTANCE_TOL = 1e-10


def contact_frame(p, v) -> RigidTransform:
    """Contact frame at ``p`` with z along the unit approach ``v``.

    The x axis is world x projected onto the tangent plane, or world y when
    ``v`` is within acos(0.99) of world x.
    """
    z = np.asarray(v, float)
    z = z / np.linalg.norm(z)
    ref = np.array([1.0, 0.0, 0.0])
    if abs(z @ ref) > 0.99:
        ref = np.array([0.0, 1.0, 0.0])
    x = ref - (ref @ z) * z
    x /= np.linalg.norm(x)
    y = np.cross(z, x)
    return RigidTransform(np.column_stack([x, y, z]), np.asarray(p, float))


@dataclass(frozen=True)
class LinearConstraints:
    """Half-spaces ``A @ alpha <= b`` over basis-wrench magnitudes."""
    A: np.ndarray
    b: np.ndarray
    labels: tuple[str, ...] = ()

    def satisfied(self, alpha, tol: float = 1e-8) -> bool:
        return bool(np.all(self.A @ alpha - self.b <= tol * (1.0 + np.abs(self.b))))


@dataclass(frozen=True)
class WrenchBasis:
    W: np.ndarray
    branches: tuple[LinearConstraints, ...]


@dataclass(frozen=True)
class RingContactModel:
    """Compliant suction ring: alpha = (f_x, f_y, f_z, tau_x, tau_y, tau_z).

    The tangent torque limit is pi * (radius / kappa_length_unit) * kappa / sqrt(2)
    in N*m. ``kappa_length_unit`` is the length, in meters, in which the ring
    radius enters that bound; the default 1e-3 measures it in millimeters and
    1.0 measures it in meters.
    """
    radius: float = 0.0075
    mu: float = 0.5
    kappa: float = 0.005
    vacuum_force: float = 250.0
    kappa_length_unit: float = 1e-3

    def __post_init__(self):
        if self.radius <= 0 or self.vacuum_force <= 0 or self.mu < 0 or self.kappa < 0:
            raise ValueError("invalid ring contact parameters")
        if self.kappa_length_unit <= 0:
            raise ValueError("kappa_length_unit must be positive")

    @property
    def material_torque_limit(self) -> float:
        return float(np.pi * (self.radius / self.kappa_length_unit) * self.kappa / np.sqrt(2.0))

    def basis(self) -> WrenchBasis:
        return WrenchBasis(np.eye(6), (ring_constraints(self),))

    @property
    def torque_scale(self) -> float:
        return self.radius

    def with_friction(self, mu: float) -> "RingContactModel":
        return replace(self, mu=mu)


def ring_constraints(model: RingContactModel) -> LinearConstraints:
    """Eleven linear half-spaces; the normal force is f_z + V."""
    mu, r, V = model.mu, model.radius, model.vacuum_force
    s3 = np.sqrt(3.0)
    tau_e = model.material_torque_limit
    rows, rhs, labels = [], [], []
    # sqrt(3)|c| <= k mu (f_z + V)  ->  +-sqrt(3) c - k mu f_z <= k mu V
    for idx, k, name in ((0, 1.0, "f_x"), (1, 1.0, "f_y"), (5, r, "tau_z")):
        for sign in (1.0, -1.0):
            row = np.zeros(6)
            row[idx] = sign * s3
            row[2] = -k * mu
            rows.append(row)
            rhs.append(k * mu * V)
            labels.append(f"friction {'+' if sign > 0 else '-'}{name}")
    for idx, name in ((3, "tau_x"), (4, "tau_y")):
        for sign in (1.0, -1.0):
            row = np.zeros(6)
            row[idx] = sign
            rows.append(row)
            rhs.append(tau_e)
            labels.append(f"material {'+' if sign > 0 else '-'}{name}")
    row = np.zeros(6)
    row[2] = -1.0
    rows.append(row)
    rhs.append(V)
    labels.append("suction")
    return LinearConstraints(np.array(rows), np.array(rhs), tuple(labels))


@dataclass(frozen=True)
class SoftFingerContactModel:
    """Point contact with tangential and torsional friction: alpha = (f_x, f_y, f_z, tau_z)."""
    mu: float = 0.5
    gamma: float = 0.005
    num_facets: int = 8
    torque_scale: float = 0.0075

    def basis(self) -> WrenchBasis:
        W = np.zeros((6, 4))
        W[0, 0] = W[1, 1] = W[2, 2] = W[5, 3] = 1.0
        return WrenchBasis(W, soft_finger_constraints(self.mu, self.gamma, self.num_facets))

    def with_friction(self, mu: float) -> "SoftFingerContactModel":
        return replace(self, mu=mu)


def soft_finger_constraints(mu: float, gamma: float, num_facets: int = 8):
    """Two convex branches, f_z >= 0 and f_z <= 0, of the soft-finger set.

    The friction cone is replaced by an inscribed pyramid whose facet normals
    sit at angles 2*pi*k/num_facets; both friction and torsion are bounded by
    |f_z| on each branch.
    """
    if mu < 0 or gamma < 0:
        raise ValueError("mu and gamma must be non-negative")
    apothem = np.cos(np.pi / num_facets)
    branches = []
    for sign in (1.0, -1.0):
        rows, labels = [], []
        for k in range(num_facets):
            phi = 2 * np.pi * k / num_facets
            rows.append([np.cos(phi), np.sin(phi), -sign * mu * apothem, 0.0])
            labels.append(f"friction facet {k}")
        rows.append([0.0, 0.0, -sign * gamma, 1.0])
        rows.append([0.0, 0.0, -sign * gamma, -1.0])
        rows.append([0.0, 0.0, -sign, 0.0])
        labels += ["torsion +", "torsion -", "normal sign"]
        A = np.array(rows)
        branches.append(LinearConstraints(A, np.zeros(len(A)), tuple(labels)))
    return tuple(branches)


@dataclass(frozen=True)
class GraspMap:
    G: np.ndarray
    adjoint: np.ndarray
    basis: WrenchBasis

    @classmethod
    def from_contact(cls, contact_pose: RigidTransform, basis: WrenchBasis) -> "GraspMap":
        A = contact_pose.adjoint()
        return cls(A @ basis.W, A, basis)


@dataclass
class ResistanceResult:
    residual: float
    alpha: np.ndarray
    resists: bool
    converged: bool = True
    branch: int = 0
    extra: dict = field(default_factory=dict)


def wrench_resistance(grasp_map: GraspMap, w, torque_scale: float,
                      tol: float = RESISTANCE_TOL, max_iter: int = 200) -> ResistanceResult:
    """Minimum of ||S (G alpha + w)||^2 over the admissible magnitudes.

    ``S`` divides torque rows by ``torque_scale`` so the residual is in N^2.
    """
    w = np.asarray(w, float)
    S = np.ones(6)
    S[3:] = 1.0 / torque_scale
    Gs = grasp_map.G * S[:, None]
    ws = w * S
    H = 2.0 * Gs.T @ Gs
    g = 2.0 * Gs.T @ ws
    best = None
    for k, cons in enumerate(grasp_map.basis.branches):
        x0 = np.zeros(Gs.shape[1])
        try:
            res = solve_qp(H, g, cons.A, cons.b, x0=x0, max_iter=max_iter)
        except QPError:
            continue
        eps = float(np.sum((Gs @ res.x + ws) ** 2))
        if best is None or eps < best[0]:
            best = (eps, res.x, res.converged, k)
    if best is None:
        return ResistanceResult(np.inf, np.zeros(grasp_map.G.shape[1]), False, False)
    eps, alpha, converged, k = best
    return ResistanceResult(eps, alpha, bool(converged and eps <= tol), converged, k)


def gravity_wrench(mass: float, com, origin, down, force_noise=None) -> np.ndarray:
    """Gravity (plus optional force noise) on ``com`` as a wrench about ``origin``."""
    f = mass * GRAVITY * np.asarray(down, float) / np.linalg.norm(down)
    if force_noise is not None:
        f = f + force_noise
    tau = np.cross(np.asarray(com, float) - np.asarray(origin, float), f)
    return np.concatenate([f, tau])


def resist_at_contact(model, p, v, w) -> ResistanceResult:
    """Resistance of a single suction contact at (p, v) to wrench ``w`` taken about ``p``.

    The grasp map uses the contact frame's rotation only, so wrenches are
    referenced to the contact origin.
    """
    frame = contact_frame(p, v)
    local = RigidTransform(frame.rotation, np.zeros(3))
    gm = GraspMap.from_contact(local, model.basis())
    return wrench_resistance(gm, w, model.torque_scale)
