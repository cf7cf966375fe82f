"""Monte-Carlo robust wrench resistance and binary robustness labels."""
from __future__ import annotations

import csv
import logging
from dataclasses import asdict, dataclass, field, replace

import numpy as np
from scipy.stats import truncnorm

from .contact import gravity_wrench, resist_at_contact
from .geometry import Mesh, RigidTransform, ray_intersect, so3_exp
from .seal import CupModel, SealConfig, check_seal

logger = logging.getLogger(__name__)

MAX_RECORDS = 10_000


@dataclass(frozen=True)
class PerturbationSpec:
    """Noise model for one robustness evaluation.

    Every ``*_std`` is a per-axis standard deviation. The defaults take the
    noise magnitudes (0.001 m, 0.1 rad, 0.0025 m, 0.01 N) as standard
    deviations; the ``main-variance`` preset takes them as variances instead.
    """
    friction_mean: float = 0.5
    friction_std: float = 0.1
    friction_lower: float = 0.0
    friction_upper: float = 1.0
    grasp_translation_std: float = 0.001
    grasp_rotation_std: float = 0.1
    pose_translation_std: float = 0.001
    pose_rotation_std: float = 0.1
    com_std: float = 0.0025
    wrench_std: float = 0.01
    mass: float = 1.0
    num_samples: int = 100
    threshold: float = 0.5

    def __post_init__(self):
        stds = (self.friction_std, self.grasp_translation_std, self.grasp_rotation_std,
                self.pose_translation_std, self.pose_rotation_std, self.com_std, self.wrench_std)
        if min(stds) < 0:
            raise ValueError("noise standard deviations must be non-negative")
        if self.num_samples < 1:
            raise ValueError("num_samples must be at least 1")
        if not 0.0 <= self.threshold <= 1.0:
            raise ValueError("threshold must lie in [0, 1]")
        if self.friction_lower > self.friction_upper:
            raise ValueError("empty friction interval")

    @classmethod
    def preset(cls, name: str, **overrides) -> "PerturbationSpec":
        if name == "main":
            spec = cls()
        elif name == "main-variance":
            spec = cls(grasp_translation_std=float(np.sqrt(0.001)),
                       grasp_rotation_std=float(np.sqrt(0.1)),
                       pose_translation_std=float(np.sqrt(0.001)),
                       pose_rotation_std=float(np.sqrt(0.1)),
                       com_std=float(np.sqrt(0.0025)), wrench_std=float(np.sqrt(0.01)))
        elif name == "supplement":
            spec = cls(friction_std=0.001)
        elif name == "noiseless":
            spec = cls(friction_std=0.0, grasp_translation_std=0.0, grasp_rotation_std=0.0,
                       pose_translation_std=0.0, pose_rotation_std=0.0, com_std=0.0,
                       wrench_std=0.0)
        else:
            raise ValueError(f"unknown perturbation preset {name!r}")
        return replace(spec, **overrides)

    def scaled(self, factor: float) -> "PerturbationSpec":
        """All noise standard deviations multiplied by ``factor``."""
        return replace(
            self,
            friction_std=self.friction_std * factor,
            grasp_translation_std=self.grasp_translation_std * factor,
            grasp_rotation_std=self.grasp_rotation_std * factor,
            pose_translation_std=self.pose_translation_std * factor,
            pose_rotation_std=self.pose_rotation_std * factor,
            com_std=self.com_std * factor,
            wrench_std=self.wrench_std * factor,
        )


@dataclass
class Perturbation:
    friction: float
    grasp_translation: np.ndarray
    grasp_rotation: np.ndarray      # 3x3
    pose: RigidTransform            # object pose perturbation, applied about the COM
    com_offset: np.ndarray
    force_noise: np.ndarray


def sample_friction(spec: PerturbationSpec, rng: np.random.Generator, size=None):
    if spec.friction_std == 0:
        value = np.clip(spec.friction_mean, spec.friction_lower, spec.friction_upper)
        return value if size is None else np.full(size, value)
    a = (spec.friction_lower - spec.friction_mean) / spec.friction_std
    b = (spec.friction_upper - spec.friction_mean) / spec.friction_std
    return truncnorm.rvs(a, b, loc=spec.friction_mean, scale=spec.friction_std,
                         size=size, random_state=rng)


def sample_perturbation(spec: PerturbationSpec, rng: np.random.Generator) -> Perturbation:
    """One joint draw; the draw order is fixed so results are reproducible."""
    mu = float(sample_friction(spec, rng))
    dp = rng.normal(0.0, spec.grasp_translation_std, 3)
    dR = so3_exp(rng.normal(0.0, spec.grasp_rotation_std, 3))
    pose_t = rng.normal(0.0, spec.pose_translation_std, 3)
    pose_R = so3_exp(rng.normal(0.0, spec.pose_rotation_std, 3))
    dc = rng.normal(0.0, spec.com_std, 3)
    fn = rng.normal(0.0, spec.wrench_std, 3)
    return Perturbation(mu, dp, dR, RigidTransform(pose_R, pose_t), dc, fn)


def disturbing_wrench(spec: PerturbationSpec, pert: Perturbation, com, origin,
                      down=(0.0, 0.0, -1.0)) -> np.ndarray:
    """Gravity on the perturbed COM plus force noise, about ``origin``."""
    return gravity_wrench(spec.mass, np.asarray(com) + pert.com_offset, origin, down,
                          force_noise=pert.force_noise)


@dataclass
class TrialRecord:
    trial: int
    friction: float
    point: tuple
    approach: tuple
    seal: str
    residual: float
    success: bool
    reason: str


@dataclass
class RobustnessResult:
    lam: float
    successes: int
    trials: int
    records: list = field(default_factory=list)

    @property
    def reasons(self) -> dict:
        out: dict = {}
        for r in self.records:
            out[r.reason] = out.get(r.reason, 0) + 1
        return out


def _reanchor(mesh: Mesh, p, v):
    """First surface point along ``v`` on the line through ``p``, entering from outside."""
    standoff = 2.0 * mesh.extent + float(np.linalg.norm(p - mesh.vertices.mean(axis=0)))
    hit = ray_intersect(mesh, p - standoff * v, v)
    return None if hit is None else hit.point


def run_trial(cup: CupModel, contact, mesh: Mesh, p, v, spec: PerturbationSpec,
              pert: Perturbation, trial: int = 0, seal_config: SealConfig = SealConfig(),
              down=(0.0, 0.0, -1.0)) -> TrialRecord:
    """Seal and wrench resistance for one perturbed grasp and state.

    The object pose perturbation is applied to the grasp instead of the mesh:
    a rigid motion T of the object about its COM is equivalent to moving the
    gripper by T^-1 and rotating gravity by R^T in the object frame.
    """
    com = mesh.center_of_mass
    p_hat = np.asarray(p, float) + pert.grasp_translation
    v_hat = pert.grasp_rotation @ np.asarray(v, float)
    R, t = pert.pose.rotation, pert.pose.translation
    # inverse of x -> R (x - com) + com + t
    p_obj = R.T @ (p_hat - com - t) + com
    v_obj = R.T @ v_hat
    v_obj /= np.linalg.norm(v_obj)
    down_obj = R.T @ np.asarray(down, float)
    point = _reanchor(mesh, p_obj, v_obj)
    if point is None:
        return TrialRecord(trial, pert.friction, tuple(p_obj), tuple(v_obj), "miss",
                           np.inf, False, "miss")
    seal = check_seal(cup, point, v_obj, mesh, seal_config)
    if not seal.feasible:
        return TrialRecord(trial, pert.friction, tuple(point), tuple(v_obj),
                           seal.failure_reason, np.inf, False, seal.failure_reason)
    w = gravity_wrench(spec.mass, com + pert.com_offset, point, down_obj,
                       force_noise=R.T @ pert.force_noise)
    res = resist_at_contact(contact.with_friction(pert.friction), point, v_obj, w)
    return TrialRecord(trial, pert.friction, tuple(point), tuple(v_obj), "none",
                       res.residual, res.resists, "none" if res.resists else "wrench")


def trial_rng(seed: int, trial: int) -> np.random.Generator:
    return np.random.default_rng([seed, trial])


def robust_wrench_resistance(cup: CupModel, contact, mesh: Mesh, grasp, spec: PerturbationSpec,
                             seed: int = 0, seal_config: SealConfig = SealConfig(),
                             down=(0.0, 0.0, -1.0), keep_records: bool = True) -> RobustnessResult:
    """Sample mean of seal-and-resist over ``spec.num_samples`` perturbed trials.

    Trial ``j`` draws from a generator seeded by ``(seed, j)``, so any subset
    of trials can be recomputed on its own.
    """
    p, v = grasp
    J = spec.num_samples
    successes = 0
    records = []
    for j in range(J):
        pert = sample_perturbation(spec, trial_rng(seed, j))
        rec = run_trial(cup, contact, mesh, p, v, spec, pert, j, seal_config, down)
        successes += int(rec.success)
        if keep_records and J <= MAX_RECORDS:
            records.append(rec)
    return RobustnessResult(successes / J, successes, J, records)


def wrench_resistance_metric(cup: CupModel, contact, mesh: Mesh, grasp, mass: float = 1.0,
                             seal_config: SealConfig = SealConfig(),
                             down=(0.0, 0.0, -1.0)) -> bool:
    """Noiseless seal-and-resist test against gravity on the nominal COM."""
    spec = PerturbationSpec.preset("noiseless", mass=mass, num_samples=1)
    pert = sample_perturbation(spec, trial_rng(0, 0))
    return run_trial(cup, contact, mesh, grasp[0], grasp[1], spec, pert, 0, seal_config,
                     down).success


def binary_label(result: RobustnessResult | float, threshold: float = 0.5) -> int:
    lam = result.lam if isinstance(result, RobustnessResult) else float(result)
    return int(lam >= threshold)


def export_records(result: RobustnessResult, path) -> None:
    """Write per-trial records as CSV."""
    names = list(TrialRecord.__dataclass_fields__)
    with open(path, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=names)
        writer.writeheader()
        for rec in result.records:
            row = asdict(rec)
            row["point"] = " ".join(f"{x:.9g}" for x in rec.point)
            row["approach"] = " ".join(f"{x:.9g}" for x in rec.approach)
            writer.writerow(row)

