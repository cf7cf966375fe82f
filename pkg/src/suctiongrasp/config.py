"""TOML run configuration with a fixed schema; unknown keys are errors."""
from __future__ import annotations

import math
import re
import sys
from dataclasses import dataclass, field, replace
from pathlib import Path

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from .cem import CandidateConstraints
from .contact import RingContactModel, SoftFingerContactModel
from .dataset import DatasetConfig, StateDistribution
from .robustness import PerturbationSpec
from .seal import CupModel, SealConfig
from .sensor import CameraIntrinsics, NoiseModel


class ConfigError(ValueError):
    def __init__(self, message: str, line: int | None = None):
        self.line = line
        super().__init__(f"line {line}: {message}" if line else message)


_num = (int, float)
SCHEMA: dict[str, dict[str, type | tuple]] = {
    "cup": {"n": int, "radius_m": _num, "height_m": _num, "strain_limit": _num},
    "seal": {"samples_per_spring": int, "hole_grid": int, "collision_steps": int},
    "contact": {"model": str, "mu": _num, "kappa": _num, "kappa_length_unit_m": _num,
                "vacuum_force_n": _num, "gamma": _num, "friction_facets": int},
    "perturbation": {"preset": str, "friction_mean": _num, "friction_std": _num,
                     "grasp_translation_std": _num, "grasp_rotation_std": _num,
                     "pose_translation_std": _num, "pose_rotation_std": _num,
                     "com_std": _num, "wrench_std": _num, "mass_kg": _num,
                     "num_samples": int, "threshold": _num},
    "camera": {"fx": _num, "fy": _num, "cx": _num, "cy": _num, "width": int, "height": int},
    "noise": {"enabled": bool, "gamma_shape": _num, "gamma_scale": _num, "sigma_m": _num,
              "bandwidth_px": _num},
    "cem": {"iterations": int, "num_candidates": int, "elite_fraction": _num,
            "gmm_components": int, "normal_window": int, "max_approach_angle_deg": _num},
    "dataset": {"grasps_per_object": int, "images_per_pose": int, "max_stable_poses": int,
                "thumbnail_side": int, "visibility_tolerance_m": _num, "shard_size": int,
                "audit_fraction": _num},
    "state": {"preset": str, "planar_half_extent_m": _num, "camera_radius_m": list,
              "camera_polar_rad": list},
}
TOP_LEVEL = {"seed": int, "log_level": str}


@dataclass(frozen=True)
class CEMConfig:
    iterations: int = 3
    num_candidates: int = 100
    elite_fraction: float = 0.25
    gmm_components: int = 3
    normal_window: int = 5


@dataclass(frozen=True)
class RunConfig:
    seed: int = 0
    log_level: str = "INFO"
    cup: CupModel = field(default_factory=CupModel)
    seal: SealConfig = field(default_factory=SealConfig)
    contact: object = field(default_factory=RingContactModel)
    perturbation: PerturbationSpec = field(default_factory=PerturbationSpec)
    camera: CameraIntrinsics = field(default_factory=CameraIntrinsics)
    noise: NoiseModel = field(default_factory=NoiseModel)
    cem: CEMConfig = field(default_factory=CEMConfig)
    constraints: CandidateConstraints = field(default_factory=CandidateConstraints)
    dataset: DatasetConfig = field(default_factory=DatasetConfig)

    def dataset_config(self, seed: int | None = None) -> DatasetConfig:
        return replace(self.dataset, seed=self.seed if seed is None else seed, cup=self.cup,
                       seal=self.seal, contact=self.contact, perturbation=self.perturbation,
                       camera=self.camera, noise=self.noise, constraints=self.constraints)


def _line_of(text: str, section: str | None, key: str) -> int | None:
    """Best-effort line number of ``key`` (inside ``[section]`` when given)."""
    lines = text.splitlines()
    start = 0
    if section is not None:
        for i, line in enumerate(lines):
            if re.match(rf"\s*\[\s*{re.escape(section)}\s*\]", line):
                start = i + 1
                break
    for i in range(start, len(lines)):
        if section is not None and i > start and re.match(r"\s*\[", lines[i]):
            break
        if re.match(rf"\s*{re.escape(key)}\s*=", lines[i]):
            return i + 1
    return None


def _section_line(text: str, section: str) -> int | None:
    for i, line in enumerate(text.splitlines()):
        if re.match(rf"\s*\[\s*{re.escape(section)}\s*[\].]", line):
            return i + 1
    return None


def _check_types(data: dict, text: str) -> None:
    for key, value in data.items():
        if key in TOP_LEVEL:
            if not isinstance(value, TOP_LEVEL[key]) or isinstance(value, bool):
                raise ConfigError(f"'{key}' must be {TOP_LEVEL[key].__name__}", _line_of(text, None, key))
            continue
        if key not in SCHEMA:
            raise ConfigError(f"unknown section or key '{key}'", _line_of(text, None, key)
                              or _section_line(text, key))
        if not isinstance(value, dict):
            raise ConfigError(f"'{key}' must be a table", _line_of(text, None, key))
        for sub, v in value.items():
            expected = SCHEMA[key].get(sub)
            line = _line_of(text, key, sub)
            if expected is None:
                raise ConfigError(f"unknown key '{key}.{sub}'", line)
            is_bool = isinstance(v, bool)
            if expected is bool:
                ok = is_bool
            else:
                ok = isinstance(v, expected) and not is_bool
            if not ok:
                raise ConfigError(f"'{key}.{sub}' has the wrong type", line)


def parse_config(text: str) -> RunConfig:
    try:
        data = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        m = re.search(r"line (\d+)", str(exc))
        raise ConfigError(f"malformed TOML: {exc}", int(m.group(1)) if m else None) from None
    _check_types(data, text)
    try:
        return _build(data)
    except (ValueError, TypeError) as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(f"invalid value: {exc}") from None


def load_config(path) -> RunConfig:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config: {exc}") from None
    return parse_config(text)


def _build(data: dict) -> RunConfig:
    cfg = RunConfig(seed=data.get("seed", 0), log_level=data.get("log_level", "INFO"))
    c = data.get("cup", {})
    cup = CupModel(n=c.get("n", 8), radius=float(c.get("radius_m", 0.0075)),
                   height=float(c.get("height_m", 0.01)),
                   strain_limit=float(c.get("strain_limit", 0.10)))
    s = data.get("seal", {})
    seal = SealConfig(**s)
    k = data.get("contact", {})
    model = k.get("model", "ring")
    if model == "ring":
        contact = RingContactModel(radius=cup.radius, mu=float(k.get("mu", 0.5)),
                                   kappa=float(k.get("kappa", 0.005)),
                                   vacuum_force=float(k.get("vacuum_force_n", 250.0)),
                                   kappa_length_unit=float(k.get("kappa_length_unit_m", 1e-3)))
    elif model == "soft_finger":
        contact = SoftFingerContactModel(mu=float(k.get("mu", 0.5)),
                                         gamma=float(k.get("gamma", 0.005)),
                                         num_facets=int(k.get("friction_facets", 8)),
                                         torque_scale=cup.radius)
    else:
        raise ConfigError(f"contact.model must be 'ring' or 'soft_finger', not {model!r}")
    p = dict(data.get("perturbation", {}))
    preset = p.pop("preset", "main")
    renames = {"mass_kg": "mass"}
    pert = PerturbationSpec.preset(preset, **{renames.get(a, a): b for a, b in p.items()})
    camera = CameraIntrinsics(**data.get("camera", {}))
    n = data.get("noise", {})
    if n.get("enabled", True):
        noise = NoiseModel(alpha_shape=float(n.get("gamma_shape", 1000.0)),
                           alpha_scale=float(n.get("gamma_scale", 0.001)),
                           sigma=float(n.get("sigma_m", 0.005)),
                           bandwidth=float(n.get("bandwidth_px", math.sqrt(2.0))))
    else:
        noise = NoiseModel.none()
    e = dict(data.get("cem", {}))
    max_angle = e.pop("max_approach_angle_deg", 60.0)
    cem = CEMConfig(**e)
    constraints = CandidateConstraints(max_approach_angle=math.radians(max_angle))
    st = data.get("state", {})
    state = StateDistribution.preset(st.get("preset", "main"))
    state = replace(state,
                    planar_half_extent=float(st.get("planar_half_extent_m", state.planar_half_extent)),
                    camera_radius=tuple(st.get("camera_radius_m", state.camera_radius)),
                    camera_polar=tuple(st.get("camera_polar_rad", state.camera_polar)))
    d = dict(data.get("dataset", {}))
    d_renames = {"visibility_tolerance_m": "visibility_tolerance"}
    dataset = DatasetConfig(state=state, **{d_renames.get(a, a): b for a, b in d.items()})
    return replace(cfg, cup=cup, seal=seal, contact=contact, perturbation=pert, camera=camera,
                   noise=noise, cem=cem, constraints=constraints, dataset=dataset)
