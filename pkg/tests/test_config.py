from __future__ import annotations

import math

import numpy as np
import pytest

from suctiongrasp.config import ConfigError, RunConfig, load_config, parse_config
from suctiongrasp.contact import RingContactModel, SoftFingerContactModel


def test_empty_config_is_defaults():
    cfg = parse_config("")
    assert cfg == RunConfig()
    assert cfg.contact.vacuum_force == 250.0 and cfg.contact.kappa == 0.005
    assert cfg.perturbation.num_samples == 100
    assert cfg.cem.iterations == 3 and cfg.cem.gmm_components == 3
    assert cfg.constraints.max_approach_angle == pytest.approx(math.pi / 3)


def test_full_config_is_applied():
    cfg = parse_config("""
seed = 9
log_level = "DEBUG"
[cup]
radius_m = 0.01
height_m = 0.012
[contact]
mu = 0.7
vacuum_force_n = 100
kappa_length_unit_m = 1.0
[perturbation]
preset = "supplement"
num_samples = 20
mass_kg = 0.5
[noise]
enabled = false
[cem]
iterations = 5
max_approach_angle_deg = 30
[dataset]
grasps_per_object = 12
visibility_tolerance_m = 0.002
[state]
preset = "supplement"
camera_radius_m = [0.6, 0.65]
""")
    assert cfg.seed == 9 and cfg.log_level == "DEBUG"
    assert cfg.cup.radius == 0.01
    assert isinstance(cfg.contact, RingContactModel)
    assert cfg.contact.radius == 0.01 and cfg.contact.mu == 0.7
    assert cfg.contact.material_torque_limit == pytest.approx(np.pi * 0.01 * 0.005 / np.sqrt(2))
    assert cfg.perturbation.friction_std == 0.001
    assert cfg.perturbation.num_samples == 20 and cfg.perturbation.mass == 0.5
    assert cfg.noise.alpha_shape is None and cfg.noise.sigma == 0.0
    assert cfg.cem.iterations == 5
    assert cfg.constraints.max_approach_angle == pytest.approx(math.pi / 6)
    assert cfg.dataset.grasps_per_object == 12 and cfg.dataset.visibility_tolerance == 0.002
    assert cfg.dataset.state.camera_radius == (0.6, 0.65)
    assert cfg.dataset.state.camera_polar == pytest.approx((0.05 * np.pi, 0.1 * np.pi))
    dcfg = cfg.dataset_config()
    assert dcfg.seed == 9 and dcfg.perturbation == cfg.perturbation and dcfg.cup == cfg.cup


def test_soft_finger_contact():
    cfg = parse_config('[contact]\nmodel = "soft_finger"\ngamma = 0.002\n')
    assert isinstance(cfg.contact, SoftFingerContactModel)
    assert cfg.contact.gamma == 0.002


@pytest.mark.parametrize("text,line", [
    ("seed = 1\n[cup]\nradius_m = 'big'\n", 3),
    ("[cup]\nn = 8\nwidth = 3\n", 3),
    ("seed = 1\n[robot]\narm = 1\n", 2),
    ("seed = 'x'\n", 1),
    ("[noise]\nenabled = 1\n", 2),
    ("[cup]\nn = 8\nradius_m = = 3\n", 3),
])
def test_errors_carry_line_numbers(text, line):
    with pytest.raises(ConfigError) as info:
        parse_config(text)
    assert info.value.line == line
    assert str(info.value).startswith(f"line {line}:")


def test_bool_is_not_a_number():
    with pytest.raises(ConfigError):
        parse_config("[cup]\nn = true\n")


def test_invalid_values_rejected():
    with pytest.raises(ConfigError):
        parse_config("[perturbation]\nnum_samples = 0\n")
    with pytest.raises(ConfigError):
        parse_config('[contact]\nmodel = "magnet"\n')
    with pytest.raises(ConfigError):
        parse_config('[perturbation]\npreset = "loud"\n')


def test_load_config(tmp_path):
    path = tmp_path / "run.toml"
    path.write_text("seed = 4\n")
    assert load_config(path).seed == 4
    with pytest.raises(ConfigError):
        load_config(tmp_path / "missing.toml")
