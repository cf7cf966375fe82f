from __future__ import annotations

import csv

import numpy as np
import pytest
from scipy import stats

from suctiongrasp import robustness
from suctiongrasp.contact import GRAVITY, RingContactModel
from suctiongrasp.geometry import so3_exp
from suctiongrasp.robustness import (PerturbationSpec, RobustnessResult, TrialRecord,
                                     binary_label, disturbing_wrench, export_records,
                                     robust_wrench_resistance, run_trial, sample_friction,
                                     sample_perturbation, trial_rng, wrench_resistance_metric)
from suctiongrasp.seal import CupModel
from suctiongrasp.shapes import extrude

CUP = CupModel()
RING = RingContactModel()
TOP = (np.array([0.0, 0.0, 0.05]), np.array([0.0, 0.0, -1.0]))


def _lam(mesh, grasp, spec, seed=0, **kw):
    return robust_wrench_resistance(CUP, RING, mesh, grasp, spec, seed=seed, **kw)


# ---------------------------------------------------------------- perturbation spec

@pytest.mark.parametrize("kwargs", [dict(friction_std=-1.0), dict(num_samples=0),
                                    dict(threshold=1.5), dict(friction_lower=2.0)])
def test_spec_validation(kwargs):
    with pytest.raises(ValueError):
        PerturbationSpec(**kwargs)


def test_presets():
    assert PerturbationSpec.preset("main") == PerturbationSpec()
    var = PerturbationSpec.preset("main-variance")
    assert var.grasp_translation_std == pytest.approx(np.sqrt(0.001))
    assert var.com_std == pytest.approx(0.05)
    assert PerturbationSpec.preset("supplement").friction_std == 0.001
    quiet = PerturbationSpec.preset("noiseless", num_samples=3)
    assert quiet.num_samples == 3 and quiet.wrench_std == 0.0
    with pytest.raises(ValueError):
        PerturbationSpec.preset("nope")


def test_scaled_multiplies_every_std():
    spec = PerturbationSpec().scaled(2.0)
    assert spec.grasp_rotation_std == 0.2 and spec.com_std == 0.005
    assert spec.friction_mean == 0.5 and spec.mass == 1.0


# ---------------------------------------------------------------- sampling

def test_noiseless_gravity_wrench():
    spec = PerturbationSpec.preset("noiseless")
    pert = sample_perturbation(spec, trial_rng(0, 0))
    w = disturbing_wrench(spec, pert, np.zeros(3), np.zeros(3))
    np.testing.assert_allclose(w[:3], [0.0, 0.0, -GRAVITY])
    np.testing.assert_allclose(pert.grasp_rotation, np.eye(3))
    np.testing.assert_allclose(pert.pose.rotation, np.eye(3))


def test_zero_rotation_vector_is_identity():
    np.testing.assert_array_equal(so3_exp(np.zeros(3)), np.eye(3))


def test_friction_sampler_moments():
    draws = sample_friction(PerturbationSpec(), np.random.default_rng(0), size=100_000)
    assert abs(draws.mean() - 0.5) <= 0.002
    assert draws.min() >= 0.0 and draws.max() <= 1.0
    assert draws.std() == pytest.approx(0.1, rel=0.02)


def test_friction_sampler_truncation_is_respected():
    spec = PerturbationSpec(friction_mean=0.9, friction_std=0.3)
    draws = sample_friction(spec, np.random.default_rng(1), size=20_000)
    assert draws.min() >= 0.0 and draws.max() <= 1.0
    ref = stats.truncnorm((0 - 0.9) / 0.3, (1 - 0.9) / 0.3, loc=0.9, scale=0.3)
    assert stats.kstest(draws, ref.cdf).pvalue > 0.01


def test_perturbation_noise_scales(rng):
    spec = PerturbationSpec()
    perts = [sample_perturbation(spec, np.random.default_rng(i)) for i in range(4000)]
    dp = np.array([p.grasp_translation for p in perts])
    dc = np.array([p.com_offset for p in perts])
    fn = np.array([p.force_noise for p in perts])
    assert dp.std() == pytest.approx(0.001, rel=0.05)
    assert dc.std() == pytest.approx(0.0025, rel=0.05)
    assert fn.std() == pytest.approx(0.01, rel=0.05)
    angles = np.array([np.arccos(np.clip((np.trace(p.grasp_rotation) - 1) / 2, -1, 1))
                       for p in perts])
    # |N(0, s^2 I_3)| follows a Maxwell distribution with scale s
    assert stats.kstest(angles, stats.maxwell(scale=0.1).cdf).pvalue > 0.01


# ---------------------------------------------------------------- estimator

def test_lambda_is_sample_mean(monkeypatch, cube):
    outcomes = [True] * 7 + [False] * 3

    def fake(cup, contact, mesh, p, v, spec, pert, trial=0, *a, **k):
        return TrialRecord(trial, pert.friction, tuple(p), tuple(v), "none", 0.0,
                           outcomes[trial], "none")

    monkeypatch.setattr(robustness, "run_trial", fake)
    res = _lam(cube, TOP, PerturbationSpec(num_samples=10))
    assert res.lam == 0.7 and res.successes == 7 and res.trials == 10


def test_determinism_including_records(cube):
    spec = PerturbationSpec(num_samples=60)
    a, b = _lam(cube, TOP, spec, seed=5), _lam(cube, TOP, spec, seed=5)
    assert a.lam == b.lam
    assert a.records == b.records
    c = _lam(cube, TOP, spec, seed=6)
    assert c.records != a.records


def test_trials_are_schedule_independent(cube):
    spec = PerturbationSpec(num_samples=30)
    full = _lam(cube, TOP, spec, seed=3)
    j = 17
    rec = run_trial(CUP, RING, cube, *TOP, spec, sample_perturbation(spec, trial_rng(3, j)), j)
    assert rec == full.records[j]


def test_flat_cube_top_grasp_is_robust(cube):
    res = _lam(cube, TOP, PerturbationSpec(num_samples=1000), seed=0)
    other = _lam(cube, TOP, PerturbationSpec(num_samples=1000), seed=1)
    assert abs(res.lam - other.lam) <= 0.1
    assert res.lam >= 0.9, f"lambda={res.lam:.3f} reasons={res.reasons}"


def test_fin_grasp_never_seals():
    fin = extrude([(-0.0005, -0.02), (0.0005, -0.02), (0.0005, 0.02), (-0.0005, 0.02)], 0.04)
    res = robust_wrench_resistance(CUP, RING, fin, (np.array([0, 0, 0.04]), np.array([0, 0, -1.0])),
                                   PerturbationSpec(num_samples=50), seed=0)
    assert res.lam == 0.0
    assert "none" not in res.reasons


def test_noiseless_top_grasp_always_succeeds(cube):
    res = _lam(cube, TOP, PerturbationSpec.preset("noiseless", num_samples=5))
    assert res.lam == 1.0
    assert wrench_resistance_metric(CUP, RING, cube, TOP)


def test_trial_leaving_silhouette_counts_as_miss(cube):
    spec = PerturbationSpec.preset("noiseless")
    pert = sample_perturbation(spec, trial_rng(0, 0))
    rec = run_trial(CUP, RING, cube, np.array([0.2, 0.0, 0.05]), np.array([0, 0, -1.0]), spec,
                    pert)
    assert not rec.success and rec.reason == "miss"


def test_sandwich_on_logged_trials(cube):
    edge = (np.array([0.022, 0.0, 0.05]), np.array([0.0, 0.0, -1.0]))
    for grasp in (TOP, edge):
        wr = wrench_resistance_metric(CUP, RING, cube, grasp)
        res = _lam(cube, grasp, PerturbationSpec(num_samples=100))
        if res.lam == 1.0:
            assert wr
        if not wr and all(not r.success for r in res.records):
            assert res.lam == 0.0
        assert res.lam == sum(r.success for r in res.records) / res.trials


def test_estimator_spread_across_seeds(cube):
    J = 100
    lams = np.array([_lam(cube, TOP, PerturbationSpec(num_samples=J), seed=s,
                          keep_records=False).lam for s in range(20)])
    m = lams.mean()
    assert lams.std(ddof=1) <= 1.5 * np.sqrt(m * (1 - m) / J)


def test_records_capped(monkeypatch, cube):
    monkeypatch.setattr(robustness, "MAX_RECORDS", 4)
    res = _lam(cube, TOP, PerturbationSpec(num_samples=5))
    assert res.records == [] and res.trials == 5


# ---------------------------------------------------------------- labels and export

@pytest.mark.parametrize("lam,label", [(0.7, 1), (0.0, 0), (0.5, 1), (0.499, 0)])
def test_binary_label(lam, label):
    assert binary_label(lam, 0.5) == label
    assert binary_label(RobustnessResult(lam, 0, 1), 0.5) == label


def test_export_records_csv(tmp_path, cube):
    res = _lam(cube, TOP, PerturbationSpec(num_samples=8))
    path = tmp_path / "trials.csv"
    export_records(res, path)
    with open(path) as fh:
        rows = list(csv.DictReader(fh))
    assert len(rows) == 8
    assert rows[0].keys() == set(TrialRecord.__dataclass_fields__)
    assert [r["success"] == "True" for r in rows] == [r.success for r in res.records]
    assert len(rows[3]["point"].split()) == 3
