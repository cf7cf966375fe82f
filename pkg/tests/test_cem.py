from __future__ import annotations

import numpy as np
import pytest

from suctiongrasp.cem import (CandidateConstraints, CandidateSet, cem_plan, estimate_normals,
                              from_angles, point_cloud, sample_candidates_from_depth, segment,
                              to_angles)
from suctiongrasp.metrics import QualityMetric, Scene
from suctiongrasp.sensor import CameraIntrinsics, camera_from_spherical, render_depth
from suctiongrasp.shapes import box

INTR = CameraIntrinsics(fx=300.0, fy=300.0, cx=99.5, cy=79.5, width=200, height=160)


@pytest.fixture(scope="module")
def cube_scene():
    cube = box((0.05, 0.05, 0.05), (0.0, 0.0, 0.025))
    cam = camera_from_spherical(0.6, 0.5, 0.15)
    img = render_depth(cube, None, cam, INTR)
    pts = point_cloud(img, cam, INTR)
    cloud = pts[segment(pts)]
    return cube, cam, img, cloud


def test_angles_round_trip(rng):
    v = rng.standard_normal((100, 3))
    v /= np.linalg.norm(v, axis=1, keepdims=True)
    np.testing.assert_allclose(from_angles(to_angles(v)), v, atol=1e-12)
    np.testing.assert_allclose(to_angles(np.array([[0.0, 0.0, -1.0]]))[0, 0], 0.0)


def test_approach_cone():
    c = CandidateConstraints(max_approach_angle=np.deg2rad(30))
    t = np.deg2rad([0, 29.9, 30.1, 90, 180])
    v = np.c_[np.sin(t), np.zeros(5), -np.cos(t)]
    np.testing.assert_array_equal(c.approach_ok(v), [True, True, False, False, False])


def test_count_zero_gives_empty_set(cube_scene, rng):
    _, cam, img, _ = cube_scene
    cands = sample_candidates_from_depth(img, cam, 0, rng, INTR)
    assert len(cands) == 0


def test_empty_segment_raises(rng):
    cam = camera_from_spherical(0.6, 0.0, 0.0)
    img = render_depth(None, None, cam, INTR)
    with pytest.raises(ValueError):
        sample_candidates_from_depth(img, cam, 10, rng, INTR)


def test_flat_cube_top_normals_are_vertical(cube_scene, rng):
    _, cam, img, _ = cube_scene
    cands = sample_candidates_from_depth(img, cam, 300, rng, INTR)
    top = cands.points[:, 2] > 0.05 - 1e-6
    # keep samples whose 5x5 window lies entirely on the top face
    footprint = 0.6 / INTR.fx
    interior = np.all(np.abs(cands.points[:, :2]) < 0.025 - 3 * footprint, axis=1)
    sel = top & interior
    assert sel.sum() > 50
    tilt = np.degrees(np.arccos(np.clip(-cands.approaches[sel, 2], -1, 1)))
    assert tilt.max() < 5.0


def test_normals_match_analytic_plane(rng):
    # tilted plane through the origin seen from above
    n = np.array([0.2, -0.1, 1.0])
    n /= np.linalg.norm(n)
    cam = camera_from_spherical(0.6, 0.0, 0.0)
    rays = INTR.pixel_rays() @ cam.rotation.T
    t = -(cam.translation @ n) / (rays @ n)
    pts = cam.translation + t[..., None] * rays
    normals = estimate_normals(pts, np.ones(pts.shape[:2], bool))
    inner = normals[5:-5, 5:-5].reshape(-1, 3)
    np.testing.assert_allclose(np.abs(inner @ n), 1.0, atol=1e-9)


def test_zero_cone_keeps_only_vertical(cube_scene, rng):
    _, cam, img, _ = cube_scene
    cons = CandidateConstraints(max_approach_angle=0.0)
    cands = sample_candidates_from_depth(img, cam, 200, rng, INTR, cons)
    assert len(cands) > 0
    assert np.all(-cands.approaches[:, 2] >= 1 - 1e-12)


def test_candidates_satisfy_constraints(cube_scene, rng):
    _, cam, img, _ = cube_scene
    cons = CandidateConstraints(max_approach_angle=np.deg2rad(20))
    cands = sample_candidates_from_depth(img, cam, 200, rng, INTR, cons)
    assert np.all(cons.approach_ok(cands.approaches))
    assert np.all(segment(cands.points, cons))
    # pixels point back at the sampled points
    pts = point_cloud(img, cam, INTR)
    np.testing.assert_allclose(pts[cands.pixels[:, 1], cands.pixels[:, 0]], cands.points)


# ---------------------------------------------------------------- planner

def _lookup_quality(points, values):
    table = {tuple(p): q for p, q in zip(points, values)}
    return lambda grasps: [table[tuple(p)] for p, _ in grasps]


def test_one_round_returns_argmax(rng):
    P = np.c_[rng.uniform(-0.1, 0.1, (50, 2)), np.zeros(50)]
    V = np.tile([0.0, 0.0, -1.0], (50, 1))
    q = rng.permutation(50).astype(float)
    res = cem_plan(CandidateSet(P, V), _lookup_quality(P, q), rng, iterations=1,
                   elite_fraction=1.0)
    np.testing.assert_array_equal(res.grasp[0], P[np.argmax(q)])
    assert res.quality == q.max()


def test_converges_to_target_on_plane():
    rng = np.random.default_rng(7)
    g = np.linspace(-0.1, 0.1, 201)
    gx, gy = np.meshgrid(g, g)
    surface = np.c_[gx.ravel(), gy.ravel(), np.zeros(gx.size)]
    target = np.array([0.031, -0.047, 0.0])
    # exhaustive-grid oracle: the best reachable surface point
    oracle = surface[np.argmin(np.linalg.norm(surface - target, axis=1))]
    P = surface[rng.choice(len(surface), 100, replace=False)]
    V = np.tile([0.0, 0.0, -1.0], (100, 1))
    quality = lambda G: [-np.linalg.norm(p - target) for p, _ in G]
    res = cem_plan(CandidateSet(P, V), quality, rng, surface=surface, iterations=3)
    assert np.linalg.norm(res.grasp[0] - oracle) <= 0.002


def _pc_plan(scene_cloud, cam, img, seed, scale=1.0, iterations=3):
    rng = np.random.default_rng(seed)
    cands = sample_candidates_from_depth(img, cam, 100, rng, INTR)
    metric = QualityMetric("planarity_centroid")
    scene = Scene(cloud=scene_cloud)
    return cem_plan(CandidateSet(cands.points, cands.approaches),
                    lambda G: scale * metric.batch(G, scene), rng, surface=scene_cloud,
                    iterations=iterations)


def test_repeatable_across_seeds(cube_scene):
    _, cam, img, cloud = cube_scene
    a = _pc_plan(cloud, cam, img, 0)
    b = _pc_plan(cloud, cam, img, 1)
    assert np.linalg.norm(a.grasp[0] - b.grasp[0]) <= 0.005


def test_positive_scaling_leaves_plan_unchanged(cube_scene):
    _, cam, img, cloud = cube_scene
    a = _pc_plan(cloud, cam, img, 3)
    b = _pc_plan(cloud, cam, img, 3, scale=7.5)
    np.testing.assert_array_equal(a.grasp[0], b.grasp[0])
    np.testing.assert_array_equal(a.grasp[1], b.grasp[1])
    assert b.quality == pytest.approx(7.5 * a.quality)


def test_result_satisfies_constraints_and_history_monotone(cube_scene):
    _, cam, img, cloud = cube_scene
    res = _pc_plan(cloud, cam, img, 11, iterations=4)
    cons = CandidateConstraints()
    assert cons.approach_ok(res.grasp[1])[0]
    assert segment(res.grasp[0][None], cons)[0]
    # re-anchored onto the observed surface
    assert np.min(np.linalg.norm(cloud - res.grasp[0], axis=1)) == 0.0
    assert len(res.history) == 5
    assert all(b >= a for a, b in zip(res.history, res.history[1:]))


def test_empty_candidates_rejected(rng):
    with pytest.raises(ValueError):
        cem_plan(CandidateSet(np.zeros((0, 3)), np.zeros((0, 3))), lambda G: [], rng)
