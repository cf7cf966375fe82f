from __future__ import annotations

import csv
import io
import json

import numpy as np
import pytest

from suctiongrasp.cli import main
from suctiongrasp.geometry import save_obj
from suctiongrasp.shapes import box

SMALL = """
seed = 3
[camera]
fx = 260.0
fy = 260.0
cx = 79.5
cy = 59.5
width = 160
height = 120
[perturbation]
num_samples = 30
[dataset]
grasps_per_object = 30
images_per_pose = 1
max_stable_poses = 1
"""


@pytest.fixture
def workdir(tmp_path):
    save_obj(box((0.05, 0.05, 0.05), (0.0, 0.0, 0.025)), tmp_path / "cube.obj")
    (tmp_path / "small.toml").write_text(SMALL)
    return tmp_path


@pytest.mark.parametrize("cmd", [[], ["analyze"], ["render"], ["plan"], ["dataset"],
                                 ["dataset", "generate"], ["dataset", "verify"],
                                 ["dataset", "stats"], ["plotdata"]])
def test_help_exits_zero(cmd, capsys):
    assert main(cmd + ["--help"]) == 0
    assert "usage:" in capsys.readouterr().out


def test_usage_errors_exit_two(workdir, capsys):
    assert main([]) == 2
    assert main(["analyze"]) == 2
    assert main(["analyze", str(workdir / "cube.obj"), "--grasp", "1", "2"]) == 2
    assert main(["analyze", str(workdir / "cube.obj")]) == 2          # neither --grasp nor --sample
    assert "error:" in capsys.readouterr().err


def test_bad_config_reports_line(workdir, capsys):
    (workdir / "bad.toml").write_text("seed = 1\n[cup]\nradius_m = 'wide'\n")
    code = main(["analyze", str(workdir / "cube.obj"), "--config", str(workdir / "bad.toml"),
                 "--grasp", "0", "0", "0.05", "0", "0", "-1"])
    assert code == 2
    assert "line 3" in capsys.readouterr().err


def test_missing_mesh_is_runtime_error(workdir, capsys):
    assert main(["analyze", str(workdir / "nope.obj"), "--sample", "3"]) == 1
    assert "error:" in capsys.readouterr().err


def test_analyze_top_center(workdir, capsys):
    out = workdir / "report.json"
    rec = workdir / "trials.csv"
    code = main(["analyze", str(workdir / "cube.obj"), "--config", str(workdir / "small.toml"),
                 "--grasp", "0", "0", "0.05", "0", "0", "-1", "--json", str(out),
                 "--records", str(rec)])
    assert code == 0
    text = capsys.readouterr().out
    assert " ok " in text
    report = json.loads(out.read_text())
    assert len(report) == 1
    assert report[0]["seal"] is True and report[0]["resists"] is True
    assert 0.0 <= report[0]["lam"] <= 1.0
    with open(rec) as fh:
        assert len(list(csv.DictReader(fh))) == 30


def test_analyze_metric_ranks_descending(workdir, capsys):
    out = workdir / "ranked.json"
    code = main(["analyze", str(workdir / "cube.obj"), "--sample", "8", "--no-robustness",
                 "--metric", "pc3d", "--json", str(out)])
    assert code == 0
    scores = [r["score"] for r in json.loads(out.read_text())]
    assert len(scores) == 8
    assert scores == sorted(scores, reverse=True)
    assert "lambda" not in capsys.readouterr().out


def test_analyze_edge_fails_seal(workdir):
    out = workdir / "edge.json"
    main(["analyze", str(workdir / "cube.obj"), "--no-robustness", "--json", str(out),
          "--grasp", "0.025", "0.025", "0.05", "0", "0", "-1"])
    row = json.loads(out.read_text())[0]
    assert row["seal"] is False and row["failure_reason"]
    assert row["resists"] is False


def _render(workdir, prefix, *extra):
    return main(["render", str(workdir / "cube.obj"), "--config", str(workdir / "small.toml"),
                 "--out", str(workdir / prefix), "--radius", "0.6", "--polar", "0.1", *extra])


def test_render_then_plan(workdir, capsys):
    assert _render(workdir, "scene") == 0
    for suffix in (".depth", ".png", ".camera.json", ".obj"):
        assert (workdir / f"scene{suffix}").exists()
    capsys.readouterr()
    code = main(["plan", "--depth", str(workdir / "scene.depth"),
                 "--camera", str(workdir / "scene.camera.json"),
                 "--config", str(workdir / "small.toml"), "--out", str(workdir / "plan.json")])
    assert code == 0
    plan = json.loads(capsys.readouterr().out)
    assert plan == json.loads((workdir / "plan.json").read_text())
    # the planned point is on the top face and the approach points down into it
    assert plan["p"][2] == pytest.approx(0.05, abs=1e-6)
    assert plan["v"][2] < -0.5
    u, v = plan["pixel"]
    assert 0 <= u < 160 and 0 <= v < 120


def test_plan_mesh_metric_requires_mesh(workdir):
    _render(workdir, "scene")
    code = main(["plan", "--depth", str(workdir / "scene.depth"),
                 "--camera", str(workdir / "scene.camera.json"), "--metric", "spring_stretch",
                 "--config", str(workdir / "small.toml")])
    assert code == 2


def test_same_seed_reproduces_outputs(workdir, capsys):
    _render(workdir, "a", "--noise")
    _render(workdir, "b", "--noise")
    assert (workdir / "a.depth").read_bytes() == (workdir / "b.depth").read_bytes()
    _render(workdir, "c", "--noise", "--seed", "99")
    assert (workdir / "a.depth").read_bytes() != (workdir / "c.depth").read_bytes()
    plans = []
    for _ in range(2):
        capsys.readouterr()
        main(["plan", "--depth", str(workdir / "a.depth"),
              "--camera", str(workdir / "a.camera.json"), "--config", str(workdir / "small.toml")])
        plans.append(capsys.readouterr().out)
    assert plans[0] == plans[1]


def test_dataset_commands(workdir, capsys):
    objs = workdir / "objs"
    objs.mkdir()
    (workdir / "cube.obj").rename(objs / "cube.obj")
    out = workdir / "ds"
    cfg = str(workdir / "small.toml")
    assert main(["dataset", "generate", "--objects", str(objs), "--out", str(out),
                 "--config", cfg]) == 0
    assert "tuples in" in capsys.readouterr().out
    assert main(["dataset", "verify", "--out", str(out), "--audit-fraction", "0.2"]) == 0
    assert "checksums: ok" in capsys.readouterr().out
    assert main(["dataset", "stats", "--out", str(out)]) == 0
    assert "cube" in capsys.readouterr().out

    assert main(["plotdata", str(out)]) == 0
    captured = capsys.readouterr()
    assert captured.out.startswith("tau,precision,recall,attempt_rate,success_rate")
    assert captured.err.startswith("AP ")

    shard = sorted(out.glob("shard_*.bin"))[0]
    raw = bytearray(shard.read_bytes())
    raw[len(raw) // 2] ^= 0xFF
    shard.write_bytes(bytes(raw))
    assert main(["dataset", "verify", "--out", str(out)]) == 1
    assert "FAILED" in capsys.readouterr().out


def test_plotdata_csv(tmp_path, capsys):
    src = tmp_path / "scores.csv"
    src.write_text("score,lam,label\n0.9,0.1,1\n0.5,0.9,0\n0.2,0.3,1\n")
    assert main(["plotdata", str(src), "--out", str(tmp_path / "pr.csv")]) == 0
    ap = float(capsys.readouterr().err.split()[1])
    # ranked by the score column: hit, miss, hit
    assert ap == pytest.approx(0.5 * 1.0 + 0.5 * (0.5 + 2 / 3) / 2, abs=1e-6)
    rows = list(csv.reader(io.StringIO((tmp_path / "pr.csv").read_text())))
    assert len(rows) == 4
    np.testing.assert_allclose([float(x) for x in rows[1]], [0.9, 1.0, 0.5, 1 / 3, 1.0])


def test_plotdata_rejects_bad_csv(tmp_path):
    src = tmp_path / "bad.csv"
    src.write_text("x,y\n1,2\n")
    assert main(["plotdata", str(src)]) == 2
    src.write_text("score,label\n")
    assert main(["plotdata", str(src)]) == 2
