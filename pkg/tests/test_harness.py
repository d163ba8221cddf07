import json
from pathlib import Path

import numpy as np
import pytest

from grasptune.errors import ConfigError
from grasptune.finetune import load_session, rank_elites
from grasptune.harness.cli import main
from grasptune.harness.config import load_run_config
from grasptune.harness.curves import trailing_mean
from grasptune.harness.evaluation import half_closed_pose, run_eval
from grasptune.kinematics import FINGERS, load_hand_layout
from grasptune.policy import load_policy
from grasptune.simenv import BiasedOraclePrior, load_task


def write_config(path: Path, **overrides) -> Path:
    doc = {
        "schema_version": 1,
        "task": "pick-cup",
        "reward_mode": "oracle",
        "seed": 11,
        "output_dir": str(path / "out"),
    }
    doc.update(overrides)
    cfg = path / "run.json"
    cfg.write_text(json.dumps(doc))
    return cfg


# --------------------------------------------------------------------------
# config
# --------------------------------------------------------------------------


def test_config_loads_with_defaults(tmp_path):
    cfg = load_run_config(write_config(tmp_path))
    assert cfg.task.task_id == "pick-cup"
    assert cfg.session.episodes == 30
    assert cfg.session.seed == 11
    assert cfg.policy.seed == 11
    assert cfg.reward_mode == "oracle"


def test_config_rejects_bad_values(tmp_path):
    with pytest.raises(ConfigError):
        load_run_config(write_config(tmp_path, reward_mode="telepathy"))
    with pytest.raises(ConfigError):
        load_run_config(write_config(tmp_path, session={"sigma_mu": -1.0}))
    with pytest.raises(ConfigError):
        load_run_config(write_config(tmp_path, task="no-such-task"))
    with pytest.raises(ConfigError):
        load_run_config(tmp_path / "missing.json")


def test_config_bind_parse(tmp_path):
    cfg = load_run_config(write_config(tmp_path, bind="0.0.0.0:9000"))
    assert cfg.bind_parts() == ("0.0.0.0", 9000)


def test_cli_exit_code_2_on_bad_config(tmp_path, capsys):
    bad = tmp_path / "bad.json"
    bad.write_text("{")
    assert main(["finetune", "--config", str(bad)]) == 2
    err = json.loads(capsys.readouterr().err.strip())
    assert err["error"] == "config"


# --------------------------------------------------------------------------
# evaluation protocol
# --------------------------------------------------------------------------


def test_half_closed_pose_is_limit_midpoints():
    layout = load_hand_layout()
    pose = half_closed_pose(layout)
    k = 0
    for finger in FINGERS:
        for lo, hi in layout.dof_limits(finger):
            assert pose[k] == pytest.approx(0.5 * (lo + hi))
            k += 1


def test_eval_trials_must_be_positive():
    spec = load_task("pick-cup")
    with pytest.raises(ConfigError):
        run_eval(spec, "prior-only", BiasedOraclePrior(spec), trials=0)


def test_eval_deft_requires_policy():
    spec = load_task("pick-cup")
    with pytest.raises(ConfigError):
        run_eval(spec, "deft", BiasedOraclePrior(spec), trials=2)


def test_eval_uses_fresh_instances_per_trial():
    spec = load_task("pick-cup")
    report = run_eval(spec, "prior-only", BiasedOraclePrior(spec), trials=8, seed=0)
    assert len({r.instance_id for r in report.records}) == 8
    # Deterministic given the seed.
    again = run_eval(spec, "prior-only", BiasedOraclePrior(spec), trials=8, seed=0)
    assert [r.reward for r in report.records] == [r.reward for r in again.records]


# --------------------------------------------------------------------------
# curves
# --------------------------------------------------------------------------


def test_trailing_mean_window_math():
    values = [1.0, 2.0, 3.0, 4.0, 5.0, 6.0]
    ma = trailing_mean(values, window=5)
    assert ma[4] == pytest.approx(np.mean(values[:5]))  # episode 5 = mean of 1..5
    assert ma[5] == pytest.approx(np.mean(values[1:6]))
    assert ma[0] == 1.0


# --------------------------------------------------------------------------
# CLI pipeline
# --------------------------------------------------------------------------


@pytest.fixture(scope="module")
def pipeline(tmp_path_factory):
    root = tmp_path_factory.mktemp("pipeline")
    cfg_path = write_config(root, session={"episodes": 30})
    assert main(["finetune", "--config", str(cfg_path)]) == 0
    return root


def test_finetune_writes_exact_episode_lines(pipeline):
    lines = (pipeline / "out" / "episodes.jsonl").read_text().splitlines()
    assert len(lines) == 30
    init_std = json.loads(lines[0])["dist_std"]
    assert all(json.loads(line)["dist_std"] == init_std for line in lines[:10])
    assert json.loads(lines[10])["dist_std"] != init_std


def test_finetune_refuses_overwrite(pipeline):
    cfg_path = pipeline / "run.json"
    assert main(["finetune", "--config", str(cfg_path)]) == 2


def test_rerun_is_byte_identical_without_timestamps(tmp_path):
    outs = []
    for sub in ("a", "b"):
        d = tmp_path / sub
        d.mkdir()
        cfg = write_config(d)
        assert main(["finetune", "--config", str(cfg)]) == 0
        stripped = []
        for line in (d / "out" / "episodes.jsonl").read_text().splitlines():
            doc = json.loads(line)
            doc.pop("ts_start")
            doc.pop("ts_end")
            stripped.append(json.dumps(doc, separators=(",", ":")))
        outs.append("\n".join(stripped))
    assert outs[0] == outs[1]


def test_replay_verifies_log(pipeline):
    assert main(["replay", "--log", str(pipeline / "out")]) == 0


def test_replay_detects_tampering(pipeline, tmp_path):
    src = (pipeline / "out" / "episodes.jsonl").read_text().splitlines()
    doc = json.loads(src[4])
    doc["residual"][0] += 0.01
    src[4] = json.dumps(doc, separators=(",", ":"))
    tampered = tmp_path / "tampered"
    tampered.mkdir()
    (tampered / "session.json").write_text((pipeline / "out" / "session.json").read_text())
    (tampered / "episodes.jsonl").write_text("\n".join(src) + "\n")
    assert main(["replay", "--log", str(tampered)]) == 3


def test_train_policy_selects_rank_elites(pipeline, tmp_path):
    out = tmp_path / "policy.json"
    assert main([
        "train-policy", "--log", str(pipeline / "out"), "--out", str(out),
        "--epochs", "50",
    ]) == 0
    weights = load_policy(out)
    log = load_session(pipeline / "out")
    positions = rank_elites(log, 10)
    chosen = np.array([log.episodes[p].residual for p in positions])
    # Normalization statistics expose exactly which residuals were used.
    assert np.allclose(weights.target_norm.mean, chosen.mean(axis=0), atol=1e-12)


def test_train_policy_rejects_short_log(tmp_path):
    d = tmp_path / "short"
    d.mkdir()
    cfg = write_config(d, session={"episodes": 5, "warmup": 2, "elites": 2})
    assert main(["finetune", "--config", str(cfg)]) == 0
    assert main([
        "train-policy", "--log", str(d / "out"), "--out", str(tmp_path / "w.json"),
    ]) == 3


def test_export_curves_matches_log(pipeline, tmp_path):
    out = tmp_path / "curves.csv"
    assert main(["export-curves", "--log", str(pipeline / "out"), "--out", str(out)]) == 0
    lines = out.read_text().splitlines()
    assert lines[0] == "session,episode,reward,success,reward_ma,success_ma"
    assert len(lines) == 31
    log = load_session(pipeline / "out")
    rewards = [r.reward for r in log.episodes]
    ma = trailing_mean(rewards, 5)
    for i, line in enumerate(lines[1:]):
        cells = line.split(",")
        assert int(cells[1]) == i + 1
        assert float(cells[2]) == rewards[i]
        assert float(cells[4]) == pytest.approx(ma[i], rel=1e-12)
    # Window-5 average at episode 5 is the mean of episodes 1..5.
    assert float(lines[5].split(",")[4]) == pytest.approx(np.mean(rewards[:5]), rel=1e-12)


def test_export_curves_corrupt_line_reports_number(pipeline, tmp_path, capsys):
    broken = tmp_path / "broken"
    broken.mkdir()
    (broken / "session.json").write_text((pipeline / "out" / "session.json").read_text())
    lines = (pipeline / "out" / "episodes.jsonl").read_text().splitlines()
    lines[6] = "definitely-not-json"
    (broken / "episodes.jsonl").write_text("\n".join(lines) + "\n")
    assert main(["export-curves", "--log", str(broken), "--out", str(tmp_path / "x.csv")]) == 3
    err = json.loads(capsys.readouterr().err.strip())
    assert "7" in err["message"]


def test_eval_cli_methods(pipeline, tmp_path):
    policy = tmp_path / "p.json"
    assert main([
        "train-policy", "--log", str(pipeline / "out"), "--out", str(policy),
        "--epochs", "300",
    ]) == 0
    report = tmp_path / "report.json"
    assert main([
        "eval", "--task", "pick-cup", "--method", "deft", "--policy", str(policy),
        "--trials", "3", "--seeds", "2", "--out", str(report),
    ]) == 0
    doc = json.loads(report.read_text())
    assert doc["total_trials"] == 6
    assert len(doc["reports"]) == 2
    assert main(["eval", "--task", "pick-cup", "--method", "deft", "--trials", "3"]) == 2


def test_embedding_mode_runs(tmp_path):
    cfg = write_config(
        tmp_path, reward_mode="embedding",
        session={"episodes": 12, "warmup": 4, "elites": 4},
    )
    assert main(["finetune", "--config", str(cfg)]) == 0
    log = load_session(tmp_path / "out")
    assert len(log.episodes) == 12
    assert all(0.0 <= r.reward <= 1.0 for r in log.episodes)
