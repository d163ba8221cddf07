import threading
import time

import pytest
from fastapi.testclient import TestClient

from grasptune.finetune import SessionConfig, run_session
from grasptune.harness.api import HumanRewardChannel, SessionBridge, build_app
from grasptune.simenv import BiasedOraclePrior, GraspEnvironment, load_task


@pytest.fixture()
def spec():
    return load_task("pick-cup")


def start_human_session(spec, episodes=3, timeout_s=None, on_timeout="wait"):
    """Run a tiny human-mode session on a background thread."""
    cfg = SessionConfig(
        episodes=episodes, warmup=min(2, episodes), elites=min(2, episodes), seed=0
    )
    bridge = SessionBridge(
        session_config=cfg,
        task_id=spec.task_id,
        display_name=spec.display_name,
        reward_mode="human",
    )
    env = GraspEnvironment(spec, seed=0)
    channel = HumanRewardChannel(bridge, timeout_s=timeout_s, on_timeout=on_timeout)
    result = {}

    def target():
        result["log"] = run_session(
            env, BiasedOraclePrior(spec), channel, cfg,
            on_episode=bridge.add_record,
        )
        bridge.finish("aborted" if "aborted" in result["log"].meta else "finished")

    thread = threading.Thread(target=target, daemon=True)
    thread.start()
    return bridge, thread, result


def wait_for_pending(client, index, timeout=5.0):
    deadline = time.time() + timeout
    while time.time() < deadline:
        doc = client.get("/api/episode/pending").json()
        pending = doc["pending"]
        if pending is not None and pending["index"] == index:
            return pending
        time.sleep(0.01)
    raise AssertionError(f"episode {index} never became pending")


def test_reward_round_trip_unblocks_session(spec):
    bridge, thread, result = start_human_session(spec, episodes=3)
    client = TestClient(build_app(bridge))

    pending = wait_for_pending(client, 1)
    assert set(pending) >= {"index", "schematic", "xi", "eps", "executed"}
    assert len(pending["eps"]) == 22
    assert {"box_lo", "object_center", "contact", "wrist_dir", "closures"} <= set(
        pending["schematic"]
    )

    resp = client.post("/api/episode/1/reward", json={"reward": 0.7})
    assert resp.status_code == 200

    wait_for_pending(client, 2)
    state = client.get("/api/session").json()
    assert state["state"] == "waiting_reward"
    assert state["episode_count"] == 1
    assert state["pending_index"] == 2

    for index in (2, 3):
        wait_for_pending(client, index)
        client.post(f"/api/episode/{index}/reward", json={"reward": 0.25})
    thread.join(timeout=5.0)
    assert not thread.is_alive()
    log = result["log"]
    assert [r.reward for r in log.episodes] == [0.7, 0.25, 0.25]
    assert log.episodes[0].success  # 0.7 >= pick-cup threshold


def test_out_of_range_reward_rejected_and_never_logged(spec):
    bridge, thread, result = start_human_session(spec, episodes=1)
    client = TestClient(build_app(bridge))
    wait_for_pending(client, 1)

    assert client.post("/api/episode/1/reward", json={"reward": 1.5}).status_code == 422
    assert client.post("/api/episode/1/reward", json={"reward": -0.1}).status_code == 422
    assert client.get("/api/session").json()["episode_count"] == 0

    # Closed-interval endpoints are accepted.
    assert client.post("/api/episode/1/reward", json={"reward": 1.0}).status_code == 200
    thread.join(timeout=5.0)
    assert [r.reward for r in result["log"].episodes] == [1.0]


def test_duplicate_and_unknown_rewards(spec):
    bridge, thread, result = start_human_session(spec, episodes=2)
    client = TestClient(build_app(bridge))
    wait_for_pending(client, 1)

    assert client.post("/api/episode/9/reward", json={"reward": 0.5}).status_code == 404
    assert client.post("/api/episode/1/reward", json={"reward": 0.5}).status_code == 200
    wait_for_pending(client, 2)
    # Episode 1 is complete now: a second submission is a duplicate.
    assert client.post("/api/episode/1/reward", json={"reward": 0.9}).status_code == 409
    assert client.post("/api/episode/2/reward", json={"reward": 0.4}).status_code == 200
    thread.join(timeout=5.0)
    assert [r.reward for r in result["log"].episodes] == [0.5, 0.4]


def test_history_and_distribution_series(spec):
    bridge, thread, result = start_human_session(spec, episodes=4)
    client = TestClient(build_app(bridge))
    for index in range(1, 5):
        wait_for_pending(client, index)
        client.post(f"/api/episode/{index}/reward", json={"reward": 0.2 * index})
    thread.join(timeout=5.0)

    history = client.get("/api/history").json()
    assert [r["index"] for r in history["records"]] == [1, 2, 3, 4]
    page = client.get("/api/history", params={"start": 3}).json()
    assert [r["index"] for r in page["records"]] == [3, 4]

    dist = client.get("/api/distribution").json()
    assert dist["warmup"] == 2
    snapshots = dist["snapshots"]
    assert [s["episode"] for s in snapshots] == [1, 2, 3, 4]
    # First refit lands at episode warmup + 1 = 3.
    assert snapshots[0]["std"] == snapshots[1]["std"]
    assert snapshots[2]["std"] != snapshots[1]["std"]

    state = client.get("/api/session").json()
    assert state["state"] == "finished"
    assert state["schema_version"] == 1


def test_api_hides_environment_internals(spec):
    bridge, thread, result = start_human_session(spec, episodes=1)
    client = TestClient(build_app(bridge))
    pending = wait_for_pending(client, 1)
    flat = str(pending) + str(client.get("/api/session").json())
    assert "hidden" not in flat
    assert "bias" not in flat
    # The prior parameters are visible, the optimum is not: the xi payload
    # must differ from the hidden optimum by exactly the (secret) bias.
    client.post("/api/episode/1/reward", json={"reward": 0.5})
    thread.join(timeout=5.0)
    obs_pose = result["log"].episodes[0]
    assert "object_pose" not in obs_pose.to_dict()


def test_reward_timeout_aborts_with_partial_log(spec):
    bridge, thread, result = start_human_session(
        spec, episodes=3, timeout_s=0.05, on_timeout="abort"
    )
    thread.join(timeout=5.0)
    assert not thread.is_alive()
    assert "aborted" in result["log"].meta
    assert len(result["log"].episodes) == 0
    assert bridge.snapshot()["state"] == "aborted"


def test_reward_timeout_wait_keeps_session_alive(spec):
    bridge, thread, result = start_human_session(
        spec, episodes=1, timeout_s=0.02, on_timeout="wait"
    )
    client = TestClient(build_app(bridge))
    wait_for_pending(client, 1)
    time.sleep(0.1)  # several timeouts elapse; session must still wait
    assert thread.is_alive()
    client.post("/api/episode/1/reward", json={"reward": 0.6})
    thread.join(timeout=5.0)
    assert [r.reward for r in result["log"].episodes] == [0.6]
