import json

import numpy as np
import pytest

from grasptune.errors import ConfigError, InsufficientTrajectoryError, PreconditionError
from grasptune.kinematics import (
    FINGERS,
    HandLayout,
    ManoPose,
    WristDelta,
    WristPose,
    apply_deltas,
    dump_wrist_poses,
    extract_post_grasp,
    load_hand_layout,
    load_wrist_poses,
    mano_joint_rotation,
    retarget_mano,
)
from grasptune.rotation import Rotation


@pytest.fixture(scope="module")
def layout() -> HandLayout:
    return load_hand_layout()


def test_layout_loads_and_validates(layout):
    assert set(layout.axes) == set(FINGERS)
    assert layout.coupling_ratio == 1.0
    for finger in FINGERS:
        for lo, hi in layout.dof_limits(finger):
            assert lo < hi


def test_layout_rejects_non_orthogonal_axes(tmp_path, layout):
    doc = json.loads((load_hand_layout.__globals__["_DEFAULT_LAYOUT"]).read_text())
    doc["fingers"]["index"]["mcp"]["spread_axis"] = [0.0, 0.0, 1.0]  # equals bend
    bad = tmp_path / "layout.json"
    bad.write_text(json.dumps(doc))
    with pytest.raises(ConfigError):
        load_hand_layout(bad)


def test_zero_pose_retargets_to_zero(layout):
    out = retarget_mano(ManoPose.zeros(), layout)
    assert np.allclose(out.joint_angles, 0.0)


def test_single_bend_extracted_exactly(layout):
    joints = np.zeros((15, 3))
    mcp_idx = layout.mano_joint_order["index"][0]
    joints[mcp_idx] = np.asarray(layout.axes["index"]["mcp"].bend) * (np.pi / 4)
    out = retarget_mano(ManoPose(np.zeros(3), joints), layout)
    index = out.finger("index")
    assert index[1] == pytest.approx(np.pi / 4, abs=1e-9)
    others = np.delete(out.joint_angles, 4 * FINGERS.index("index") + 1)
    assert np.allclose(others, 0.0, atol=1e-9)


def test_bend_clamped_to_limit(layout):
    joints = np.zeros((15, 3))
    mcp_idx = layout.mano_joint_order["index"][0]
    joints[mcp_idx] = np.asarray(layout.axes["index"]["mcp"].bend) * 3.0
    out = retarget_mano(ManoPose(np.zeros(3), joints), layout)
    assert out.finger("index")[1] == pytest.approx(layout.limits["index"]["mcp_bend"][1])


def test_retarget_round_trip_within_limits(layout):
    rng = np.random.default_rng(4)
    for _ in range(200):
        joints = np.zeros((15, 3))
        expected = np.zeros(16)
        for fi, finger in enumerate(FINGERS):
            ax = layout.axes[finger]
            lims = layout.limits[finger]
            spread = rng.uniform(*lims["spread"]) * 0.9
            bend = rng.uniform(*lims["mcp_bend"]) * 0.9
            pip = rng.uniform(*lims["pip_bend"]) * 0.9
            mcp_idx, pip_idx, dip_idx = layout.mano_joint_order[finger]
            joints[mcp_idx] = mano_joint_rotation(ax["mcp"], bend=bend, spread=spread).to_rotvec()
            joints[pip_idx] = mano_joint_rotation(ax["pip"], bend=pip).to_rotvec()
            joints[dip_idx] = mano_joint_rotation(
                ax["dip"], bend=layout.coupling_ratio * pip
            ).to_rotvec()
            expected[4 * fi : 4 * fi + 4] = (spread, bend, pip, layout.coupling_ratio * pip)
        out = retarget_mano(ManoPose(np.zeros(3), joints), layout)
        assert np.allclose(out.joint_angles, expected, atol=1e-6)


def test_coupling_holds_exactly(layout):
    rng = np.random.default_rng(5)
    for _ in range(50):
        joints = rng.normal(scale=0.4, size=(15, 3))
        out = retarget_mano(ManoPose(np.zeros(3), joints), layout)
        for fi in range(4):
            pip, dip = out.joint_angles[4 * fi + 2], out.joint_angles[4 * fi + 3]
            assert dip == pytest.approx(layout.coupling_ratio * pip, abs=1e-9)


def test_retarget_respects_limits(layout):
    rng = np.random.default_rng(6)
    for _ in range(50):
        joints = rng.normal(scale=1.0, size=(15, 3))
        norms = np.linalg.norm(joints, axis=1, keepdims=True)
        joints = np.where(norms >= np.pi, joints / norms * 3.0, joints)
        out = retarget_mano(ManoPose(np.zeros(3), joints), layout)
        for fi, finger in enumerate(FINGERS):
            for angle, (lo, hi) in zip(out.finger(finger), layout.dof_limits(finger)):
                assert lo - 1e-12 <= angle <= hi + 1e-12


def test_mano_pose_validation():
    with pytest.raises(PreconditionError):
        ManoPose(np.zeros(3), np.full((15, 3), 2.0))  # magnitude > pi
    with pytest.raises(PreconditionError):
        ManoPose(np.array([np.nan, 0, 0]), np.zeros((15, 3)))


# --------------------------------------------------------------------------
# post-grasp deltas
# --------------------------------------------------------------------------


def smooth_trajectory(rng, n=41):
    poses = []
    pos = np.zeros(3)
    rot = Rotation.identity()
    for _ in range(n):
        poses.append(WristPose(pos.copy(), rot))
        pos = pos + rng.normal(scale=0.01, size=3)
        rot = rot @ Rotation.from_rotvec(rng.normal(scale=0.05, size=3))
    return poses


def test_identical_poses_give_identity_deltas():
    poses = [WristPose.identity()] * 41
    deltas = extract_post_grasp(poses)
    assert len(deltas) == 40
    for d in deltas:
        assert np.allclose(d.translation, 0.0, atol=1e-12)
        assert d.rotation.angle() < 1e-12


def test_constant_velocity_deltas():
    poses = [
        WristPose(np.array([0.01 * t, 0.0, 0.0]), Rotation.identity()) for t in range(41)
    ]
    for d in extract_post_grasp(poses):
        assert np.allclose(d.translation, [0.01, 0.0, 0.0], atol=1e-12)


def test_short_trajectory_rejected():
    with pytest.raises(InsufficientTrajectoryError):
        extract_post_grasp([WristPose.identity()] * 30)


def test_round_trip_on_random_smooth_trajectory():
    rng = np.random.default_rng(7)
    for _ in range(20):
        poses = smooth_trajectory(rng)
        deltas = extract_post_grasp(poses)
        replayed = apply_deltas(poses[0], deltas)
        for expect, got in zip(poses[1:], replayed):
            assert np.linalg.norm(expect.position - got.position) < 1e-9
            assert expect.orientation.quat_distance(got.orientation) < 1e-9


def test_single_delta_from_origin():
    delta = WristDelta(np.array([0.01, 0.0, 0.0]), Rotation.identity())
    out = apply_deltas(WristPose.identity(), [delta])
    assert np.allclose(out[0].position, [0.01, 0.0, 0.0])


def test_identity_deltas_keep_pose_constant():
    start = WristPose(np.array([0.1, 0.2, 0.3]), Rotation.from_axis_angle([0, 1, 0], 0.4))
    identity = [WristDelta(np.zeros(3), Rotation.identity())] * 10
    for pose in apply_deltas(start, identity):
        assert np.allclose(pose.position, start.position, atol=1e-12)
        assert pose.orientation.quat_distance(start.orientation) < 1e-12


def test_deltas_are_frame_relative():
    # Facing +y (90 deg about z), a forward delta moves the pose along +y.
    start = WristPose(np.zeros(3), Rotation.from_axis_angle([0, 0, 1], np.pi / 2))
    out = apply_deltas(start, [WristDelta(np.array([0.1, 0.0, 0.0]), Rotation.identity())])
    assert np.allclose(out[0].position, [0.0, 0.1, 0.0], atol=1e-12)


def test_pose_jsonl_round_trip(tmp_path):
    rng = np.random.default_rng(8)
    poses = smooth_trajectory(rng, n=45)
    path = tmp_path / "poses.jsonl"
    dump_wrist_poses(poses, path)
    loaded = load_wrist_poses(path)
    assert len(loaded) == 45
    for a, b in zip(poses, loaded):
        assert np.allclose(a.position, b.position)
        assert a.orientation.quat_distance(b.orientation) < 1e-12
