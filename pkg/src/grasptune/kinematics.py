"""Hand-pose retargeting and post-grasp wrist trajectories.

A detected human hand pose (wrist orientation plus 15 joint axis-angle
rotations) is mapped onto a 16-DOF four-fingered hand: per finger a
side-to-side angle and a forward angle at the base joint, plus coupled
middle/tip bends. Anatomical angles are extracted with the swing-twist
decomposition along per-joint layout axes; the twist component is not
actuated and is discarded (logged for diagnostics).

Joint rotations follow the convention

    joint_rotation = rot(twist_axis, t) @ rot(bend_axis, b) @ rot(spread_axis, s)

(spread applied first). Extraction peels spread, then bend, then twist, which
recovers pure bend/spread constructions exactly.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .errors import ConfigError, InsufficientTrajectoryError, PreconditionError
from .rotation import Rotation, swing_twist

log = logging.getLogger(__name__)

FINGERS = ("thumb", "index", "middle", "ring")
JOINTS = ("mcp", "pip", "dip")
POST_GRASP_STEPS = 40

_DEFAULT_LAYOUT = Path(__file__).parent / "data" / "hand_layout.json"


@dataclass(frozen=True)
class ManoPose:
    """Human hand pose: wrist axis-angle plus 15 joint axis-angles (radians)."""

    wrist_rot: np.ndarray  # (3,)
    joint_rots: np.ndarray  # (15, 3)

    def __post_init__(self):
        wrist = np.asarray(self.wrist_rot, dtype=np.float64).reshape(3)
        joints = np.asarray(self.joint_rots, dtype=np.float64).reshape(15, 3)
        if not (np.all(np.isfinite(wrist)) and np.all(np.isfinite(joints))):
            raise PreconditionError("hand pose values must be finite")
        mags = np.linalg.norm(joints, axis=1)
        if np.any(mags >= np.pi):
            raise PreconditionError("joint axis-angle magnitude must be < pi")
        object.__setattr__(self, "wrist_rot", wrist)
        object.__setattr__(self, "joint_rots", joints)

    @staticmethod
    def zeros() -> "ManoPose":
        return ManoPose(np.zeros(3), np.zeros((15, 3)))


@dataclass(frozen=True)
class JointAxes:
    bend: np.ndarray
    spread: np.ndarray
    twist: np.ndarray

    def __post_init__(self):
        for name in ("bend", "spread", "twist"):
            v = np.asarray(getattr(self, name), dtype=np.float64).reshape(3)
            if abs(float(np.linalg.norm(v)) - 1.0) > 1e-6:
                raise ConfigError(f"{name} axis must be unit-norm")
            object.__setattr__(self, name, v)
        triad = np.stack([self.bend, self.spread, self.twist])
        gram = triad @ triad.T - np.eye(3)
        if float(np.max(np.abs(gram))) > 1e-6:
            raise ConfigError("joint axes must be mutually orthogonal within 1e-6")


@dataclass(frozen=True)
class HandLayout:
    """Per-joint anatomical axes, joint limits, and the PIP/DIP coupling."""

    axes: dict[str, dict[str, JointAxes]]  # finger -> joint -> axes
    limits: dict[str, dict[str, tuple[float, float]]]  # finger -> dof -> (lo, hi)
    coupling_ratio: float
    mano_joint_order: dict[str, tuple[int, int, int]]  # finger -> MANO indices

    def __post_init__(self):
        for finger in FINGERS:
            if finger not in self.axes or finger not in self.limits:
                raise ConfigError(f"layout missing finger {finger!r}")
            for dof in ("spread", "mcp_bend", "pip_bend", "dip_bend"):
                lo, hi = self.limits[finger][dof]
                if not lo < hi:
                    raise ConfigError(f"{finger}/{dof}: limit lo must be < hi")
            idx = self.mano_joint_order[finger]
            if len(idx) != 3 or any(not 0 <= i < 15 for i in idx):
                raise ConfigError(f"{finger}: MANO joint indices must be in [0, 15)")
            # Coupled DIP limits must admit ratio * (clamped PIP) so the
            # coupling constraint survives the final clamp exactly.
            p_lo, p_hi = self.limits[finger]["pip_bend"]
            d_lo, d_hi = self.limits[finger]["dip_bend"]
            for v in (self.coupling_ratio * p_lo, self.coupling_ratio * p_hi):
                if not d_lo - 1e-12 <= v <= d_hi + 1e-12:
                    raise ConfigError(
                        f"{finger}: dip limits do not cover coupling_ratio * pip limits"
                    )

    def dof_limits(self, finger: str) -> list[tuple[float, float]]:
        lim = self.limits[finger]
        return [lim["spread"], lim["mcp_bend"], lim["pip_bend"], lim["dip_bend"]]


@dataclass(frozen=True)
class RobotHandPose:
    """16 joint angles, ordered [finger][spread, mcp_bend, pip_bend, dip_bend].

    Finger order is thumb, index, middle, ring.
    """

    joint_angles: np.ndarray  # (16,)

    def __post_init__(self):
        angles = np.asarray(self.joint_angles, dtype=np.float64).reshape(16)
        if not np.all(np.isfinite(angles)):
            raise PreconditionError("joint angles must be finite")
        object.__setattr__(self, "joint_angles", angles)

    def finger(self, name: str) -> np.ndarray:
        return self.joint_angles[4 * FINGERS.index(name) : 4 * FINGERS.index(name) + 4]


def load_hand_layout(path: str | Path | None = None) -> HandLayout:
    """Load a layout JSON document (defaults to the bundled 16-DOF hand)."""
    doc = json.loads(Path(path or _DEFAULT_LAYOUT).read_text())
    axes = {}
    limits = {}
    for finger, joints in doc["fingers"].items():
        axes[finger] = {
            j: JointAxes(
                bend=np.array(joints[j]["bend_axis"]),
                spread=np.array(joints[j]["spread_axis"]),
                twist=np.array(joints[j]["twist_axis"]),
            )
            for j in JOINTS
        }
        limits[finger] = {dof: tuple(rng) for dof, rng in joints["limits"].items()}
    return HandLayout(
        axes=axes,
        limits=limits,
        coupling_ratio=float(doc["coupling_ratio"]),
        mano_joint_order={f: tuple(v) for f, v in doc["mano_joint_order"].items()},
    )


def mano_joint_rotation(
    axes: JointAxes, bend: float = 0.0, spread: float = 0.0, twist: float = 0.0
) -> Rotation:
    """Compose a joint rotation in the layout's canonical factor order."""
    return (
        Rotation.from_axis_angle(axes.twist, twist)
        @ Rotation.from_axis_angle(axes.bend, bend)
        @ Rotation.from_axis_angle(axes.spread, spread)
    )


def _clamp(value: float, lo: float, hi: float, label: str) -> float:
    if value < lo or value > hi:
        log.debug("clamping %s: %.4f -> [%.4f, %.4f]", label, value, lo, hi)
        return float(min(max(value, lo), hi))
    return float(value)


def retarget_mano(m: ManoPose, layout: HandLayout) -> RobotHandPose:
    """Map a human hand pose onto the 16-DOF hand.

    Per finger: the base joint's spread and bend are peeled off with
    swing-twist along the layout axes, the middle joint contributes its bend,
    and the tip angle is slaved to the middle joint through the coupling
    ratio. Twist components and any residual swing are discarded (logged).
    Angles are clamped to the layout limits.
    """
    out = np.zeros(16)
    for fi, finger in enumerate(FINGERS):
        ax = layout.axes[finger]
        lims = layout.limits[finger]
        mcp_idx, pip_idx, _ = layout.mano_joint_order[finger]

        r_mcp = Rotation.from_rotvec(m.joint_rots[mcp_idx])
        spread, rest = swing_twist(r_mcp, ax["mcp"].spread)
        bend, rest = swing_twist(rest, ax["mcp"].bend)
        twist, residual = swing_twist(rest, ax["mcp"].twist)
        if abs(twist) > 1e-9 or residual.angle() > 1e-9:
            log.debug(
                "%s mcp: discarding twist %.4f rad, residual %.4f rad",
                finger, twist, residual.angle(),
            )

        r_pip = Rotation.from_rotvec(m.joint_rots[pip_idx])
        pip_bend, rest = swing_twist(r_pip, ax["pip"].bend)
        pip_twist, pip_residual = swing_twist(rest, ax["pip"].twist)
        if abs(pip_twist) > 1e-9 or pip_residual.angle() > 1e-9:
            log.debug(
                "%s pip: discarding twist %.4f rad, residual %.4f rad",
                finger, pip_twist, pip_residual.angle(),
            )

        spread = _clamp(spread, *lims["spread"], label=f"{finger}/spread")
        bend = _clamp(bend, *lims["mcp_bend"], label=f"{finger}/mcp_bend")
        pip_bend = _clamp(pip_bend, *lims["pip_bend"], label=f"{finger}/pip_bend")
        dip_bend = _clamp(
            layout.coupling_ratio * pip_bend, *lims["dip_bend"],
            label=f"{finger}/dip_bend",
        )
        out[4 * fi : 4 * fi + 4] = (spread, bend, pip_bend, dip_bend)
    return RobotHandPose(out)


@dataclass(frozen=True)
class WristPose:
    position: np.ndarray  # (3,) meters
    orientation: Rotation

    def __post_init__(self):
        pos = np.asarray(self.position, dtype=np.float64).reshape(3)
        if not np.all(np.isfinite(pos)):
            raise PreconditionError("position must be finite")
        object.__setattr__(self, "position", pos)

    @staticmethod
    def identity() -> "WristPose":
        return WristPose(np.zeros(3), Rotation.identity())


@dataclass(frozen=True)
class WristDelta:
    """Relative transform to the next pose, expressed in the previous wrist frame."""

    translation: np.ndarray  # (3,) meters
    rotation: Rotation

    def __post_init__(self):
        t = np.asarray(self.translation, dtype=np.float64).reshape(3)
        if not np.all(np.isfinite(t)):
            raise PreconditionError("translation must be finite")
        object.__setattr__(self, "translation", t)


def extract_post_grasp(poses: Sequence[WristPose]) -> list[WristDelta]:
    """Relative wrist motion over the first 40 steps after the grasp.

    ``delta[t]`` maps ``poses[t]`` to ``poses[t+1]`` in the frame of
    ``poses[t]``; requires at least 41 poses.
    """
    if len(poses) < POST_GRASP_STEPS + 1:
        raise InsufficientTrajectoryError(
            f"need at least {POST_GRASP_STEPS + 1} poses, got {len(poses)}"
        )
    deltas = []
    for t in range(POST_GRASP_STEPS):
        a, b = poses[t], poses[t + 1]
        inv = a.orientation.inverse()
        deltas.append(
            WristDelta(
                translation=inv.apply(b.position - a.position),
                rotation=inv @ b.orientation,
            )
        )
    return deltas


def apply_deltas(start: WristPose, deltas: Iterable[WristDelta]) -> list[WristPose]:
    """Replay frame-relative deltas from ``start``; inverse of extraction."""
    poses = []
    current = start
    for d in deltas:
        current = WristPose(
            position=current.position + current.orientation.apply(d.translation),
            orientation=current.orientation @ d.rotation,
        )
        poses.append(current)
    return poses


def load_wrist_poses(path: str | Path) -> list[WristPose]:
    """Read a pose sequence from JSONL: one {position, orientation} per line."""
    poses = []
    for line in Path(path).read_text().splitlines():
        if not line.strip():
            continue
        doc = json.loads(line)
        poses.append(
            WristPose(
                position=np.array(doc["position"], dtype=np.float64),
                orientation=Rotation(np.array(doc["orientation"], dtype=np.float64)),
            )
        )
    return poses


def dump_wrist_poses(poses: Sequence[WristPose], path: str | Path) -> None:
    lines = [
        json.dumps(
            {"position": list(p.position), "orientation": list(p.orientation.quat)}
        )
        for p in poses
    ]
    Path(path).write_text("\n".join(lines) + "\n")
