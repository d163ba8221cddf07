"""Synthetic stand-in for the tabletop grasp rig.

Each task hides an optimal grasp (canonical offsets composed with a randomly
placed object); executing a grasp scores a Gaussian bump around that optimum,
scaled by how closely the replayed post-grasp trajectory matches the task's
demonstration. Scene observations are a fixed random projection of the object
pose plus a task one-hot, so policies can condition on the scene without any
rendering. No physics: the paper point is the optimization loop, not contact
dynamics.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .affordance import PARAM_DIM, GraspParams
from .errors import ConfigError, DimensionMismatchError, PreconditionError
from .finetune import RolloutOutcome
from .kinematics import WristDelta, WristPose, apply_deltas, extract_post_grasp, load_wrist_poses
from .rotation import Rotation

TASK_IDS = (
    "pick-cup",
    "pour-cup",
    "open-drawer",
    "pick-spoon",
    "stir-spoon",
    "scoop-grape",
    "pick-grape",
    "flip-bagel",
    "squeeze-lemon",
)

# The feature projection stands in for a fixed pretrained encoder, so it is
# shared across sessions by default: a policy trained under one session seed
# must see the same feature space when evaluated under another.
DEFAULT_FEATURE_SEED = 101

_DATA_DIR = Path(__file__).parent / "data"


@dataclass(frozen=True)
class Box:
    lo: np.ndarray
    hi: np.ndarray

    def __post_init__(self):
        lo = np.asarray(self.lo, dtype=np.float64).reshape(3)
        hi = np.asarray(self.hi, dtype=np.float64).reshape(3)
        if np.any(hi < lo):
            raise ConfigError("box hi must be >= lo")
        object.__setattr__(self, "lo", lo)
        object.__setattr__(self, "hi", hi)

    @property
    def center(self) -> np.ndarray:
        return 0.5 * (self.lo + self.hi)

    def sample(self, rng: np.random.Generator) -> np.ndarray:
        return self.lo + rng.uniform(size=3) * (self.hi - self.lo)

    def contains(self, p: np.ndarray, tol: float = 1e-9) -> bool:
        p = np.asarray(p, dtype=np.float64).reshape(3)
        return bool(np.all(p >= self.lo - tol) and np.all(p <= self.hi + tol))

    def clip2d(self, p: np.ndarray) -> np.ndarray:
        return np.clip(np.asarray(p, dtype=np.float64)[:2], self.lo[:2], self.hi[:2])


@dataclass(frozen=True)
class TaskSpec:
    """One tabletop task: hidden-optimum geometry, reward shape, demo trajectory."""

    task_id: str
    display_name: str
    canonical_offset: np.ndarray  # grasp point relative to the object, meters
    canonical_theta: np.ndarray  # wrist euler at the optimum, radians
    canonical_pose: np.ndarray  # hand joints at the optimum, radians
    scale_mu: float
    scale_theta: float
    scale_pose: float
    success_threshold: float
    trajectory_file: Path
    prior_bias: np.ndarray  # 22-dim offset the prior adds to the optimum
    workspace_box: Box
    object_box: Box
    object_radius: float

    def __post_init__(self):
        for name in ("scale_mu", "scale_theta", "scale_pose"):
            if getattr(self, name) <= 0.0:
                raise ConfigError(f"{name} must be positive")
        if not 0.0 < self.success_threshold < 1.0:
            raise ConfigError("success_threshold must be in (0, 1)")
        object.__setattr__(
            self, "canonical_offset",
            np.asarray(self.canonical_offset, dtype=np.float64).reshape(3))
        object.__setattr__(
            self, "canonical_theta",
            np.asarray(self.canonical_theta, dtype=np.float64).reshape(3))
        object.__setattr__(
            self, "canonical_pose",
            np.asarray(self.canonical_pose, dtype=np.float64).reshape(16))
        object.__setattr__(
            self, "prior_bias",
            np.asarray(self.prior_bias, dtype=np.float64).reshape(PARAM_DIM))
        # The hidden optimum must stay inside the workspace wherever the
        # object lands.
        for corner in (self.object_box.lo, self.object_box.hi):
            if not self.workspace_box.contains(corner + self.canonical_offset):
                raise ConfigError(
                    f"{self.task_id}: canonical offset leaves the workspace box"
                )

    def with_bias(self, bias: np.ndarray) -> "TaskSpec":
        from dataclasses import replace

        return replace(self, prior_bias=np.asarray(bias, dtype=np.float64).reshape(PARAM_DIM))


def _box_from_doc(doc: dict) -> Box:
    return Box(np.array(doc["lo"]), np.array(doc["hi"]))


def load_task_file(path: str | Path) -> TaskSpec:
    path = Path(path)
    doc = json.loads(path.read_text())
    if doc.get("schema_version") != 1:
        raise ConfigError(f"unsupported task schema in {path}")
    bias = doc["prior_bias"]
    bias_vec = np.concatenate(
        [np.array(bias["mu"]), np.array(bias["theta_wrist"]), np.array(bias["pose"])]
    )
    return TaskSpec(
        task_id=doc["task_id"],
        display_name=doc["display_name"],
        canonical_offset=np.array(doc["canonical_offset"]),
        canonical_theta=np.array(doc["canonical_theta"]),
        canonical_pose=np.array(doc["canonical_pose"]),
        scale_mu=float(doc["length_scales"]["mu"]),
        scale_theta=float(doc["length_scales"]["theta"]),
        scale_pose=float(doc["length_scales"]["pose"]),
        success_threshold=float(doc["success_threshold"]),
        trajectory_file=(path.parent / doc["trajectory_file"]).resolve(),
        prior_bias=bias_vec,
        workspace_box=_box_from_doc(doc["workspace_box"]),
        object_box=_box_from_doc(doc["object_box"]),
        object_radius=float(doc["object_radius"]),
    )


def load_task(task_id: str) -> TaskSpec:
    path = _DATA_DIR / "tasks" / f"{task_id}.json"
    if not path.exists():
        raise ConfigError(f"unknown task {task_id!r}; available: {', '.join(TASK_IDS)}")
    return load_task_file(path)


def list_tasks() -> tuple[str, ...]:
    return TASK_IDS


@dataclass(frozen=True)
class TaskInstance:
    """A concrete scene: the task with the object placed somewhere."""

    spec: TaskSpec
    object_pose: np.ndarray  # (3,) meters
    seed: int

    def __post_init__(self):
        object.__setattr__(
            self, "object_pose",
            np.asarray(self.object_pose, dtype=np.float64).reshape(3))

    @property
    def instance_id(self) -> str:
        return f"{self.spec.task_id}#{self.seed}"

    def hidden_optimum(self) -> GraspParams:
        """The grasp that scores 1.0; visible to the environment only."""
        return GraspParams(
            self.object_pose + self.spec.canonical_offset,
            self.spec.canonical_theta,
            self.spec.canonical_pose,
        )


def make_instance(spec: TaskSpec, seed: int) -> TaskInstance:
    """Place the object uniformly in the task's object box (deterministic per seed)."""
    rng = np.random.default_rng(seed)
    return TaskInstance(spec=spec, object_pose=spec.object_box.sample(rng), seed=seed)


@dataclass(frozen=True)
class Observation:
    """What an episode starts from. Policies may read only ``features``;
    ``instance`` (and its object pose) is for the environment and UI schematic."""

    instance_id: str
    features: np.ndarray
    instance: TaskInstance

    @property
    def object_pose(self) -> np.ndarray:
        return self.instance.object_pose


# --------------------------------------------------------------------------
# Scene features
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class FeatureMap:
    """Fixed seeded random projection of [pose-or-displacement; task one-hot].

    Observation features encode the scene (object pose); final features encode
    the scene change produced by the episode, which is what gets compared to a
    goal. Per-instance noise is seeded by the instance, so re-observing is
    deterministic.
    """

    seed: int
    dim: int = 32
    noise_scale: float = 1e-3
    projection: np.ndarray = field(init=False, compare=False)

    def __post_init__(self):
        if self.dim < 1:
            raise ConfigError("feature dim must be >= 1")
        n_in = 3 + len(TASK_IDS)
        a = np.random.default_rng([self.seed, 7]).normal(size=(self.dim, n_in))
        object.__setattr__(self, "projection", a / np.sqrt(n_in))

    def _encode(self, vec3: np.ndarray, task_id: str, noise_seed: int) -> np.ndarray:
        onehot = np.zeros(len(TASK_IDS))
        if task_id in TASK_IDS:
            onehot[TASK_IDS.index(task_id)] = 1.0
        base = self.projection @ np.concatenate([np.asarray(vec3, dtype=np.float64), onehot])
        noise = np.random.default_rng([self.seed, 5, noise_seed]).standard_normal(self.dim)
        return base + self.noise_scale * noise


def synth_features(inst: TaskInstance, fmap: FeatureMap) -> np.ndarray:
    """Scene features for an instance (the stand-in for an image encoding)."""
    return fmap._encode(inst.object_pose, inst.spec.task_id, inst.seed)


def _change_features(inst: TaskInstance, displacement: np.ndarray, fmap: FeatureMap) -> np.ndarray:
    return fmap._encode(displacement, inst.spec.task_id, inst.seed)


# --------------------------------------------------------------------------
# Rollout
# --------------------------------------------------------------------------


def _endpoint(taus: Sequence[WristDelta]) -> WristPose:
    poses = apply_deltas(WristPose.identity(), taus)
    return poses[-1] if poses else WristPose.identity()


def rollout(
    inst: TaskInstance,
    params: GraspParams,
    taus: Sequence[WristDelta],
    fmap: FeatureMap,
    demo_taus: Sequence[WristDelta],
) -> RolloutOutcome:
    """Score a grasp against the instance's hidden optimum.

    Reward is a Gaussian bump over the three parameter blocks (geodesic
    distance for the wrist rotation) times a trajectory factor that penalizes
    endpoint deviation of the applied deltas from the demonstration. The
    object is displaced along the demo endpoint in proportion to grasp
    quality, and the final features encode that displacement.
    """
    spec = inst.spec
    opt = inst.hidden_optimum()
    d_mu = float(np.linalg.norm(params.mu - opt.mu))
    d_ang = Rotation.from_euler_xyz(params.theta_wrist).angle_to(
        Rotation.from_euler_xyz(opt.theta_wrist)
    )
    d_pose = float(np.linalg.norm(params.pose - opt.pose))
    quality = float(
        np.exp(
            -(
                d_mu**2 / (2.0 * spec.scale_mu**2)
                + d_ang**2 / (2.0 * spec.scale_theta**2)
                + d_pose**2 / (2.0 * spec.scale_pose**2)
            )
        )
    )
    end = _endpoint(taus)
    ref = _endpoint(demo_taus)
    e_p = float(np.linalg.norm(end.position - ref.position))
    e_a = end.orientation.angle_to(ref.orientation)
    traj_factor = float(
        np.exp(-(e_p**2 / (2.0 * spec.scale_mu**2) + e_a**2 / (2.0 * spec.scale_theta**2)))
    )
    reward = quality * traj_factor
    displacement = quality * end.position
    return RolloutOutcome(
        reward=reward,
        final_features=_change_features(inst, displacement, fmap),
        success=reward >= spec.success_threshold,
    )


def embedding_reward(final: np.ndarray, goal: np.ndarray, scale: float = 0.1) -> float:
    """Distance between final and goal features, mapped monotonically to (0, 1]."""
    if scale <= 0.0:
        raise PreconditionError("scale must be positive")
    final = np.asarray(final, dtype=np.float64)
    goal = np.asarray(goal, dtype=np.float64)
    if final.shape != goal.shape:
        raise DimensionMismatchError(f"feature shapes differ: {final.shape} vs {goal.shape}")
    return float(np.exp(-np.linalg.norm(final - goal) / scale))


# --------------------------------------------------------------------------
# Schematic (top-down 2D payload for the operator UI)
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class Schematic:
    box_lo: np.ndarray  # (2,)
    box_hi: np.ndarray  # (2,)
    object_center: np.ndarray  # (2,)
    object_radius: float
    contact: np.ndarray  # (2,)
    wrist_dir: np.ndarray  # (2,) unit
    closures: np.ndarray  # (4,) in [0, 1], finger order thumb/index/middle/ring

    def to_dict(self) -> dict:
        return {
            "box_lo": self.box_lo.tolist(),
            "box_hi": self.box_hi.tolist(),
            "object_center": self.object_center.tolist(),
            "object_radius": self.object_radius,
            "contact": self.contact.tolist(),
            "wrist_dir": self.wrist_dir.tolist(),
            "closures": self.closures.tolist(),
        }


def render_schematic(inst: TaskInstance, params: GraspParams, layout=None) -> Schematic:
    """Project the scene and grasp to a top-down 2D scene description."""
    from .kinematics import FINGERS

    if layout is None:
        layout = _default_layout()
    box = inst.spec.workspace_box
    heading = Rotation.from_euler_xyz(params.theta_wrist).apply(np.array([1.0, 0.0, 0.0]))[:2]
    n = float(np.linalg.norm(heading))
    heading = heading / n if n > 1e-9 else np.array([1.0, 0.0])
    closures = np.zeros(4)
    for fi, finger in enumerate(FINGERS):
        lims = layout.dof_limits(finger)[1:]  # bend dofs only
        angles = params.pose[4 * fi + 1 : 4 * fi + 4]
        fractions = [(a - lo) / (hi - lo) for a, (lo, hi) in zip(angles, lims)]
        closures[fi] = float(np.clip(np.mean(fractions), 0.0, 1.0))
    return Schematic(
        box_lo=box.lo[:2],
        box_hi=box.hi[:2],
        object_center=box.clip2d(inst.object_pose),
        object_radius=inst.spec.object_radius,
        contact=box.clip2d(params.mu),
        wrist_dir=heading,
        closures=closures,
    )


_LAYOUT_CACHE = None


def _default_layout():
    global _LAYOUT_CACHE
    if _LAYOUT_CACHE is None:
        from .kinematics import load_hand_layout

        _LAYOUT_CACHE = load_hand_layout()
    return _LAYOUT_CACHE


# --------------------------------------------------------------------------
# Environment and prior plumbing for the fine-tuning loop
# --------------------------------------------------------------------------


class GraspEnvironment:
    """Episode-granular wrapper: randomized instances, fixed demo trajectory."""

    def __init__(
        self,
        spec: TaskSpec,
        seed: int = 0,
        feature_dim: int = 32,
        feature_seed: int = DEFAULT_FEATURE_SEED,
    ):
        self.spec = spec
        self.seed = seed
        self.fmap = FeatureMap(seed=feature_seed, dim=feature_dim)
        poses = load_wrist_poses(spec.trajectory_file)
        self.demo_taus = extract_post_grasp(poses)

    @property
    def success_threshold(self) -> float:
        return self.spec.success_threshold

    def _instance_seed(self, episode: int) -> int:
        return int(np.random.default_rng([self.seed, 0, episode]).integers(2**62))

    def observe(self, inst: TaskInstance) -> Observation:
        return Observation(
            instance_id=inst.instance_id,
            features=synth_features(inst, self.fmap),
            instance=inst,
        )

    def reset(self, episode: int) -> Observation:
        return self.observe(make_instance(self.spec, self._instance_seed(episode)))

    def execute(self, obs: Observation, params: GraspParams) -> RolloutOutcome:
        return rollout(obs.instance, params, self.demo_taus, self.fmap, self.demo_taus)

    def canonical_instance(self) -> TaskInstance:
        return TaskInstance(self.spec, self.spec.object_box.center, seed=0)

    def goal_features(self) -> np.ndarray:
        """Final features of the hidden optimum on a canonical instance."""
        inst = self.canonical_instance()
        return rollout(
            inst, inst.hidden_optimum(), self.demo_taus, self.fmap, self.demo_taus
        ).final_features


@dataclass(frozen=True)
class BiasedOraclePrior:
    """Synthetic prior: the instance's hidden optimum shifted by the task bias.

    Stands in for the video-trained prior, whose systematic error is exactly
    what fine-tuning is supposed to remove.
    """

    spec: TaskSpec

    def predict(self, obs: Observation) -> GraspParams:
        return obs.instance.hidden_optimum().add(self.spec.prior_bias)


class EmbeddingRewardChannel:
    """Automated rewards from feature-space distance to a goal snapshot."""

    def __init__(self, goal: np.ndarray, scale: float = 0.1):
        self.goal = np.asarray(goal, dtype=np.float64)
        self.scale = scale

    def collect(self, pending) -> float:
        return embedding_reward(pending.outcome.final_features, self.goal, self.scale)
