"""Evaluation protocol: prior-only, no-prior, and policy-corrected grasping.

Each trial places the object freshly (seed stream disjoint from fine-tuning),
builds grasp parameters per the method, and counts the environment's own
success flag over the rollouts.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..affordance import GraspParams, PriorSource, prior_predict
from ..errors import ConfigError, PreconditionError
from ..kinematics import FINGERS, HandLayout, load_hand_layout
from ..policy import CVAEParams, MLPHead, act, act_direct, act_mlp
from ..simenv import GraspEnvironment, Observation, TaskSpec, make_instance

METHODS = ("prior-only", "no-prior", "deft")


@dataclass(frozen=True)
class TrialRecord:
    trial: int
    instance_id: str
    reward: float
    success: bool

    def to_dict(self) -> dict:
        return {
            "trial": self.trial,
            "instance_id": self.instance_id,
            "reward": self.reward,
            "success": self.success,
        }


@dataclass(frozen=True)
class EvalReport:
    task_id: str
    method: str
    trials: int
    successes: int
    records: tuple[TrialRecord, ...] = field(default=(), compare=False)

    def __post_init__(self):
        if self.successes > self.trials:
            raise PreconditionError("successes cannot exceed trials")

    @property
    def success_rate(self) -> float:
        return self.successes / self.trials if self.trials else 0.0

    def to_dict(self) -> dict:
        return {
            "task_id": self.task_id,
            "method": self.method,
            "trials": self.trials,
            "successes": self.successes,
            "records": [r.to_dict() for r in self.records],
        }


def half_closed_pose(layout: HandLayout | None = None) -> np.ndarray:
    """Midpoint of every joint's limit range: the heuristic grasp pose."""
    layout = layout or load_hand_layout()
    return np.array([
        0.5 * (lo + hi) for finger in FINGERS for lo, hi in layout.dof_limits(finger)
    ])


def eval_rng(seed: int, trial: int) -> np.random.Generator:
    """Evaluation noise stream (namespace 9, disjoint from fine-tuning)."""
    return np.random.default_rng([seed, 9, trial])


def build_method_params(
    method: str,
    obs: Observation,
    prior: PriorSource,
    rng: np.random.Generator,
    policy: CVAEParams | MLPHead | None = None,
    layout: HandLayout | None = None,
) -> GraspParams:
    """Grasp parameters one evaluation trial executes."""
    if method == "prior-only":
        return prior_predict(prior, obs)
    if method == "no-prior":
        # Heuristic baseline: contact at the detected object center, random
        # wrist rotation, half-closed hand.
        return GraspParams(
            mu=obs.object_pose.copy(),
            theta_wrist=rng.uniform(-np.pi, np.pi, size=3),
            pose=half_closed_pose(layout),
        )
    if method == "deft":
        if policy is None:
            raise ConfigError("method 'deft' needs trained policy weights")
        xi = prior_predict(prior, obs)
        if isinstance(policy, MLPHead):
            return xi.add(act_mlp(policy, obs.features, xi))
        if policy.config.head_type == "direct-vae":
            return act_direct(policy, obs.features, xi, rng)
        return xi.add(act(policy, obs.features, xi, rng))
    raise ConfigError(f"unknown method {method!r}; expected one of {METHODS}")


def run_eval(
    spec: TaskSpec,
    method: str,
    prior: PriorSource,
    trials: int = 10,
    seed: int = 0,
    policy: CVAEParams | MLPHead | None = None,
    feature_dim: int = 32,
) -> EvalReport:
    """Score one method over fresh randomized instances."""
    if trials < 1:
        raise ConfigError("trials must be >= 1")
    env = GraspEnvironment(spec, seed=seed, feature_dim=feature_dim)
    records = []
    successes = 0
    for trial in range(trials):
        rng = eval_rng(seed, trial)
        inst_seed = int(rng.integers(2**62))
        obs = env.observe(make_instance(spec, inst_seed))
        params = build_method_params(method, obs, prior, rng, policy=policy)
        outcome = env.execute(obs, params)
        successes += bool(outcome.success)
        records.append(
            TrialRecord(
                trial=trial,
                instance_id=obs.instance_id,
                reward=outcome.reward,
                success=outcome.success,
            )
        )
    return EvalReport(
        task_id=spec.task_id,
        method=method,
        trials=trials,
        successes=successes,
        records=tuple(records),
    )
