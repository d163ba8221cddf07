"""Residual fine-tuning loop: sample, execute, rank, refit.

Each episode perturbs the prior's grasp parameters with noise drawn from a
per-dimension diagonal Gaussian. After the warm-up phase the distribution is
refit, every episode, to the residuals of the highest-reward episodes seen so
far, shrinking the search around corrections that work.
"""

from __future__ import annotations

import json
import time
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Callable, Protocol

import numpy as np

from .affordance import PARAM_DIM, GraspParams, PriorSource, prior_predict
from .errors import (
    ConfigError,
    InsufficientEpisodesError,
    LogFormatError,
    PreconditionError,
    RewardTimeoutError,
)

STD_FLOOR = 1e-4
LOG_SCHEMA_VERSION = 1


def validate_residual(eps: np.ndarray) -> np.ndarray:
    eps = np.asarray(eps, dtype=np.float64).reshape(PARAM_DIM)
    if not np.all(np.isfinite(eps)):
        raise PreconditionError("residual must be finite")
    return eps


@dataclass(frozen=True)
class ResidualDistribution:
    """Diagonal Gaussian over the 22 residual dimensions."""

    mean: np.ndarray
    std: np.ndarray

    def __post_init__(self):
        mean = np.asarray(self.mean, dtype=np.float64).reshape(PARAM_DIM)
        std = np.asarray(self.std, dtype=np.float64).reshape(PARAM_DIM)
        if not (np.all(np.isfinite(mean)) and np.all(np.isfinite(std))):
            raise PreconditionError("distribution parameters must be finite")
        if np.any(std < STD_FLOOR - 1e-15):
            raise PreconditionError(f"std must be >= {STD_FLOOR} per dimension")
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "std", std)


@dataclass(frozen=True)
class SessionConfig:
    """Knobs of one fine-tuning session (defaults match the standard protocol)."""

    elites: int = 10
    warmup: int = 10
    episodes: int = 30
    sigma_mu: float = 0.02
    sigma_theta: float = 0.2
    sigma_pose: float = 0.05
    seed: int = 0

    def __post_init__(self):
        if not 1 <= self.elites <= self.episodes:
            raise ConfigError("need 1 <= elites <= episodes")
        if not 0 <= self.warmup <= self.episodes:
            raise ConfigError("need 0 <= warmup <= episodes")
        for name in ("sigma_mu", "sigma_theta", "sigma_pose"):
            if getattr(self, name) <= 0.0:
                raise ConfigError(f"{name} must be positive")

    def to_dict(self) -> dict:
        return {
            "elites": self.elites,
            "warmup": self.warmup,
            "episodes": self.episodes,
            "sigma_mu": self.sigma_mu,
            "sigma_theta": self.sigma_theta,
            "sigma_pose": self.sigma_pose,
            "seed": self.seed,
        }

    @staticmethod
    def from_dict(doc: dict) -> "SessionConfig":
        return SessionConfig(**doc)


@dataclass(frozen=True)
class EpisodeRecord:
    """One fine-tuning trial plus the distribution snapshot after it."""

    index: int  # 1-based episode number
    instance_id: str
    features: np.ndarray
    prior: GraspParams
    residual: np.ndarray
    executed: GraspParams
    reward: float
    success: bool
    dist_mean: np.ndarray
    dist_std: np.ndarray
    elites: tuple[int, ...]  # current elite episode numbers (1-based)
    ts_start: float = 0.0
    ts_end: float = 0.0

    def __post_init__(self):
        if not 0.0 <= self.reward <= 1.0:
            raise PreconditionError(f"reward must be in [0, 1], got {self.reward}")
        object.__setattr__(self, "features", np.asarray(self.features, dtype=np.float64))
        object.__setattr__(self, "residual", validate_residual(self.residual))
        object.__setattr__(self, "dist_mean", np.asarray(self.dist_mean, dtype=np.float64))
        object.__setattr__(self, "dist_std", np.asarray(self.dist_std, dtype=np.float64))

    def to_dict(self) -> dict:
        return {
            "index": self.index,
            "instance_id": self.instance_id,
            "features": self.features.tolist(),
            "prior": self.prior.to_dict(),
            "residual": self.residual.tolist(),
            "executed": self.executed.to_dict(),
            "reward": self.reward,
            "success": self.success,
            "dist_mean": self.dist_mean.tolist(),
            "dist_std": self.dist_std.tolist(),
            "elites": list(self.elites),
            "ts_start": self.ts_start,
            "ts_end": self.ts_end,
        }

    @staticmethod
    def from_dict(doc: dict) -> "EpisodeRecord":
        return EpisodeRecord(
            index=int(doc["index"]),
            instance_id=str(doc["instance_id"]),
            features=np.array(doc["features"], dtype=np.float64),
            prior=GraspParams.from_dict(doc["prior"]),
            residual=np.array(doc["residual"], dtype=np.float64),
            executed=GraspParams.from_dict(doc["executed"]),
            reward=float(doc["reward"]),
            success=bool(doc["success"]),
            dist_mean=np.array(doc["dist_mean"], dtype=np.float64),
            dist_std=np.array(doc["dist_std"], dtype=np.float64),
            elites=tuple(int(i) for i in doc["elites"]),
            ts_start=float(doc.get("ts_start", 0.0)),
            ts_end=float(doc.get("ts_end", 0.0)),
        )


@dataclass
class SessionLog:
    """Ordered episode records plus session-level metadata."""

    config: SessionConfig
    episodes: list[EpisodeRecord] = field(default_factory=list)
    meta: dict = field(default_factory=dict)

    def rewards(self) -> np.ndarray:
        return np.array([r.reward for r in self.episodes])

    def current_distribution(self) -> ResidualDistribution:
        if not self.episodes:
            return init_distribution(self.config)
        last = self.episodes[-1]
        return ResidualDistribution(last.dist_mean, last.dist_std)


# --------------------------------------------------------------------------
# Core operations
# --------------------------------------------------------------------------


def init_distribution(cfg: SessionConfig) -> ResidualDistribution:
    """Zero-mean start with per-block exploration widths."""
    std = np.concatenate(
        [np.full(3, cfg.sigma_mu), np.full(3, cfg.sigma_theta), np.full(16, cfg.sigma_pose)]
    )
    return ResidualDistribution(np.zeros(PARAM_DIM), std)


def sample_residual(dist: ResidualDistribution, rng: np.random.Generator) -> np.ndarray:
    """One independent per-dimension Gaussian draw."""
    return dist.mean + dist.std * rng.standard_normal(PARAM_DIM)


def rank_elites(log: SessionLog, elites: int) -> list[int]:
    """Positions (0-based, into ``log.episodes``) of the top rewards.

    Ties break toward the earlier episode; asking for more elites than
    episodes returns all positions, ranked.
    """
    if not log.episodes:
        raise PreconditionError("need at least one episode to rank")
    rewards = log.rewards()
    order = sorted(range(len(rewards)), key=lambda i: (-rewards[i], i))
    return order[: min(elites, len(order))]


def refit_distribution(log: SessionLog, elites: int) -> ResidualDistribution:
    """Moment-match the residuals of the elite episodes.

    Per-dimension mean and population standard deviation (divide by count),
    floored at 1e-4 so repeated identical elites cannot collapse sampling.
    """
    if len(log.episodes) < elites:
        raise InsufficientEpisodesError(
            f"{len(log.episodes)} episodes cannot supply {elites} elites"
        )
    chosen = np.array([log.episodes[i].residual for i in rank_elites(log, elites)])
    mean = chosen.mean(axis=0)
    std = np.maximum(chosen.std(axis=0), STD_FLOOR)
    return ResidualDistribution(mean, std)


# --------------------------------------------------------------------------
# Session loop
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class RolloutOutcome:
    reward: float
    final_features: np.ndarray
    success: bool


class Environment(Protocol):
    """Episode-granular environment: fresh randomized scene per reset."""

    success_threshold: float

    def reset(self, episode: int) -> object: ...

    def execute(self, obs: object, params: GraspParams) -> RolloutOutcome: ...


@dataclass(frozen=True)
class PendingEpisode:
    """Everything known about an episode before its reward is assigned."""

    index: int
    obs: object
    prior: GraspParams
    residual: np.ndarray
    executed: GraspParams
    outcome: RolloutOutcome


class RewardChannel(Protocol):
    def collect(self, pending: PendingEpisode) -> float: ...


class OracleRewardChannel:
    """Scores episodes with the environment's own rollout reward."""

    def collect(self, pending: PendingEpisode) -> float:
        return pending.outcome.reward


def episode_rng(seed: int, episode: int) -> np.random.Generator:
    """Residual-sampling stream for one episode (namespace 1)."""
    return np.random.default_rng([seed, 1, episode])


def run_session(
    env: Environment,
    prior: PriorSource,
    reward: RewardChannel,
    cfg: SessionConfig,
    on_episode: Callable[[EpisodeRecord], None] | None = None,
    resume: SessionLog | None = None,
) -> SessionLog:
    """Run the fine-tuning procedure for ``cfg.episodes`` episodes.

    Per episode: observe a fresh scene, query the prior, sample a residual,
    execute the perturbed grasp plus the task's post-grasp trajectory, collect
    a reward from the channel, and reset. After the warm-up episode count the
    residual distribution is refit to the current elites at the end of every
    episode. Each record carries the post-episode distribution snapshot, so a
    resumed session continues exactly where the log stops.

    A reward-channel timeout aborts with the partial log (``meta["aborted"]``).
    """
    log = resume if resume is not None else SessionLog(config=cfg)
    if resume is not None and resume.config != cfg:
        raise ConfigError("resume log was recorded under a different config")
    dist = log.current_distribution()

    for k in range(len(log.episodes) + 1, cfg.episodes + 1):
        obs = env.reset(k)
        xi = prior_predict(prior, obs)
        eps = sample_residual(dist, episode_rng(cfg.seed, k))
        executed = xi.add(eps)
        ts_start = time.time()
        outcome = env.execute(obs, executed)
        pending = PendingEpisode(
            index=k, obs=obs, prior=xi, residual=eps, executed=executed, outcome=outcome
        )
        try:
            value = float(reward.collect(pending))
        except RewardTimeoutError:
            log.meta["aborted"] = f"reward timeout at episode {k}"
            return log
        if not 0.0 <= value <= 1.0:
            raise PreconditionError(f"reward channel returned {value}, outside [0, 1]")

        # Record first with a provisional snapshot, then refit if past warm-up.
        provisional = EpisodeRecord(
            index=k,
            instance_id=str(getattr(obs, "instance_id", k)),
            features=np.asarray(getattr(obs, "features")),
            prior=xi,
            residual=eps,
            executed=executed,
            reward=value,
            success=value >= env.success_threshold,
            dist_mean=dist.mean,
            dist_std=dist.std,
            elites=(),
            ts_start=ts_start,
            ts_end=time.time(),
        )
        log.episodes.append(provisional)
        elite_positions = rank_elites(log, min(cfg.elites, len(log.episodes)))
        if k > cfg.warmup:
            dist = refit_distribution(log, min(cfg.elites, len(log.episodes)))
        record = replace(
            provisional,
            dist_mean=dist.mean,
            dist_std=dist.std,
            elites=tuple(log.episodes[i].index for i in elite_positions),
        )
        log.episodes[-1] = record
        if on_episode is not None:
            on_episode(record)
    return log


# --------------------------------------------------------------------------
# Persistence (session.json header + episodes.jsonl, append-only)
# --------------------------------------------------------------------------


def session_paths(directory: str | Path) -> tuple[Path, Path]:
    d = Path(directory)
    return d / "session.json", d / "episodes.jsonl"


def write_session_header(directory: str | Path, cfg: SessionConfig, meta: dict) -> None:
    header_path, _ = session_paths(directory)
    header_path.parent.mkdir(parents=True, exist_ok=True)
    doc = {"schema_version": LOG_SCHEMA_VERSION, "config": cfg.to_dict(), "meta": meta}
    header_path.write_text(json.dumps(doc, indent=2) + "\n")


def append_episode(directory: str | Path, record: EpisodeRecord) -> None:
    _, episodes_path = session_paths(directory)
    with episodes_path.open("a") as fh:
        fh.write(json.dumps(record.to_dict(), separators=(",", ":")) + "\n")


def load_session(directory: str | Path) -> SessionLog:
    header_path, episodes_path = session_paths(directory)
    if not header_path.exists():
        raise LogFormatError(f"no session header at {header_path}")
    header = json.loads(header_path.read_text())
    if header.get("schema_version") != LOG_SCHEMA_VERSION:
        raise LogFormatError(
            f"unsupported log schema {header.get('schema_version')!r}"
        )
    log = SessionLog(
        config=SessionConfig.from_dict(header["config"]), meta=dict(header.get("meta", {}))
    )
    if episodes_path.exists():
        for lineno, line in enumerate(episodes_path.read_text().splitlines(), start=1):
            if not line.strip():
                continue
            try:
                log.episodes.append(EpisodeRecord.from_dict(json.loads(line)))
            except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
                raise LogFormatError(
                    f"corrupt episode line {lineno}: {exc}", line_number=lineno
                ) from exc
    return log
