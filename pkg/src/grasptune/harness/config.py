"""Run configuration: one JSON document drives a fine-tuning run.

Seed namespacing (documented contract): with top-level seed S, episode
instances draw from stream [S, 0, k], residual sampling from [S, 1, k], the
feature projection from [S, 7], and evaluation instances from [S, 9, trial].
Evaluation therefore never reuses fine-tuning object placements.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

from ..errors import ConfigError
from ..finetune import SessionConfig
from ..policy import PolicyConfig
from ..simenv import TaskSpec, load_task, load_task_file

REWARD_MODES = ("oracle", "embedding", "human")
CONFIG_SCHEMA_VERSION = 1


@dataclass(frozen=True)
class RunConfig:
    task: TaskSpec
    reward_mode: str
    seed: int
    feature_dim: int
    session: SessionConfig
    policy: PolicyConfig
    output_dir: Path
    bind: str = "127.0.0.1:8700"
    embedding_scale: float = 0.1
    reward_timeout_s: float | None = None
    on_timeout: str = "wait"  # wait | abort

    def __post_init__(self):
        if self.reward_mode not in REWARD_MODES:
            raise ConfigError(f"reward_mode must be one of {REWARD_MODES}")
        if self.on_timeout not in ("wait", "abort"):
            raise ConfigError("on_timeout must be 'wait' or 'abort'")
        if self.embedding_scale <= 0.0:
            raise ConfigError("embedding_scale must be positive")
        if self.feature_dim < 1:
            raise ConfigError("feature_dim must be >= 1")

    def bind_parts(self) -> tuple[str, int]:
        host, _, port = self.bind.rpartition(":")
        if not host or not port.lstrip("-").isdigit() or int(port) < 0:
            raise ConfigError(f"bind address {self.bind!r} is not host:port")
        return host, int(port)


def _resolve_task(value: str, base: Path) -> TaskSpec:
    if value.endswith(".json"):
        path = (base / value).resolve() if not Path(value).is_absolute() else Path(value)
        if not path.exists():
            raise ConfigError(f"task file {path} does not exist")
        return load_task_file(path)
    return load_task(value)


def load_run_config(path: str | Path) -> RunConfig:
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"config file {path} does not exist")
    try:
        doc = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config is not valid JSON: {exc}") from exc
    if doc.get("schema_version") != CONFIG_SCHEMA_VERSION:
        raise ConfigError(f"unsupported config schema {doc.get('schema_version')!r}")
    try:
        seed = int(doc.get("seed", 0))
        session = SessionConfig(seed=seed, **doc.get("session", {}))
        policy = PolicyConfig(seed=seed, **doc.get("policy", {}))
        return RunConfig(
            task=_resolve_task(str(doc["task"]), path.parent),
            reward_mode=str(doc.get("reward_mode", "oracle")),
            seed=seed,
            feature_dim=int(doc.get("feature_dim", 32)),
            session=session,
            policy=policy,
            output_dir=(path.parent / doc["output_dir"]).resolve()
            if not Path(doc["output_dir"]).is_absolute()
            else Path(doc["output_dir"]),
            bind=str(doc.get("bind", "127.0.0.1:8700")),
            embedding_scale=float(doc.get("embedding_scale", 0.1)),
            reward_timeout_s=(
                None if doc.get("reward_timeout_s") is None
                else float(doc["reward_timeout_s"])
            ),
            on_timeout=str(doc.get("on_timeout", "wait")),
        )
    except KeyError as exc:
        raise ConfigError(f"config is missing required key {exc}") from exc
    except TypeError as exc:
        raise ConfigError(f"config has an unexpected field: {exc}") from exc
