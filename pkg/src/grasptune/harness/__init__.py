"""Run orchestration: configuration, CLI, evaluation protocol, and the HTTP API."""

from .config import RunConfig, load_run_config
from .evaluation import EvalReport, run_eval

__all__ = ["RunConfig", "load_run_config", "EvalReport", "run_eval"]
