"""HTTP surface for the operator UI and the human reward channel.

One session loop, one pending episode at a time. The server thread and the
session thread share a :class:`SessionBridge`; reward submissions travel
through a queue, so the loop blocks until an operator scores the episode.
"""

from __future__ import annotations

import logging
import queue
import threading
import time
from dataclasses import dataclass, field as dc_field
from pathlib import Path
from typing import Callable

from fastapi import FastAPI, HTTPException
from fastapi.staticfiles import StaticFiles
from pydantic import BaseModel, Field

from ..errors import RewardTimeoutError
from ..finetune import EpisodeRecord, PendingEpisode, SessionConfig
from ..simenv import render_schematic

log = logging.getLogger(__name__)

API_SCHEMA_VERSION = 1


@dataclass
class SessionBridge:
    """Thread-safe view of a live (or finished) session for the HTTP API."""

    session_config: SessionConfig
    task_id: str
    display_name: str
    reward_mode: str
    records: list[EpisodeRecord] = dc_field(default_factory=list)
    state: str = "running"  # running | waiting_reward | finished | aborted

    def __post_init__(self):
        self._lock = threading.Lock()
        self._pending_payload: dict | None = None
        self._pending_submitted = False
        self._rewards: queue.Queue[float] = queue.Queue(maxsize=1)

    # -- session-loop side -------------------------------------------------

    def publish_pending(self, payload: dict) -> None:
        with self._lock:
            self._pending_payload = payload
            self._pending_submitted = False
            self.state = "waiting_reward"

    def wait_reward(self, timeout_s: float | None) -> float:
        return self._rewards.get(timeout=timeout_s)

    def clear_pending(self) -> None:
        with self._lock:
            self._pending_payload = None
            self._pending_submitted = False
            self.state = "running"

    def add_record(self, record: EpisodeRecord) -> None:
        with self._lock:
            self.records.append(record)

    def finish(self, state: str = "finished") -> None:
        with self._lock:
            self.state = state

    # -- HTTP side ----------------------------------------------------------

    def pending_view(self) -> dict | None:
        with self._lock:
            return dict(self._pending_payload) if self._pending_payload else None

    def submit_reward(self, index: int, value: float) -> None:
        """Route a reward to the waiting loop; raises HTTPException on misuse."""
        with self._lock:
            completed = {r.index for r in self.records}
            if index in completed:
                raise HTTPException(409, detail=f"episode {index} already has a reward")
            if self._pending_payload is None or self._pending_payload["index"] != index:
                raise HTTPException(404, detail=f"episode {index} is not pending")
            if self._pending_submitted:
                raise HTTPException(409, detail=f"episode {index} already has a reward")
            self._pending_submitted = True
        self._rewards.put(value)

    def snapshot(self) -> dict:
        with self._lock:
            pending = self._pending_payload["index"] if self._pending_payload else None
            return {
                "schema_version": API_SCHEMA_VERSION,
                "state": self.state,
                "task_id": self.task_id,
                "display_name": self.display_name,
                "reward_mode": self.reward_mode,
                "episodes_total": self.session_config.episodes,
                "warmup": self.session_config.warmup,
                "elites": self.session_config.elites,
                "episode_count": len(self.records),
                "pending_index": pending,
            }

    def history(self, start: int) -> list[dict]:
        with self._lock:
            return [r.to_dict() for r in self.records if r.index >= start]

    def distribution_series(self) -> list[dict]:
        with self._lock:
            return [
                {"episode": r.index, "mean": r.dist_mean.tolist(), "std": r.dist_std.tolist()}
                for r in self.records
            ]


class HumanRewardChannel:
    """Blocks the session loop until a reward arrives over the API."""

    def __init__(
        self,
        bridge: SessionBridge,
        timeout_s: float | None = None,
        on_timeout: str = "wait",
        schematic_fn: Callable[[PendingEpisode], dict] | None = None,
    ):
        self.bridge = bridge
        self.timeout_s = timeout_s
        self.on_timeout = on_timeout
        self.schematic_fn = schematic_fn or default_schematic

    def collect(self, pending: PendingEpisode) -> float:
        self.bridge.publish_pending(
            {
                "index": pending.index,
                "schematic": self.schematic_fn(pending),
                "xi": pending.prior.to_dict(),
                "eps": pending.residual.tolist(),
                "executed": pending.executed.to_dict(),
            }
        )
        while True:
            try:
                value = self.bridge.wait_reward(self.timeout_s)
                break
            except queue.Empty:
                if self.on_timeout == "abort":
                    self.bridge.finish("aborted")
                    raise RewardTimeoutError(
                        f"no reward for episode {pending.index} within {self.timeout_s}s"
                    ) from None
                log.warning("episode %d still waiting for a reward", pending.index)
        self.bridge.clear_pending()
        return value


def default_schematic(pending: PendingEpisode) -> dict:
    return render_schematic(pending.obs.instance, pending.executed).to_dict()


class RewardSubmission(BaseModel):
    reward: float = Field(ge=0.0, le=1.0)


def build_app(bridge: SessionBridge, ui_dir: str | Path | None = None) -> FastAPI:
    app = FastAPI(title="grasptune operator API")

    @app.get("/api/session")
    def session_state() -> dict:
        return bridge.snapshot()

    @app.get("/api/episode/pending")
    def pending() -> dict:
        return {"schema_version": API_SCHEMA_VERSION, "pending": bridge.pending_view()}

    @app.post("/api/episode/{index}/reward")
    def submit(index: int, body: RewardSubmission) -> dict:
        bridge.submit_reward(index, body.reward)
        return {"schema_version": API_SCHEMA_VERSION, "ok": True, "index": index}

    @app.get("/api/history")
    def history(start: int = 1) -> dict:
        return {"schema_version": API_SCHEMA_VERSION, "records": bridge.history(start)}

    @app.get("/api/distribution")
    def distribution() -> dict:
        return {
            "schema_version": API_SCHEMA_VERSION,
            "warmup": bridge.session_config.warmup,
            "snapshots": bridge.distribution_series(),
        }

    if ui_dir is not None and Path(ui_dir).is_dir():
        app.mount("/", StaticFiles(directory=str(ui_dir), html=True), name="ui")
    return app


class ServerHandle:
    """A uvicorn server running on a daemon thread."""

    def __init__(self, app: FastAPI, host: str, port: int):
        import uvicorn

        self._config = uvicorn.Config(app, host=host, port=port, log_level="warning")
        self._server = uvicorn.Server(self._config)
        self._thread = threading.Thread(target=self._server.run, daemon=True)

    def start(self, ready_timeout_s: float = 10.0) -> tuple[str, int]:
        self._thread.start()
        deadline = time.time() + ready_timeout_s
        while not self._server.started:
            if time.time() > deadline:
                raise RuntimeError("HTTP server failed to start")
            if not self._thread.is_alive():
                raise RuntimeError("HTTP server thread died during startup")
            time.sleep(0.01)
        sock = self._server.servers[0].sockets[0]
        host, port = sock.getsockname()[:2]
        return host, port

    def stop(self) -> None:
        self._server.should_exit = True
        self._thread.join(timeout=5.0)


def serve_api(
    bridge: SessionBridge, bind: tuple[str, int], ui_dir: str | Path | None = None
) -> tuple[ServerHandle, str]:
    """Start serving; returns the handle and the bound host:port string."""
    handle = ServerHandle(build_app(bridge, ui_dir), bind[0], bind[1])
    host, port = handle.start()
    return handle, f"{host}:{port}"
