"""Reward-curve export: per-episode rewards plus trailing moving averages.

The UI's progress charts must agree with this file byte-for-byte on values,
so the window arithmetic lives here and nowhere else: the average at episode
k covers the trailing min(k, window) episodes including k.
"""

from __future__ import annotations

import csv
from pathlib import Path
from typing import Sequence

from ..finetune import SessionLog

CSV_HEADER = ("session", "episode", "reward", "success", "reward_ma", "success_ma")
DEFAULT_WINDOW = 5


def trailing_mean(values: Sequence[float], window: int) -> list[float]:
    out = []
    for k in range(1, len(values) + 1):
        lo = max(0, k - window)
        out.append(sum(values[lo:k]) / (k - lo))
    return out


def curve_rows(
    logs: Sequence[tuple[str, SessionLog]], window: int = DEFAULT_WINDOW
) -> list[tuple]:
    """One row per episode: (session, episode, reward, success, reward_ma, success_ma)."""
    rows = []
    for name, log in logs:
        rewards = [r.reward for r in log.episodes]
        hits = [1.0 if r.success else 0.0 for r in log.episodes]
        r_ma = trailing_mean(rewards, window)
        s_ma = trailing_mean(hits, window)
        for rec, rm, sm in zip(log.episodes, r_ma, s_ma):
            rows.append((name, rec.index, rec.reward, int(rec.success), rm, sm))
    return rows


def write_curves_csv(rows: Sequence[tuple], path: str | Path) -> None:
    with Path(path).open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(CSV_HEADER)
        for row in rows:
            writer.writerow([repr(v) if isinstance(v, float) else v for v in row])
