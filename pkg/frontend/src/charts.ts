/**
 * Chart view models.
 *
 * The moving average mirrors the CSV exporter exactly: at episode k it covers
 * the trailing min(k, window) episodes including k. The std chart aggregates
 * the 22 dimensions into the three parameter blocks (contact location, wrist
 * rotation, hand pose).
 */

import { DistributionSeries, EpisodeRecord } from "./types.js";

export const MA_WINDOW = 5;

export interface RewardSeries {
  episodes: number[];
  rewards: number[];
  movingAvg: number[];
  successRate: number[];
}

export function trailingMean(values: number[], window: number): number[] {
  const out: number[] = [];
  for (let k = 1; k <= values.length; k++) {
    const lo = Math.max(0, k - window);
    const span = values.slice(lo, k);
    out.push(span.reduce((a, b) => a + b, 0) / span.length);
  }
  return out;
}

export function buildRewardSeries(
  records: EpisodeRecord[],
  window: number = MA_WINDOW,
): RewardSeries {
  const rewards = records.map((r) => r.reward);
  const hits = records.map((r) => (r.success ? 1 : 0));
  return {
    episodes: records.map((r) => r.index),
    rewards,
    movingAvg: trailingMean(rewards, window),
    successRate: trailingMean(hits, window),
  };
}

export interface StdBlockSeries {
  episodes: number[];
  mu: number[];
  theta: number[];
  pose: number[];
  warmupBoundary: number;
}

function blockMean(values: number[], start: number, end: number): number {
  const span = values.slice(start, end);
  return span.reduce((a, b) => a + b, 0) / span.length;
}

export function buildStdBlocks(series: DistributionSeries): StdBlockSeries {
  return {
    episodes: series.snapshots.map((s) => s.episode),
    mu: series.snapshots.map((s) => blockMean(s.std, 0, 3)),
    theta: series.snapshots.map((s) => blockMean(s.std, 3, 6)),
    pose: series.snapshots.map((s) => blockMean(s.std, 6, 22)),
    warmupBoundary: series.warmup,
  };
}
