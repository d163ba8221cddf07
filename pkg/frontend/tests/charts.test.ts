import { describe, expect, it } from "vitest";

import { buildRewardSeries, buildStdBlocks, trailingMean } from "../src/charts.js";
import { EpisodeRecord } from "../src/types.js";

function record(index: number, reward: number, success = false): EpisodeRecord {
  return {
    index,
    reward,
    success,
    dist_mean: new Array(22).fill(0),
    dist_std: new Array(22).fill(0.1),
    elites: [],
  };
}

describe("trailingMean", () => {
  it("covers the trailing min(k, window) episodes, matching the CSV export", () => {
    const values = [1, 2, 3, 4, 5, 6];
    const ma = trailingMean(values, 5);
    expect(ma[0]).toBe(1);
    expect(ma[4]).toBeCloseTo((1 + 2 + 3 + 4 + 5) / 5, 12); // episode 5 = mean of 1..5
    expect(ma[5]).toBeCloseTo((2 + 3 + 4 + 5 + 6) / 5, 12);
  });

  it("handles an empty series", () => {
    expect(trailingMean([], 5)).toEqual([]);
  });
});

describe("buildRewardSeries", () => {
  it("keeps API values verbatim and derives only the averages", () => {
    const records = [record(1, 0.25), record(2, 0.75, true), record(3, 0.5)];
    const series = buildRewardSeries(records);
    expect(series.episodes).toEqual([1, 2, 3]);
    expect(series.rewards).toEqual([0.25, 0.75, 0.5]);
    expect(series.movingAvg[2]).toBeCloseTo(0.5, 12);
    expect(series.successRate).toEqual([0, 0.5, 1 / 3]);
  });
});

describe("buildStdBlocks", () => {
  it("averages std over the three parameter blocks", () => {
    const std = new Array(22).fill(0);
    std.fill(0.02, 0, 3);
    std.fill(0.2, 3, 6);
    std.fill(0.05, 6, 22);
    const series = buildStdBlocks({
      warmup: 10,
      snapshots: [{ episode: 1, mean: new Array(22).fill(0), std }],
    });
    expect(series.mu[0]).toBeCloseTo(0.02, 12);
    expect(series.theta[0]).toBeCloseTo(0.2, 12);
    expect(series.pose[0]).toBeCloseTo(0.05, 12);
    expect(series.warmupBoundary).toBe(10);
  });
});
