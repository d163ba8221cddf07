import { describe, expect, it } from "vitest";

import { ApiClient } from "../src/api.js";
import { BACKOFF_MAX_MS, OperatorController, POLL_INTERVAL_MS } from "../src/state.js";
import { PendingEpisode, SCHEMA_VERSION } from "../src/types.js";

const SESSION = {
  schema_version: SCHEMA_VERSION,
  state: "waiting_reward",
  task_id: "pick-cup",
  display_name: "Pick cup",
  reward_mode: "human",
  episodes_total: 30,
  warmup: 10,
  elites: 10,
  episode_count: 0,
  pending_index: 1,
};

function pendingDoc(index: number): PendingEpisode {
  return {
    index,
    schematic: {
      box_lo: [0, -0.3],
      box_hi: [0.6, 0.3],
      object_center: [0.3, 0.0],
      object_radius: 0.05,
      contact: [0.31, 0.02],
      wrist_dir: [1, 0],
      closures: [0.2, 0.5, 0.5, 0.4],
    },
    xi: { mu: [0.3, 0, 0.06], theta_wrist: [0, 0.4, 0], pose: new Array(16).fill(0.5) },
    eps: new Array(22).fill(0.01),
    executed: { mu: [0.31, 0, 0.06], theta_wrist: [0, 0.4, 0], pose: new Array(16).fill(0.51) },
  };
}

interface Behavior {
  pending?: PendingEpisode | null;
  failNetwork?: boolean;
  schemaMismatch?: boolean;
  rewardStatus?: number;
  rewardDetail?: string;
}

function makeClient(behavior: Behavior) {
  const calls: string[] = [];
  const fetchFn = async (input: string, init?: RequestInit): Promise<Response> => {
    calls.push(`${init?.method ?? "GET"} ${input}`);
    if (behavior.failNetwork) throw new TypeError("fetch failed");
    const version = behavior.schemaMismatch ? 99 : SCHEMA_VERSION;
    if (input.endsWith("/api/session")) {
      return json({ ...SESSION, schema_version: version });
    }
    if (input.endsWith("/api/episode/pending")) {
      return json({ schema_version: version, pending: behavior.pending ?? null });
    }
    if (input.includes("/api/history")) {
      return json({ schema_version: version, records: [] });
    }
    if (input.includes("/api/distribution")) {
      return json({ schema_version: version, warmup: 10, snapshots: [] });
    }
    if (input.includes("/reward")) {
      if (behavior.rewardStatus && behavior.rewardStatus !== 200) {
        return json({ detail: behavior.rewardDetail ?? "rejected" }, behavior.rewardStatus);
      }
      return json({ schema_version: version, ok: true });
    }
    throw new Error(`unexpected url ${input}`);
  };
  return { client: new ApiClient("", fetchFn), calls };
}

function json(body: unknown, status = 200): Response {
  return new Response(JSON.stringify(body), { status });
}

describe("OperatorController", () => {
  it("polls no faster than the contract allows", () => {
    expect(POLL_INTERVAL_MS).toBeLessThanOrEqual(500);
  });

  it("populates the pending panel when an episode appears", async () => {
    const { client } = makeClient({ pending: pendingDoc(1) });
    const controller = new OperatorController(client);
    await controller.tick();
    expect(controller.phase).toBe("pending");
    expect(controller.pending?.index).toBe(1);
    expect(controller.slider.touched).toBe(false);
    expect(controller.submitEnabled).toBe(false);
  });

  it("clears stale state when nothing is pending", async () => {
    const behavior: Behavior = { pending: pendingDoc(1) };
    const { client } = makeClient(behavior);
    const controller = new OperatorController(client);
    await controller.tick();
    behavior.pending = null;
    await controller.tick();
    expect(controller.pending).toBeNull();
    expect(controller.phase === "idle" || controller.phase === "waiting").toBe(true);
  });

  it("enables submit only after the slider is touched", async () => {
    const { client } = makeClient({ pending: pendingDoc(1) });
    const controller = new OperatorController(client);
    await controller.tick();
    expect(controller.submitEnabled).toBe(false);
    controller.sliderInput(0.7);
    expect(controller.submitEnabled).toBe(true);
    expect(controller.slider.value).toBe(0.7);
  });

  it("submits and flips to waiting-for-next", async () => {
    const { client, calls } = makeClient({ pending: pendingDoc(2) });
    const controller = new OperatorController(client);
    await controller.tick();
    controller.sliderInput(0.7);
    await controller.submit();
    expect(controller.phase).toBe("waiting");
    expect(controller.pending).toBeNull();
    expect(calls.some((c) => c === "POST /api/episode/2/reward")).toBe(true);
  });

  it("locks the slider on a duplicate (409) submission", async () => {
    const { client } = makeClient({ pending: pendingDoc(3), rewardStatus: 409,
      rewardDetail: "episode 3 already has a reward" });
    const controller = new OperatorController(client);
    await controller.tick();
    controller.sliderInput(0.5);
    await controller.submit();
    expect(controller.slider.locked).toBe(true);
    expect(controller.notice).toContain("already has a reward");
    expect(controller.submitEnabled).toBe(false);
    controller.sliderInput(0.9); // locked slider ignores input
    expect(controller.slider.value).toBe(0.5);
  });

  it("shows the server reason on a 422", async () => {
    const { client } = makeClient({ pending: pendingDoc(4), rewardStatus: 422,
      rewardDetail: "reward out of range" });
    const controller = new OperatorController(client);
    await controller.tick();
    controller.sliderInput(1.0);
    await controller.submit();
    expect(controller.notice).toContain("reward out of range");
    expect(controller.phase).toBe("pending");
  });

  it("raises a banner and backs off on connection loss, then recovers", async () => {
    const behavior: Behavior = { failNetwork: true };
    const { client } = makeClient(behavior);
    const controller = new OperatorController(client);
    await controller.tick();
    expect(controller.banner).toContain("connection lost");
    const afterOne = controller.nextPollMs;
    await controller.tick();
    expect(controller.nextPollMs).toBeGreaterThan(afterOne);
    for (let i = 0; i < 10; i++) await controller.tick();
    expect(controller.nextPollMs).toBeLessThanOrEqual(BACKOFF_MAX_MS);
    behavior.failNetwork = false;
    behavior.pending = pendingDoc(1);
    await controller.tick();
    expect(controller.banner).toBeNull();
    expect(controller.nextPollMs).toBe(POLL_INTERVAL_MS);
  });

  it("treats a schema mismatch as fatal and stops updating", async () => {
    const behavior: Behavior = { schemaMismatch: true };
    const { client, calls } = makeClient(behavior);
    const controller = new OperatorController(client);
    await controller.tick();
    expect(controller.fatal).toContain("schema 99");
    const callCount = calls.length;
    await controller.tick(); // fatal: no further requests
    expect(calls.length).toBe(callCount);
  });

  it("pauses polling while a submission is in flight", async () => {
    let release: (() => void) | null = null;
    const gate = new Promise<void>((resolve) => (release = resolve));
    const calls: string[] = [];
    const fetchFn = async (input: string, init?: RequestInit): Promise<Response> => {
      calls.push(`${init?.method ?? "GET"} ${input}`);
      if (input.includes("/reward")) {
        await gate;
        return json({ schema_version: SCHEMA_VERSION, ok: true });
      }
      if (input.endsWith("/api/session")) return json(SESSION);
      if (input.endsWith("/api/episode/pending")) {
        return json({ schema_version: SCHEMA_VERSION, pending: pendingDoc(1) });
      }
      if (input.includes("/api/history")) return json({ schema_version: SCHEMA_VERSION, records: [] });
      return json({ schema_version: SCHEMA_VERSION, warmup: 10, snapshots: [] });
    };
    const controller = new OperatorController(new ApiClient("", fetchFn));
    await controller.tick();
    controller.sliderInput(0.6);
    const submitting = controller.submit();
    const before = calls.length;
    await controller.tick(); // must be a no-op while the POST is in flight
    expect(calls.length).toBe(before);
    release!();
    await submitting;
  });
});
