/**
 * Operator panel state machine.
 *
 * One pending episode at a time; submit stays disabled until the slider has
 * been touched; a single submission may be in flight, and polling pauses
 * while it is. Connection loss shows a banner and retries with backoff; a
 * schema mismatch is fatal (hard error screen, polling stops).
 */

import { ApiClient } from "./api.js";
import {
  ApiError,
  DistributionSeries,
  EpisodeRecord,
  PendingEpisode,
  SchemaMismatchError,
  SessionState,
} from "./types.js";

export const POLL_INTERVAL_MS = 400; // contract: <= 500 ms
export const BACKOFF_MAX_MS = 5000;
export const SLIDER_STEP = 0.05;

export type Phase = "idle" | "pending" | "submitting" | "waiting";

export interface SliderState {
  value: number;
  touched: boolean;
  locked: boolean;
}

export class OperatorController {
  phase: Phase = "idle";
  session: SessionState | null = null;
  pending: PendingEpisode | null = null;
  history: EpisodeRecord[] = [];
  distribution: DistributionSeries | null = null;
  slider: SliderState = { value: 0.5, touched: false, locked: false };
  banner: string | null = null;
  fatal: string | null = null;
  notice: string | null = null;
  private backoffMs = POLL_INTERVAL_MS;
  private inFlight = false;

  constructor(private readonly client: ApiClient) {}

  /** Delay until the next poll (grows under connection failures). */
  get nextPollMs(): number {
    return this.backoffMs;
  }

  get submitEnabled(): boolean {
    return (
      this.phase === "pending" &&
      this.pending !== null &&
      this.slider.touched &&
      !this.slider.locked
    );
  }

  sliderInput(value: number): void {
    if (this.slider.locked) return;
    this.slider = { ...this.slider, value: clamp01(value), touched: true };
  }

  /** One poll cycle; no-op while a submission is in flight or after a fatal. */
  async tick(): Promise<void> {
    if (this.inFlight || this.fatal !== null) return;
    try {
      const [session, pending] = await Promise.all([
        this.client.getSession(),
        this.client.getPending(),
      ]);
      this.session = session;
      this.history = await this.client.getHistory();
      this.distribution = await this.client.getDistribution();
      this.applyPending(pending);
      this.banner = null;
      this.backoffMs = POLL_INTERVAL_MS;
    } catch (err) {
      if (err instanceof SchemaMismatchError) {
        this.fatal = err.message;
        return;
      }
      this.banner = `connection lost: ${(err as Error).message}; retrying`;
      this.backoffMs = Math.min(this.backoffMs * 2, BACKOFF_MAX_MS);
    }
  }

  private applyPending(pending: PendingEpisode | null): void {
    if (pending === null) {
      // No stale schematic: the pending panel empties out immediately.
      this.pending = null;
      if (this.phase !== "submitting") {
        this.phase = this.session?.state === "waiting_reward" ? "waiting" : "idle";
      }
      return;
    }
    if (this.pending === null || this.pending.index !== pending.index) {
      this.pending = pending;
      this.phase = "pending";
      this.slider = { value: 0.5, touched: false, locked: false };
      this.notice = null;
    }
  }

  async submit(): Promise<void> {
    if (!this.submitEnabled || this.pending === null) return;
    const index = this.pending.index;
    this.inFlight = true;
    this.phase = "submitting";
    try {
      await this.client.submitReward(index, this.slider.value);
      this.notice = `episode ${index} scored ${this.slider.value.toFixed(2)}`;
      this.pending = null;
      this.phase = "waiting";
    } catch (err) {
      if (err instanceof ApiError && err.status === 409) {
        // Already scored (double submit after a reconnect): lock the slider
        // and let the next poll move on to the fresh episode.
        this.notice = `episode ${index}: ${err.reason}`;
        this.slider = { ...this.slider, locked: true };
        this.phase = "pending";
      } else if (err instanceof ApiError) {
        this.notice = `rejected (${err.status}): ${err.reason}`;
        this.phase = "pending";
      } else {
        this.banner = `submit failed: ${(err as Error).message}`;
        this.phase = "pending";
      }
    } finally {
      this.inFlight = false;
    }
  }
}

function clamp01(value: number): number {
  return Math.min(1, Math.max(0, value));
}
