/**
 * API payload types and validation.
 *
 * Every payload carries schema_version; a mismatch throws SchemaMismatchError
 * so the panel shows a hard error screen instead of misrendering.
 */

export const SCHEMA_VERSION = 1;

export class SchemaMismatchError extends Error {
  constructor(got: unknown) {
    super(`server speaks schema ${String(got)}, this UI expects ${SCHEMA_VERSION}`);
    this.name = "SchemaMismatchError";
  }
}

export class ApiError extends Error {
  constructor(public status: number, public reason: string) {
    super(`HTTP ${status}: ${reason}`);
    this.name = "ApiError";
  }
}

export interface GraspParamsDoc {
  mu: number[];
  theta_wrist: number[];
  pose: number[];
}

export interface Schematic {
  box_lo: number[];
  box_hi: number[];
  object_center: number[];
  object_radius: number;
  contact: number[];
  wrist_dir: number[];
  closures: number[];
}

export interface PendingEpisode {
  index: number;
  schematic: Schematic;
  xi: GraspParamsDoc;
  eps: number[];
  executed: GraspParamsDoc;
}

export interface SessionState {
  state: string;
  task_id: string;
  display_name: string;
  reward_mode: string;
  episodes_total: number;
  warmup: number;
  elites: number;
  episode_count: number;
  pending_index: number | null;
}

export interface EpisodeRecord {
  index: number;
  reward: number;
  success: boolean;
  dist_mean: number[];
  dist_std: number[];
  elites: number[];
}

export interface DistributionSnapshot {
  episode: number;
  mean: number[];
  std: number[];
}

export interface DistributionSeries {
  warmup: number;
  snapshots: DistributionSnapshot[];
}

function checkVersion(doc: Record<string, unknown>): void {
  if (doc["schema_version"] !== SCHEMA_VERSION) {
    throw new SchemaMismatchError(doc["schema_version"]);
  }
}

function asObject(value: unknown, what: string): Record<string, unknown> {
  if (typeof value !== "object" || value === null || Array.isArray(value)) {
    throw new Error(`${what} is not an object`);
  }
  return value as Record<string, unknown>;
}

export function parseSession(value: unknown): SessionState {
  const doc = asObject(value, "session payload");
  checkVersion(doc);
  return doc as unknown as SessionState;
}

export function parsePending(value: unknown): PendingEpisode | null {
  const doc = asObject(value, "pending payload");
  checkVersion(doc);
  return (doc["pending"] ?? null) as PendingEpisode | null;
}

export function parseHistory(value: unknown): EpisodeRecord[] {
  const doc = asObject(value, "history payload");
  checkVersion(doc);
  return (doc["records"] ?? []) as EpisodeRecord[];
}

export function parseDistribution(value: unknown): DistributionSeries {
  const doc = asObject(value, "distribution payload");
  checkVersion(doc);
  return {
    warmup: doc["warmup"] as number,
    snapshots: (doc["snapshots"] ?? []) as DistributionSnapshot[],
  };
}
