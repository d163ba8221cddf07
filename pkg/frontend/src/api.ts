/** Thin typed client over the harness HTTP API. */

import {
  ApiError,
  DistributionSeries,
  EpisodeRecord,
  PendingEpisode,
  SessionState,
  parseDistribution,
  parseHistory,
  parsePending,
  parseSession,
} from "./types.js";

type FetchLike = (input: string, init?: RequestInit) => Promise<Response>;

/** Pull a human-readable reason out of a FastAPI error body. */
export function errorReason(body: unknown, fallback: string): string {
  if (typeof body === "object" && body !== null && "detail" in body) {
    const detail = (body as { detail: unknown }).detail;
    if (typeof detail === "string") return detail;
    if (Array.isArray(detail) && detail.length > 0) {
      const first = detail[0] as { msg?: string };
      if (first && typeof first.msg === "string") return first.msg;
    }
  }
  return fallback;
}

export class ApiClient {
  constructor(
    private readonly baseUrl: string,
    private readonly fetchFn: FetchLike = (input, init) => fetch(input, init),
  ) {}

  private async getJson(path: string): Promise<unknown> {
    const resp = await this.fetchFn(`${this.baseUrl}${path}`);
    if (!resp.ok) {
      throw new ApiError(resp.status, errorReason(await safeJson(resp), resp.statusText));
    }
    return resp.json();
  }

  async getSession(): Promise<SessionState> {
    return parseSession(await this.getJson("/api/session"));
  }

  async getPending(): Promise<PendingEpisode | null> {
    return parsePending(await this.getJson("/api/episode/pending"));
  }

  async getHistory(start = 1): Promise<EpisodeRecord[]> {
    return parseHistory(await this.getJson(`/api/history?start=${start}`));
  }

  async getDistribution(): Promise<DistributionSeries> {
    return parseDistribution(await this.getJson("/api/distribution"));
  }

  async submitReward(index: number, reward: number): Promise<void> {
    if (!(reward >= 0 && reward <= 1)) {
      throw new ApiError(422, `reward ${reward} outside [0, 1]`);
    }
    const resp = await this.fetchFn(`${this.baseUrl}/api/episode/${index}/reward`, {
      method: "POST",
      headers: { "Content-Type": "application/json" },
      body: JSON.stringify({ reward }),
    });
    if (!resp.ok) {
      throw new ApiError(resp.status, errorReason(await safeJson(resp), resp.statusText));
    }
  }
}

async function safeJson(resp: Response): Promise<unknown> {
  try {
    return await resp.json();
  } catch {
    return null;
  }
}
