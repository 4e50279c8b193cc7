/** Typed client of the session-service JSON API. */

import type {
  JobView,
  LayerRecord,
  MetricsReport,
  ProjectionPayload,
  ScoresPayload,
  SessionView,
} from "./types.js";

export type FetchLike = (input: string, init?: RequestInit) => Promise<Response>;

export class ApiError extends Error {
  constructor(
    public status: number,
    detail: string,
  ) {
    super(detail);
  }
}

export class StudioApi {
  constructor(
    private base: string = "",
    private fetchImpl: FetchLike = (input, init) => fetch(input, init),
  ) {}

  private async request<T>(method: string, path: string, body?: unknown): Promise<T> {
    const init: RequestInit = { method, headers: {} };
    if (body !== undefined) {
      init.body = JSON.stringify(body);
      (init.headers as Record<string, string>)["Content-Type"] = "application/json";
    }
    const response = await this.fetchImpl(this.base + path, init);
    if (!response.ok) {
      let detail = `${response.status}`;
      try {
        const doc = (await response.json()) as { detail?: string };
        if (doc.detail) detail = doc.detail;
      } catch {
        /* non-JSON error body */
      }
      throw new ApiError(response.status, detail);
    }
    return (await response.json()) as T;
  }

  listSessions(): Promise<{ sessions: SessionView[] }> {
    return this.request("GET", "/api/sessions");
  }

  getSession(id: string): Promise<SessionView> {
    return this.request("GET", `/api/sessions/${id}`);
  }

  prepareLayer(id: string, layer: number): Promise<ProjectionPayload | ScoresPayload> {
    return this.request("POST", `/api/sessions/${id}/layers/${layer}/prepare`);
  }

  getProjection(id: string, layer: number): Promise<ProjectionPayload> {
    return this.request("GET", `/api/sessions/${id}/layers/${layer}/projection`);
  }

  getScores(id: string, layer: number): Promise<ScoresPayload> {
    return this.request("GET", `/api/sessions/${id}/layers/${layer}/scores`);
  }

  getDecisions(id: string, layer: number): Promise<{ layer: number; remove: number[] }> {
    return this.request("GET", `/api/sessions/${id}/layers/${layer}/decisions`);
  }

  putDecisions(id: string, layer: number, remove: number[]): Promise<{ layer: number; remove: number[] }> {
    return this.request("PUT", `/api/sessions/${id}/layers/${layer}/decisions`, { remove });
  }

  commitLayer(id: string, layer: number): Promise<JobView> {
    return this.request("POST", `/api/sessions/${id}/layers/${layer}/commit`);
  }

  getJob(id: string, jobId: string): Promise<JobView> {
    return this.request("GET", `/api/sessions/${id}/jobs/${jobId}`);
  }

  getLayerRecord(id: string, layer: number): Promise<LayerRecord> {
    return this.request("GET", `/api/sessions/${id}/layers/${layer}/record`);
  }

  finalize(id: string): Promise<JobView> {
    return this.request("POST", `/api/sessions/${id}/finalize`);
  }

  getMetrics(id: string): Promise<MetricsReport> {
    return this.request("GET", `/api/sessions/${id}/metrics`);
  }

  /** Poll a job until it leaves the running state. Network failures retry
   * with exponential backoff; polling a GET never duplicates the commit. */
  async pollJob(
    sessionId: string,
    jobId: string,
    onUpdate: (job: JobView) => void,
    opts: { intervalMs?: number; maxBackoffMs?: number; sleep?: (ms: number) => Promise<void> } = {},
  ): Promise<JobView> {
    const interval = opts.intervalMs ?? 500;
    const maxBackoff = opts.maxBackoffMs ?? 8000;
    const sleep = opts.sleep ?? ((ms: number) => new Promise((r) => setTimeout(r, ms)));
    let backoff = interval;
    for (;;) {
      let job: JobView;
      try {
        job = await this.getJob(sessionId, jobId);
      } catch (err) {
        if (err instanceof ApiError) throw err; // server answered: not transient
        await sleep(backoff);
        backoff = Math.min(backoff * 2, maxBackoff);
        continue;
      }
      backoff = interval;
      onUpdate(job);
      if (job.status !== "running") return job;
      await sleep(interval);
    }
  }
}
