// Typed client for the review service HTTP API. Every UI mutation goes
// through here; the UI keeps no persistence of its own.

export interface ReviewItem {
  pair_id: string;
  query_id: string;
  source_id: string;
  target_id: string;
  source_body: string;
  target_body: string;
  score: number;
  overlap_terms: string[];
  state: string;
}

export interface ProjectMetrics {
  items: number;
  pending: number;
  approved: number;
  rejected: number;
  decided: number;
  precision_vs_truth: number | null;
}

export interface ProjectSummary {
  id: string;
  dataset: string;
  scorer: Record<string, unknown>;
  created_ts_ms: number;
  metrics: ProjectMetrics;
}

export interface BatchResponse {
  items: ReviewItem[];
  pending_total: number;
}

export interface DecisionEntry {
  seq: number;
  pair_id: string;
  verdict: string;
  reviewer: string;
  ts_ms: number;
}

export interface RescoreTicket {
  job_id: string;
  status_url: string;
}

export interface JobStatus {
  job_id: string;
  state: 'running' | 'done' | 'failed';
  error: string | null;
}

export type ScorerSpec = string | { kind: string; endpoint?: string; name?: string };

export class ApiError extends Error {
  constructor(
    readonly status: number,
    detail: string,
  ) {
    super(detail);
    this.name = 'ApiError';
  }
}

export type FetchLike = (input: string, init?: RequestInit) => Promise<Response>;

export interface ApiClient {
  getProject(projectId: string): Promise<ProjectSummary>;
  getBatch(projectId: string, k: number): Promise<BatchResponse>;
  postDecision(
    projectId: string,
    pairId: string,
    verdict: 'approve' | 'reject',
    reviewer: string,
  ): Promise<DecisionEntry>;
  postRescore(projectId: string, scorer: ScorerSpec): Promise<RescoreTicket>;
  getJob(statusUrl: string): Promise<JobStatus>;
  fetchExport(projectId: string): Promise<string>;
  exportUrl(projectId: string): string;
}

async function parseError(response: Response): Promise<ApiError> {
  let detail = `HTTP ${response.status}`;
  try {
    const body = (await response.json()) as { detail?: unknown };
    if (body && typeof body.detail === 'string') {
      detail = body.detail;
    }
  } catch {
    // non-JSON error body: keep the status text
  }
  return new ApiError(response.status, detail);
}

export function createClient(baseUrl: string, fetchFn?: FetchLike): ApiClient {
  const doFetch: FetchLike = fetchFn ?? ((input, init) => fetch(input, init));
  const root = baseUrl.replace(/\/+$/, '');

  async function asJson<T>(response: Response): Promise<T> {
    if (!response.ok) {
      throw await parseError(response);
    }
    return (await response.json()) as T;
  }

  return {
    async getProject(projectId) {
      return asJson(await doFetch(`${root}/projects/${encodeURIComponent(projectId)}`));
    },

    async getBatch(projectId, k) {
      const url = `${root}/projects/${encodeURIComponent(projectId)}/batch?k=${k}`;
      return asJson(await doFetch(url));
    },

    async postDecision(projectId, pairId, verdict, reviewer) {
      const url = `${root}/projects/${encodeURIComponent(projectId)}/decisions`;
      return asJson(
        await doFetch(url, {
          method: 'POST',
          headers: { 'Content-Type': 'application/json' },
          body: JSON.stringify({ pair_id: pairId, verdict, reviewer }),
        }),
      );
    },

    async postRescore(projectId, scorer) {
      const url = `${root}/projects/${encodeURIComponent(projectId)}/rescore`;
      return asJson(
        await doFetch(url, {
          method: 'POST',
          headers: { 'Content-Type': 'application/json' },
          body: JSON.stringify({ scorer }),
        }),
      );
    },

    async getJob(statusUrl) {
      const url = statusUrl.startsWith('http') ? statusUrl : `${root}${statusUrl}`;
      return asJson(await doFetch(url));
    },

    async fetchExport(projectId) {
      const response = await doFetch(this.exportUrl(projectId));
      if (!response.ok) {
        throw await parseError(response);
      }
      return response.text();
    },

    exportUrl(projectId) {
      return `${root}/projects/${encodeURIComponent(projectId)}/export`;
    },
  };
}
