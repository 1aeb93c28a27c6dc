// Typed client for the scoring service. The UI never derives numbers of its
// own; everything rendered comes out of these response shapes.

export interface HeuristicSummary {
  score: number;
  fired_rules: string[];
  is_bot: boolean;
}

export interface ScoreResponse {
  username: string;
  bot_likelihood_percent: number;
  heuristic: HeuristicSummary;
  model_version: string;
  features: Record<string, number>;
}

export interface DayCount {
  date: string;
  count: number;
}

export interface TagCount {
  tag: string;
  count: number;
}

export interface InsightsResponse {
  username: string;
  post_count: number;
  kind_counts: Record<string, number>;
  daily_activity: DayCount[];
  top_hashtags: TagCount[];
}

export interface NetworkNode {
  id: string;
  color: string;
  x: number;
  y: number;
  centrality: number;
}

export interface NetworkEdge {
  source: string;
  target: string;
  weight: number;
  color: string;
}

export interface NetworkResponse {
  nodes: NetworkNode[];
  edges: NetworkEdge[];
  truncated: boolean;
}

interface ErrorBody {
  error?: string;
  message?: string;
}

export class ApiHttpError extends Error {
  constructor(
    readonly status: number,
    readonly code: string,
    message: string,
  ) {
    super(message);
    this.name = "ApiHttpError";
  }
}

export class ApiClient {
  constructor(readonly baseUrl: string = "") {}

  private async request<T>(path: string): Promise<T> {
    const response = await fetch(`${this.baseUrl}${path}`);
    let body: unknown = null;
    try {
      body = await response.json();
    } catch {
      body = null;
    }
    if (!response.ok) {
      const err = (body ?? {}) as ErrorBody;
      throw new ApiHttpError(
        response.status,
        err.error ?? "unknown_error",
        err.message ?? `request failed with status ${response.status}`,
      );
    }
    return body as T;
  }

  score(username: string): Promise<ScoreResponse> {
    return this.request(`/api/v1/accounts/${encodeURIComponent(username)}/score`);
  }

  insights(username: string): Promise<InsightsResponse> {
    return this.request(`/api/v1/accounts/${encodeURIComponent(username)}/insights`);
  }

  network(seeds: string[], depth: number, maxNodes?: number): Promise<NetworkResponse> {
    const params = new URLSearchParams({ seeds: seeds.join(","), depth: String(depth) });
    if (maxNodes !== undefined) {
      params.set("max_nodes", String(maxNodes));
    }
    return this.request(`/api/v1/network?${params.toString()}`);
  }
}
