/** Typed client for the screening service HTTP API. */

export interface TopicInfo {
  topic_id: string;
  title_query: string;
  pool_size: number;
}

export interface BatchDoc {
  doc_id: string;
  title: string;
  abstract: string;
  score: number;
}

export interface Progress {
  iteration: number;
  screened: number;
  relevant_found: number;
  total: number;
  recall_curve: [number, number][];
}

export interface SessionCreated {
  session_id: string;
  batch_token: string;
  batch: BatchDoc[];
  progress: Progress;
}

export interface JudgmentsApplied {
  batch_token: string | null;
  batch: BatchDoc[] | null;
  progress: Progress;
  finished: boolean;
}

export interface SessionSummary {
  session_id: string;
  topic_id: string;
  strategy: string;
  k: number;
  iteration: number;
  screened: number;
  relevant_found: number;
  total: number;
  finished: boolean;
  outstanding_batch: string[] | null;
  batch_token: string | null;
}

export interface DocumentBody {
  doc_id: string;
  title: string;
  abstract: string;
}

export interface Judgment {
  doc_id: string;
  relevant: boolean;
}

export interface CreateSessionRequest {
  topic_id: string;
  strategy?: string;
  weights?: { alpha: number; beta: number; gamma: number };
  k?: number;
}

export type FetchLike = (url: string, init?: RequestInit) => Promise<Response>;

/** Non-2xx response, carrying the service's {error, detail} payload. */
export class ApiError extends Error {
  constructor(
    readonly status: number,
    readonly code: string,
    readonly detail: string,
  ) {
    super(`${status} ${code}: ${detail}`);
    this.name = "ApiError";
  }
}

async function parse<T>(response: Response): Promise<T> {
  if (response.ok) {
    return (await response.json()) as T;
  }
  let code = "error";
  let detail = response.statusText;
  try {
    const body = (await response.json()) as { error?: string; detail?: string };
    if (body.error) code = body.error;
    if (body.detail) detail = body.detail;
  } catch {
    // non-JSON error body; keep the status text
  }
  throw new ApiError(response.status, code, detail);
}

export class ApiClient {
  constructor(
    private readonly baseUrl: string,
    private readonly fetchImpl: FetchLike = (url, init) => fetch(url, init),
  ) {}

  private get(path: string): Promise<Response> {
    return this.fetchImpl(this.baseUrl + path);
  }

  private post(path: string, body: unknown): Promise<Response> {
    return this.fetchImpl(this.baseUrl + path, {
      method: "POST",
      headers: { "Content-Type": "application/json" },
      body: JSON.stringify(body),
    });
  }

  async topics(): Promise<TopicInfo[]> {
    return parse(await this.get("/api/topics"));
  }

  async document(docId: string): Promise<DocumentBody> {
    return parse(await this.get(`/api/documents/${encodeURIComponent(docId)}`));
  }

  async createSession(request: CreateSessionRequest): Promise<SessionCreated> {
    return parse(await this.post("/api/sessions", request));
  }

  async submitJudgments(
    sessionId: string,
    batchToken: string,
    judgments: Judgment[],
  ): Promise<JudgmentsApplied> {
    return parse(
      await this.post(`/api/sessions/${encodeURIComponent(sessionId)}/judgments`, {
        batch_token: batchToken,
        judgments,
      }),
    );
  }

  async getSession(sessionId: string): Promise<SessionSummary> {
    return parse(await this.get(`/api/sessions/${encodeURIComponent(sessionId)}`));
  }
}
