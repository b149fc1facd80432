/** Typed client for the QA session service. Field names mirror the wire JSON. */

export interface SelectionTrace {
  scores: number[];
  probabilities: number[];
  selected: number[];
  threshold: number;
}

export interface TurnRecord {
  turn_index: number;
  question: string;
  answer: string;
  char_span: [number, number] | null;
  cannot_answer: boolean;
  selection: SelectionTrace;
}

export interface AskResponse extends TurnRecord {
  window_scores: number[][];
}

export interface SessionTranscript {
  session_id: string;
  passage: string;
  title: string;
  created_at: number;
  turns: TurnRecord[];
}

export interface HealthInfo {
  status: string;
  vocab_size: number;
  max_seq_len: number;
  selection_mode: string;
  threshold: number;
  max_k: number;
  max_turns: number;
}

export class ApiError extends Error {
  constructor(
    readonly status: number,
    message: string,
  ) {
    super(message);
    this.name = "ApiError";
  }
}

async function request<T>(url: string, init?: RequestInit): Promise<T> {
  const response = await fetch(url, init);
  if (!response.ok) {
    let detail = response.statusText || `HTTP ${response.status}`;
    try {
      const body = (await response.json()) as { detail?: unknown };
      if (typeof body.detail === "string") {
        detail = body.detail;
      }
    } catch {
      // error body was not JSON; keep the status text
    }
    throw new ApiError(response.status, detail);
  }
  if (response.status === 204) {
    return undefined as T;
  }
  return (await response.json()) as T;
}

function post(body: unknown): RequestInit {
  return {
    method: "POST",
    headers: { "content-type": "application/json" },
    body: JSON.stringify(body),
  };
}

export class Client {
  constructor(readonly baseUrl: string = "") {}

  private url(path: string): string {
    return this.baseUrl.replace(/\/+$/, "") + path;
  }

  createSession(passage: string, title = ""): Promise<{ session_id: string }> {
    return request(this.url("/sessions"), post({ passage, title }));
  }

  ask(sessionId: string, question: string): Promise<AskResponse> {
    return request(this.url(`/sessions/${encodeURIComponent(sessionId)}/ask`), post({ question }));
  }

  getSession(sessionId: string): Promise<SessionTranscript> {
    return request(this.url(`/sessions/${encodeURIComponent(sessionId)}`));
  }

  deleteSession(sessionId: string): Promise<void> {
    return request(this.url(`/sessions/${encodeURIComponent(sessionId)}`), { method: "DELETE" });
  }

  health(): Promise<HealthInfo> {
    return request(this.url("/healthz"));
  }
}
