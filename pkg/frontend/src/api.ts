import type {
  DocumentInfo,
  GraphDoc,
  HistoryResponse,
  QueryResponse,
  SessionResponse,
} from "./types.js";

export class ApiError extends Error {
  constructor(
    public status: number,
    public code: string,
    message: string,
  ) {
    super(message);
  }
}

async function parseFailure(response: Response): Promise<ApiError> {
  let code = "http_error";
  let message = response.statusText || `HTTP ${response.status}`;
  try {
    const body = await response.json();
    if (body && typeof body.code === "string") code = body.code;
    if (body && typeof body.message === "string") message = body.message;
  } catch {
    // non-JSON error body; keep defaults
  }
  return new ApiError(response.status, code, message);
}

export class ApiClient {
  constructor(private base = "") {}

  private async request<T>(path: string, init?: RequestInit): Promise<T> {
    const response = await fetch(this.base + path, init);
    if (!response.ok) throw await parseFailure(response);
    return (await response.json()) as T;
  }

  private postJson<T>(path: string, body: unknown): Promise<T> {
    return this.request<T>(path, {
      method: "POST",
      headers: { "Content-Type": "application/json" },
      body: JSON.stringify(body),
    });
  }

  createSession(model?: string): Promise<SessionResponse> {
    return this.postJson("/api/session", model ? { model } : {});
  }

  query(sessionId: string, question: string): Promise<QueryResponse> {
    return this.postJson("/api/query", { session_id: sessionId, question });
  }

  setModel(sessionId: string, model: string): Promise<{ active_model: string }> {
    return this.postJson("/api/model", { session_id: sessionId, model });
  }

  history(sessionId: string): Promise<HistoryResponse> {
    return this.request(`/api/history?session_id=${encodeURIComponent(sessionId)}`);
  }

  clearHistory(sessionId: string): Promise<{ cleared: boolean; active_model: string }> {
    return this.postJson("/api/history/clear", { session_id: sessionId });
  }

  listDocuments(): Promise<{ documents: DocumentInfo[] }> {
    return this.request("/api/documents");
  }

  uploadDocument(file: File): Promise<DocumentInfo> {
    const form = new FormData();
    form.append("file", file, file.name);
    return this.request("/api/documents", { method: "POST", body: form });
  }

  deleteDocument(name: string): Promise<{ deleted: string }> {
    return this.request(`/api/documents/${encodeURIComponent(name)}`, { method: "DELETE" });
  }

  triggerEmbed(): Promise<{ chunk_count: number }> {
    return this.request("/api/embed", { method: "POST" });
  }
}

export type { GraphDoc };
