/** Typed client for the session service; every UI state change goes through here. */

import type {
  CreateSessionBody,
  DocPayload,
  LassoCreated,
  MapPayload,
  SessionCreated,
  TopicsPayload,
} from "./types.js";

export class ApiError extends Error {
  readonly status: number;
  readonly detail: unknown;

  constructor(status: number, detail: unknown) {
    super(typeof detail === "string" ? detail : JSON.stringify(detail));
    this.name = "ApiError";
    this.status = status;
    this.detail = detail;
  }
}

export type FetchLike = (input: string, init?: RequestInit) => Promise<Response>;

export class ApiClient {
  private readonly base: string;
  private readonly fetchImpl: FetchLike;

  constructor(baseUrl: string, fetchImpl?: FetchLike) {
    this.base = baseUrl.replace(/\/+$/, "");
    // default must be bound or browsers throw "Illegal invocation"
    this.fetchImpl = fetchImpl ?? ((input, init) => fetch(input, init));
  }

  private async request<T>(method: string, path: string, body?: unknown): Promise<T> {
    const init: RequestInit = { method, headers: {} };
    if (body !== undefined) {
      init.headers = { "content-type": "application/json" };
      init.body = JSON.stringify(body);
    }
    const resp = await this.fetchImpl(this.base + path, init);
    let payload: unknown = null;
    try {
      payload = await resp.json();
    } catch {
      payload = null;
    }
    if (!resp.ok) {
      const detail =
        payload !== null && typeof payload === "object" && "detail" in payload
          ? (payload as { detail: unknown }).detail
          : payload;
      throw new ApiError(resp.status, detail);
    }
    return payload as T;
  }

  private versioned(path: string, version?: number): string {
    return version === undefined ? path : `${path}?version=${version}`;
  }

  createSession(body: CreateSessionBody): Promise<SessionCreated> {
    return this.request("POST", "/sessions", body);
  }

  addPrompt(sessionId: string, text: string, weight?: number): Promise<MapPayload> {
    const body = weight === undefined ? { text } : { text, weight };
    return this.request("POST", `/sessions/${sessionId}/prompts`, body);
  }

  setWeights(sessionId: string, weights: number[]): Promise<MapPayload> {
    return this.request("PATCH", `/sessions/${sessionId}/weights`, { weights });
  }

  getMap(sessionId: string, version?: number): Promise<MapPayload> {
    return this.request("GET", this.versioned(`/sessions/${sessionId}/map`, version));
  }

  getTopics(sessionId: string, version?: number): Promise<TopicsPayload> {
    return this.request("GET", this.versioned(`/sessions/${sessionId}/topics`, version));
  }

  getDoc(sessionId: string, docId: string, version?: number): Promise<DocPayload> {
    const path = `/sessions/${sessionId}/docs/${encodeURIComponent(docId)}`;
    return this.request("GET", this.versioned(path, version));
  }

  lasso(sessionId: string, docIds: string[]): Promise<LassoCreated> {
    return this.request("POST", `/sessions/${sessionId}/lasso`, { doc_ids: docIds });
  }
}
