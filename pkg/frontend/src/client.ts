import type { AnswerLabel, PairPayload, Progress, SessionInfo } from "./types.js";

/** Non-2xx response; status and the service's detail message. */
export class ApiError extends Error {
  readonly status: number;

  constructor(status: number, detail: string) {
    super(detail);
    this.name = "ApiError";
    this.status = status;
  }
}

type FetchLike = (input: string, init?: RequestInit) => Promise<Response>;

export class AnnotationClient {
  private readonly base: string;
  private readonly fetchFn: FetchLike;

  constructor(baseUrl = "", fetchFn: FetchLike = (input, init) => fetch(input, init)) {
    this.base = baseUrl.replace(/\/+$/, "");
    this.fetchFn = fetchFn;
  }

  session(): Promise<SessionInfo> {
    return this.get<SessionInfo>("/api/session");
  }

  /** Pending or freshly drawn pair; null once the batch is complete (204). */
  async nextPair(): Promise<PairPayload | null> {
    const res = await this.fetchFn(this.base + "/api/next-pair");
    if (res.status === 204) return null;
    return this.decode<PairPayload>(res);
  }

  answer(queryId: string, label: AnswerLabel): Promise<Progress> {
    return this.post<Progress>("/api/answer", { query_id: queryId, label });
  }

  advance(): Promise<Progress> {
    return this.post<Progress>("/api/advance", {});
  }

  progress(): Promise<Progress> {
    return this.get<Progress>("/api/progress");
  }

  private async get<T>(path: string): Promise<T> {
    return this.decode<T>(await this.fetchFn(this.base + path));
  }

  private async post<T>(path: string, body: unknown): Promise<T> {
    const res = await this.fetchFn(this.base + path, {
      method: "POST",
      headers: { "Content-Type": "application/json" },
      body: JSON.stringify(body),
    });
    return this.decode<T>(res);
  }

  private async decode<T>(res: Response): Promise<T> {
    if (!res.ok) {
      let detail = res.statusText || `http ${res.status}`;
      try {
        const parsed: unknown = await res.json();
        if (
          typeof parsed === "object" &&
          parsed !== null &&
          typeof (parsed as { detail?: unknown }).detail === "string"
        ) {
          detail = (parsed as { detail: string }).detail;
        }
      } catch {
        // error body was not json; keep the status text
      }
      throw new ApiError(res.status, detail);
    }
    return (await res.json()) as T;
  }
}
