import type {
  AnnotationSubmission,
  BatchPayload,
  MetricsPayload,
  SessionDescriptor,
  SubmitReply,
} from "./types.js";

/**
 * Error raised for any non-2xx response or network failure. `status` is the
 * HTTP status (0 when the request never reached the server) and `code` is
 * the server's machine-readable error code ("network" for transport
 * failures), so callers can distinguish a 409 wrong-status from a dead
 * server without string matching.
 */
export class ApiError extends Error {
  status: number;
  code: string;

  constructor(status: number, code: string, message: string) {
    super(message);
    this.name = "ApiError";
    this.status = status;
    this.code = code;
  }

  get isNetwork(): boolean {
    return this.status === 0;
  }
}

async function request<T>(url: string, init?: RequestInit): Promise<T> {
  let res: Response;
  try {
    res = await fetch(url, init);
  } catch (err) {
    const msg = err instanceof Error ? err.message : String(err);
    throw new ApiError(0, "network", msg);
  }
  if (!res.ok) {
    let code = "http_error";
    let message = `${res.status} ${res.statusText}`;
    try {
      const body = await res.json();
      if (body && typeof body.error === "string") message = body.error;
      if (body && typeof body.code === "string") code = body.code;
    } catch {
      // non-JSON error body; keep the status line
    }
    throw new ApiError(res.status, code, message);
  }
  return (await res.json()) as T;
}

function post(body: unknown): RequestInit {
  return {
    method: "POST",
    headers: { "Content-Type": "application/json" },
    body: JSON.stringify(body),
  };
}

export class Client {
  readonly baseUrl: string;

  constructor(baseUrl = "") {
    // strip a trailing slash so path concatenation stays predictable
    this.baseUrl = baseUrl.replace(/\/$/, "");
  }

  createSession(body: Record<string, unknown>): Promise<SessionDescriptor> {
    return request(`${this.baseUrl}/sessions`, post(body));
  }

  getSession(id: string): Promise<SessionDescriptor> {
    return request(`${this.baseUrl}/sessions/${id}`);
  }

  getBatch(id: string): Promise<BatchPayload> {
    return request(`${this.baseUrl}/sessions/${id}/batch`);
  }

  submitAnswers(id: string, body: AnnotationSubmission): Promise<SubmitReply> {
    return request(`${this.baseUrl}/sessions/${id}/annotations`, post(body));
  }

  getMetrics(id: string): Promise<MetricsPayload> {
    return request(`${this.baseUrl}/sessions/${id}/metrics`);
  }
}
