import type { Closer, RoundRecord } from "../src/types.js";

/** Deterministic LCG so randomized cases are reproducible run to run. */
export function makeRng(seed: number): () => number {
  let s = seed >>> 0;
  return () => {
    s = (s * 1664525 + 1013904223) >>> 0;
    return s / 2 ** 32;
  };
}

export function randomRecord(rng: () => number, round: number): RoundRecord {
  const chosen = Array.from({ length: 1 + Math.floor(rng() * 5) }, () =>
    Math.floor(rng() * 4000),
  );
  return {
    round,
    strategy: ["joint_entropy", "random", "variance"][Math.floor(rng() * 3)],
    chosen_ids: chosen,
    batch_entropy: rng() < 0.3 ? null : (rng() - 0.2) * 40,
    accuracy: rng(),
    select_ms: rng() * 5000,
    train_ms: rng() * 20000,
  };
}

/** In-memory Storage stand-in (localStorage shape, no persistence). */
export class MemoryStorage implements Storage {
  private map = new Map<string, string>();

  get length(): number {
    return this.map.size;
  }
  clear(): void {
    this.map.clear();
  }
  getItem(key: string): string | null {
    return this.map.has(key) ? (this.map.get(key) as string) : null;
  }
  key(index: number): string | null {
    return [...this.map.keys()][index] ?? null;
  }
  removeItem(key: string): void {
    this.map.delete(key);
  }
  setItem(key: string, value: string): void {
    this.map.set(key, value);
  }
}

/** Poll a condition until it holds; avoids fixed sleeps in async UI tests. */
export async function waitFor(
  cond: () => boolean,
  timeoutMs = 10_000,
  what = "condition",
): Promise<void> {
  const start = Date.now();
  while (!cond()) {
    if (Date.now() - start > timeoutMs) {
      throw new Error(`timed out after ${timeoutMs} ms waiting for ${what}`);
    }
    await new Promise((r) => setTimeout(r, 25));
  }
}

export function pressKey(key: string): void {
  document.dispatchEvent(new KeyboardEvent("keydown", { key, bubbles: true }));
}

// ---------------------------------------------------------------------------
// scripted fetch for unit tests

export interface LoggedRequest {
  method: string;
  path: string;
  body: unknown;
}

type Handler = (req: LoggedRequest) => { status: number; body: unknown };

/**
 * Replaces global fetch with a routing table. Handlers are keyed
 * "METHOD path"; a missing route throws so tests fail loudly on
 * unexpected traffic. Returns plain thenables shaped like Response —
 * only the fields the client actually reads.
 */
export class FakeServer {
  routes = new Map<string, Handler>();
  log: LoggedRequest[] = [];
  failNetwork = false;
  private original: typeof fetch | undefined;

  on(method: string, path: string, handler: Handler): void {
    this.routes.set(`${method} ${path}`, handler);
  }

  install(): void {
    this.original = globalThis.fetch;
    const self = this;
    globalThis.fetch = (async (input: RequestInfo | URL, init?: RequestInit) => {
      const url = typeof input === "string" ? input : input.toString();
      const path = url.replace(/^https?:\/\/[^/]+/, "");
      const method = init?.method ?? "GET";
      const body = init?.body ? JSON.parse(init.body as string) : null;
      const req = { method, path, body };
      if (self.failNetwork) {
        // died on the wire: the server never saw it, so don't log it
        throw new TypeError("fetch failed (scripted)");
      }
      self.log.push(req);
      const handler = self.routes.get(`${method} ${path}`);
      if (!handler) {
        throw new Error(`unscripted request: ${method} ${path}`);
      }
      const { status, body: out } = handler(req);
      return {
        ok: status >= 200 && status < 300,
        status,
        statusText: String(status),
        json: async () => out,
      } as Response;
    }) as typeof fetch;
  }

  uninstall(): void {
    if (this.original) globalThis.fetch = this.original;
  }

  /** requests matching a predicate, for asserting on traffic shape */
  sent(method: string, path: string): LoggedRequest[] {
    return this.log.filter((r) => r.method === method && r.path === path);
  }
}

export function answersOf(body: unknown): { triplet_id: number; closer: Closer }[] {
  return (body as { answers: { triplet_id: number; closer: Closer }[] }).answers;
}
