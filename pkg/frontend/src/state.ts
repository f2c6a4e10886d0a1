import type {
  BatchPayload,
  Closer,
  RoundRecord,
  SessionDescriptor,
} from "./types.js";

/**
 * Client-side mirror of one session. The server is the single source of
 * truth; this object only caches what was last fetched plus the in-progress
 * answer map. Answers are additionally persisted to Storage keyed by
 * (session, round) so a mid-batch page refresh can restore and re-submit
 * them — re-submission is safe because the server treats (round, triplet)
 * as an idempotency key.
 */
export class SessionStore {
  descriptor: SessionDescriptor | null = null;
  batch: BatchPayload | null = null;
  answered = new Map<number, Closer>();
  records: RoundRecord[] = [];
  /** authoritative unanswered count from the last server reply, if any */
  serverRemaining: number | null = null;

  private storage: Storage | null;

  constructor(storage: Storage | null = null) {
    this.storage = storage;
  }

  get sessionId(): string | null {
    return this.descriptor ? this.descriptor.id : null;
  }

  setDescriptor(d: SessionDescriptor): void {
    this.descriptor = d;
  }

  private draftKey(round: number): string {
    return `annotator:${this.sessionId}:round:${round}`;
  }

  setBatch(batch: BatchPayload): void {
    this.batch = batch;
    this.serverRemaining = null;
    const ids = new Set(batch.items.map((it) => it.triplet_id));
    const restored = this.loadDraft(batch.round);
    this.answered = new Map();
    for (const [tid, closer] of restored) {
      if (ids.has(tid)) this.answered.set(tid, closer); // answered ⊆ batch
    }
  }

  clearBatch(): void {
    if (this.batch && this.storage) {
      this.storage.removeItem(this.draftKey(this.batch.round));
    }
    this.batch = null;
    this.answered = new Map();
    this.serverRemaining = null;
  }

  answer(tripletId: number, closer: Closer): boolean {
    if (!this.batch) return false;
    if (!this.batch.items.some((it) => it.triplet_id === tripletId)) {
      return false;
    }
    this.answered.set(tripletId, closer);
    this.saveDraft();
    return true;
  }

  /** Index of the first unanswered card, or null when the batch is done. */
  cursor(): number | null {
    if (!this.batch) return null;
    for (let idx = 0; idx < this.batch.items.length; idx++) {
      if (!this.answered.has(this.batch.items[idx].triplet_id)) return idx;
    }
    return null;
  }

  answeredCount(): number {
    return this.answered.size;
  }

  batchSize(): number {
    return this.batch ? this.batch.items.length : 0;
  }

  private saveDraft(): void {
    if (!this.storage || !this.batch) return;
    const obj: Record<string, Closer> = {};
    for (const [tid, closer] of this.answered) obj[String(tid)] = closer;
    this.storage.setItem(this.draftKey(this.batch.round), JSON.stringify(obj));
  }

  loadDraft(round: number): Map<number, Closer> {
    const out = new Map<number, Closer>();
    if (!this.storage) return out;
    const raw = this.storage.getItem(this.draftKey(round));
    if (!raw) return out;
    try {
      const obj = JSON.parse(raw) as Record<string, Closer>;
      for (const [tid, closer] of Object.entries(obj)) {
        if (closer === "j" || closer === "k") out.set(Number(tid), closer);
      }
    } catch {
      // corrupt draft: ignore, the user just answers again
    }
    return out;
  }
}
