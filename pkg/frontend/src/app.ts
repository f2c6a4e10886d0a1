import { ApiError, Client } from "./api.js";
import { metricsChart } from "./chart.js";
import { metricsToCsv } from "./csv.js";
import { renderPayload } from "./glyph.js";
import { SessionStore } from "./state.js";
import type { BatchItem, Closer, SessionStatus } from "./types.js";

export interface AppOptions {
  baseUrl?: string;
  /** how often to poll the session descriptor while the server trains */
  pollIntervalMs?: number;
  storage?: Storage | null;
  /** toast lifetime; tests shorten it */
  toastMs?: number;
}

export type Screen = "annotate" | "metrics";

interface PendingSend {
  round: number;
  answers: { triplet_id: number; closer: Closer }[];
}

/**
 * The whole single-page app: a setup screen until a session exists, then an
 * annotate screen and a metrics screen behind two tabs.
 *
 * Concurrency rules enforced here rather than per call site: at most one
 * mutation request is ever in flight (`busy`), keyboard and button input is
 * inert while one is, and the training poll skips its tick when a mutation
 * races it. A failed send is parked in `pendingSend` and re-sent only on
 * explicit user retry, with the identical body, so a duplicate delivery
 * cannot double-count on the server.
 */
export class App {
  readonly client: Client;
  readonly store: SessionStore;
  readonly opts: Required<AppOptions>;

  screen: Screen = "annotate";
  busy = false;
  pendingSend: PendingSend | null = null;
  creating = false;

  private root: HTMLElement | null = null;
  private pollTimer: ReturnType<typeof setInterval> | null = null;
  private keyHandler: ((ev: KeyboardEvent) => void) | null = null;

  constructor(options: AppOptions = {}) {
    this.opts = {
      baseUrl: options.baseUrl ?? "",
      pollIntervalMs: options.pollIntervalMs ?? 2000,
      storage: options.storage !== undefined ? options.storage : globalThis.localStorage ?? null,
      toastMs: options.toastMs ?? 4000,
    };
    this.client = new Client(this.opts.baseUrl);
    this.store = new SessionStore(this.opts.storage);
  }

  // ------------------------------------------------------------------
  // mounting and layout

  mount(root: HTMLElement): void {
    this.root = root;
    root.innerHTML = "";

    const header = document.createElement("header");
    header.className = "topbar";
    header.innerHTML = `
      <h1>Triplet annotator</h1>
      <span class="session-tag" data-ref="session-tag"></span>
      <nav class="tabs hidden" data-ref="tabs">
        <button data-ref="tab-annotate" class="active">Annotate</button>
        <button data-ref="tab-metrics">Metrics</button>
      </nav>`;
    root.appendChild(header);

    const banner = document.createElement("div");
    banner.className = "banner hidden";
    banner.dataset.ref = "retry-banner";
    banner.innerHTML = `<span data-ref="retry-text"></span>
      <button data-ref="retry-button">Retry</button>`;
    root.appendChild(banner);

    const main = document.createElement("main");
    main.dataset.ref = "main";
    root.appendChild(main);

    const toasts = document.createElement("div");
    toasts.id = "toasts";
    root.appendChild(toasts);

    this.ref("tab-annotate").addEventListener("click", () => this.showScreen("annotate"));
    this.ref("tab-metrics").addEventListener("click", () => this.showScreen("metrics"));
    this.ref("retry-button").addEventListener("click", () => void this.retry());

    this.keyHandler = (ev) => {
      if (this.screen !== "annotate") return;
      if (ev.key === "ArrowLeft") void this.answerCurrent("j");
      else if (ev.key === "ArrowRight") void this.answerCurrent("k");
    };
    document.addEventListener("keydown", this.keyHandler);

    this.render();
  }

  destroy(): void {
    this.stopPolling();
    if (this.keyHandler) document.removeEventListener("keydown", this.keyHandler);
    if (this.root) this.root.innerHTML = "";
  }

  private ref(name: string): HTMLElement {
    const node = this.root?.querySelector(`[data-ref="${name}"]`);
    if (!node) throw new Error(`missing element ${name}`);
    return node as HTMLElement;
  }

  // ------------------------------------------------------------------
  // session lifecycle

  async createSession(body: Record<string, unknown>): Promise<void> {
    this.creating = true;
    this.render();
    try {
      const desc = await this.client.createSession(body);
      this.store.setDescriptor(desc);
      this.afterAttach();
    } catch (err) {
      this.surface(err);
    } finally {
      this.creating = false;
      this.render();
    }
  }

  async attach(sessionId: string): Promise<void> {
    try {
      const desc = await this.client.getSession(sessionId);
      this.store.setDescriptor(desc);
      this.afterAttach();
    } catch (err) {
      this.surface(err);
    }
  }

  /** Shared tail of create/attach: pull metrics, then resume wherever the
   * server says the session is (mid-batch refresh lands back on the same
   * batch with any locally drafted answers re-submitted). */
  private afterAttach(): void {
    // reflect the session in the URL so a refresh resumes it
    const desc = this.store.descriptor;
    if (desc && typeof history !== "undefined" && history.replaceState) {
      const url = new URL(window.location.href);
      url.searchParams.set("session", desc.id);
      history.replaceState(null, "", url.toString());
    }
    this.render();
    void this.refreshMetrics();
    const status = this.store.descriptor?.status;
    if (status === "training") this.startPolling();
    else void this.fetchBatch();
  }

  // ------------------------------------------------------------------
  // annotate flow

  async fetchBatch(): Promise<void> {
    const sid = this.store.sessionId;
    if (!sid || this.busy) return;
    this.busy = true;
    try {
      const batch = await this.client.getBatch(sid);
      this.store.setBatch(batch);
      this.busy = false;
      // a refresh may have restored drafted answers; sync them to the server
      if (this.store.answeredCount() > 0) {
        await this.sendAnswers(
          [...this.store.answered].map(([triplet_id, closer]) => ({ triplet_id, closer })),
        );
      }
    } catch (err) {
      this.busy = false;
      if (err instanceof ApiError && err.status === 409) {
        // training on the server; fall back to polling instead of erroring
        this.startPolling();
      } else {
        this.surface(err);
      }
    }
    this.render();
  }

  async answerCurrent(closer: Closer): Promise<void> {
    const batch = this.store.batch;
    const idx = this.store.cursor();
    if (!batch || idx === null || this.busy || this.pendingSend || this.creating) return;
    const item = batch.items[idx];
    this.store.answer(item.triplet_id, closer);
    // sendAnswers flips `busy` before its first await, so this render shows
    // the next card with its buttons disabled until the POST settles
    const sent = this.sendAnswers([{ triplet_id: item.triplet_id, closer }]);
    this.render();
    await sent;
    this.render();
  }

  private async sendAnswers(answers: PendingSend["answers"]): Promise<void> {
    const sid = this.store.sessionId;
    const batch = this.store.batch;
    if (!sid || !batch || answers.length === 0) return;
    const body = { session: sid, round: batch.round, answers };
    this.busy = true; // polling pauses while this is in flight
    try {
      const reply = await this.client.submitAnswers(sid, body);
      this.store.serverRemaining = reply.remaining;
      this.pendingSend = null;
      this.hideBanner();
      if (reply.remaining === 0) {
        this.onTrainingStarted();
      }
    } catch (err) {
      if (err instanceof ApiError && err.isNetwork) {
        // keep the unsent answers; the user retries explicitly
        this.pendingSend = { round: batch.round, answers };
        this.showBanner(`Server unreachable — ${answers.length} answer(s) not sent.`);
      } else {
        this.surface(err);
        if (err instanceof ApiError && (err.status === 409 || err.status === 422)) {
          await this.resync();
        }
      }
    } finally {
      this.busy = false;
    }
  }

  async retry(): Promise<void> {
    const pending = this.pendingSend;
    if (!pending || this.busy) return;
    this.pendingSend = null;
    await this.sendAnswers(pending.answers); // identical body: safe to repeat
    this.render();
  }

  private onTrainingStarted(): void {
    if (this.store.descriptor) this.store.descriptor.status = "training";
    this.store.clearBatch();
    this.startPolling();
  }

  /** Pull the descriptor after a 409/422 so the UI rejoins server reality. */
  private async resync(): Promise<void> {
    const sid = this.store.sessionId;
    if (!sid) return;
    try {
      const desc = await this.client.getSession(sid);
      this.store.setDescriptor(desc);
      if (desc.status === "training") this.startPolling();
      else if (desc.status === "idle") {
        this.store.clearBatch();
        await this.fetchBatch();
      }
    } catch {
      // server still unreachable; the banner path covers it
    }
    this.render();
  }

  // ------------------------------------------------------------------
  // polling while training

  startPolling(): void {
    if (this.pollTimer !== null) return;
    this.pollTimer = setInterval(() => void this.pollTick(), this.opts.pollIntervalMs);
    this.render();
  }

  stopPolling(): void {
    if (this.pollTimer !== null) {
      clearInterval(this.pollTimer);
      this.pollTimer = null;
    }
  }

  private async pollTick(): Promise<void> {
    const sid = this.store.sessionId;
    if (!sid) return this.stopPolling();
    if (this.busy) return; // paused during mutation
    let status: SessionStatus;
    try {
      const desc = await this.client.getSession(sid);
      this.store.setDescriptor(desc);
      status = desc.status;
    } catch {
      return; // transient failure: just poll again
    }
    if (status !== "training") {
      this.stopPolling();
      await this.refreshMetrics();
      if (status === "idle") await this.fetchBatch();
      this.render();
    } else {
      this.render();
    }
  }

  // ------------------------------------------------------------------
  // metrics

  async refreshMetrics(): Promise<void> {
    const sid = this.store.sessionId;
    if (!sid) return;
    try {
      const payload = await this.client.getMetrics(sid);
      this.store.records = payload.records;
      if (this.store.descriptor) {
        this.store.descriptor.status = payload.status;
        this.store.descriptor.round = payload.round;
      }
      if (payload.error) this.toast(`server: ${payload.error}`);
    } catch (err) {
      this.surface(err);
    }
    this.render();
  }

  /** data: URL for the CSV download anchor; content mirrors /metrics. */
  exportHref(): string {
    return "data:text/csv;charset=utf-8," + encodeURIComponent(metricsToCsv(this.store.records));
  }

  // ------------------------------------------------------------------
  // rendering

  showScreen(screen: Screen): void {
    this.screen = screen;
    if (screen === "metrics") void this.refreshMetrics();
    this.render();
  }

  render(): void {
    if (!this.root) return;
    const desc = this.store.descriptor;
    const tag = this.ref("session-tag");
    const tabs = this.ref("tabs");
    if (desc) {
      tag.textContent =
        `${desc.dataset} · ${desc.strategy} · session ${desc.id} · ` +
        `round ${desc.round} · ${desc.labeled} labeled`;
      tabs.classList.remove("hidden");
    } else {
      tag.textContent = "";
      tabs.classList.add("hidden");
    }
    this.ref("tab-annotate").classList.toggle("active", this.screen === "annotate");
    this.ref("tab-metrics").classList.toggle("active", this.screen === "metrics");

    const main = this.ref("main");
    main.innerHTML = "";
    if (!desc) {
      main.appendChild(this.renderSetup());
    } else if (this.screen === "annotate") {
      main.appendChild(this.renderAnnotate());
    } else {
      main.appendChild(this.renderMetrics());
    }
  }

  private renderSetup(): HTMLElement {
    const box = document.createElement("div");
    box.className = "setup";
    box.innerHTML = `
      <form data-ref="create-form">
        <label>dataset <input name="dataset" required placeholder="demo" /></label>
        <label>strategy
          <select name="strategy">
            <option>joint_entropy</option>
            <option>random</option>
            <option>uncertainty</option>
            <option>variance</option>
          </select>
        </label>
        <label>batch size <input name="batch_size" type="number" value="10" min="1" /></label>
        <label>initial pool <input name="init_pool" type="number" value="50" min="0" /></label>
        <label>seed <input name="seed" type="number" value="0" /></label>
        <button type="submit" ${this.creating ? "disabled" : ""}>
          ${this.creating ? "Creating (pretraining)…" : "Start session"}
        </button>
      </form>
      <div class="divider"></div>
      <form data-ref="attach-form">
        <label>existing session id <input name="session" placeholder="abc123" /></label>
        <button type="submit">Resume</button>
      </form>`;
    const createForm = box.querySelector('[data-ref="create-form"]') as HTMLFormElement;
    createForm.addEventListener("submit", (ev) => {
      ev.preventDefault();
      const fd = new FormData(createForm);
      void this.createSession({
        dataset: String(fd.get("dataset") ?? ""),
        strategy: String(fd.get("strategy") ?? "joint_entropy"),
        batch_size: Number(fd.get("batch_size") ?? 10),
        init_pool: Number(fd.get("init_pool") ?? 0),
        seed: Number(fd.get("seed") ?? 0),
      });
    });
    const attachForm = box.querySelector('[data-ref="attach-form"]') as HTMLFormElement;
    attachForm.addEventListener("submit", (ev) => {
      ev.preventDefault();
      const sid = String(new FormData(attachForm).get("session") ?? "").trim();
      if (sid) void this.attach(sid);
    });
    return box;
  }

  private renderAnnotate(): HTMLElement {
    const box = document.createElement("div");
    box.className = "screen";
    const desc = this.store.descriptor!;

    if (desc.status === "training" || this.pollTimer !== null) {
      box.innerHTML = `<div class="state-note training" data-ref="training-note">
        <span class="spinner"></span> <b>training…</b> the next batch arrives when the server is done.
      </div>`;
      return box;
    }

    const batch = this.store.batch;
    if (!batch) {
      box.innerHTML = `<div class="state-note" data-ref="loading-note">Fetching batch…</div>`;
      return box;
    }

    const total = this.store.batchSize();
    const done = this.store.answeredCount();
    const progress = document.createElement("div");
    progress.className = "progress-wrap";
    progress.innerHTML = `
      <div class="progress-label" data-ref="progress-label">${done}/${total} answered · round ${batch.round}</div>
      <div class="progress"><div data-ref="progress-fill" style="width:${total ? (100 * done) / total : 0}%"></div></div>`;
    box.appendChild(progress);

    const idx = this.store.cursor();
    if (idx === null) {
      // everything answered; either a send is in flight or a retry is pending
      const note = document.createElement("div");
      note.className = "state-note";
      note.dataset.ref = "batch-done-note";
      note.textContent = this.pendingSend
        ? "All cards answered — waiting to resend."
        : "All cards answered — submitting…";
      box.appendChild(note);
      return box;
    }

    box.appendChild(this.renderCard(batch.items[idx], idx));
    return box;
  }

  private renderCard(item: BatchItem, idx: number): HTMLElement {
    const wrap = document.createElement("div");
    wrap.dataset.ref = "card";
    wrap.dataset.tripletId = String(item.triplet_id);

    const q = document.createElement("div");
    q.className = "question";
    q.textContent = `Card ${idx + 1}: is A more similar to B or to C?`;
    wrap.appendChild(q);

    const cards = document.createElement("div");
    cards.className = "cards";
    const roles: { role: "i" | "j" | "k"; caption: string; anchor: boolean }[] = [
      { role: "j", caption: "B", anchor: false },
      { role: "i", caption: "A (anchor)", anchor: true },
      { role: "k", caption: "C", anchor: false },
    ];
    for (const { role, caption, anchor } of roles) {
      const cell = document.createElement("div");
      cell.className = anchor ? "card anchor" : "card";
      const cap = document.createElement("div");
      cap.className = "role";
      cap.textContent = caption;
      cell.appendChild(cap);
      cell.appendChild(renderPayload(item, role));
      cards.appendChild(cell);
    }
    wrap.appendChild(cards);

    const disabled = this.busy || this.pendingSend !== null;
    const choice = document.createElement("div");
    choice.className = "choice";
    choice.innerHTML = `
      <button data-ref="choose-j" ${disabled ? "disabled" : ""}>&larr; B is closer</button>
      <button data-ref="choose-k" ${disabled ? "disabled" : ""}>C is closer &rarr;</button>`;
    (choice.querySelector('[data-ref="choose-j"]') as HTMLButtonElement).addEventListener(
      "click", () => void this.answerCurrent("j"));
    (choice.querySelector('[data-ref="choose-k"]') as HTMLButtonElement).addEventListener(
      "click", () => void this.answerCurrent("k"));
    wrap.appendChild(choice);

    const hint = document.createElement("div");
    hint.className = "hint";
    hint.textContent = "keyboard: ← for B, → for C";
    wrap.appendChild(hint);
    return wrap;
  }

  private renderMetrics(): HTMLElement {
    const box = document.createElement("div");
    box.className = "screen";
    const records = this.store.records;

    const head = document.createElement("div");
    head.className = "metrics-head";
    head.innerHTML = `<h2>Accuracy &amp; batch entropy by round</h2>
      <div class="actions">
        <a data-ref="export-csv" download="metrics.csv">Export CSV</a>
      </div>`;
    const anchor = head.querySelector('[data-ref="export-csv"]') as HTMLAnchorElement;
    anchor.href = this.exportHref();
    box.appendChild(head);

    const legend = document.createElement("div");
    legend.className = "legend";
    legend.innerHTML = `
      <span><span class="swatch" style="background:#2458c5"></span>accuracy (left, 0–1)</span>
      <span><span class="swatch" style="background:#c57824"></span>batch entropy (right)</span>`;
    box.appendChild(legend);

    box.appendChild(metricsChart(records));

    if (records.length <= 1) {
      const note = document.createElement("div");
      note.className = "chart-note";
      note.dataset.ref = "single-note";
      note.textContent =
        records.length === 0
          ? "No rounds recorded yet."
          : "Only the initial round so far — a single point, no curve. Annotate a batch to extend it.";
      box.appendChild(note);
    }

    const table = document.createElement("table");
    table.className = "history";
    table.innerHTML =
      "<tr><th>round</th><th>accuracy</th><th>batch entropy</th><th>select ms</th><th>train ms</th></tr>" +
      records
        .map(
          (r) =>
            `<tr><td>${r.round}</td><td>${r.accuracy.toFixed(4)}</td>` +
            `<td>${r.batch_entropy === null ? "—" : r.batch_entropy.toFixed(3)}</td>` +
            `<td>${r.select_ms.toFixed(0)}</td><td>${r.train_ms.toFixed(0)}</td></tr>`,
        )
        .join("");
    box.appendChild(table);
    return box;
  }

  // ------------------------------------------------------------------
  // notices

  private showBanner(message: string): void {
    this.ref("retry-text").textContent = message;
    this.ref("retry-banner").classList.remove("hidden");
  }

  private hideBanner(): void {
    this.ref("retry-banner").classList.add("hidden");
  }

  toast(message: string): void {
    const host = this.root?.querySelector("#toasts");
    if (!host) return;
    const node = document.createElement("div");
    node.className = "toast";
    node.textContent = message;
    host.appendChild(node);
    setTimeout(() => node.remove(), this.opts.toastMs);
  }

  private surface(err: unknown): void {
    if (err instanceof ApiError) {
      if (err.isNetwork) this.showBanner(`Server unreachable — ${err.message}`);
      else this.toast(`${err.status}: ${err.message}`);
    } else {
      this.toast(String(err));
    }
  }
}

export function mountApp(root: HTMLElement, options: AppOptions = {}): App {
  const app = new App(options);
  app.mount(root);
  return app;
}
