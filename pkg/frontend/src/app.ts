/** Page controller for the expert console.
 *
 * The view is stateless with respect to campaign truth: every render pulls
 * from the API, so a reload reconstructs exactly what the server stores.
 */

import { StudioApi, ApiError } from "./api.js";
import {
  buildCards,
  removalSet,
  removesFullLayer,
  sharedExtent,
  sortByHint,
  sortByKernel,
  toggleDecision,
  type KernelCard,
} from "./cards.js";
import { classColor, renderLossChart, renderScatter } from "./charts.js";
import { validateProjection } from "./schema.js";
import type { JobView, ProjectionPayload, SessionView } from "./types.js";

interface ViewState {
  session: SessionView | null;
  cards: KernelCard[];
  projection: ProjectionPayload | null;
  sortMode: "hint" | "kernel";
  autoZoom: boolean;
  showScores: boolean;
  busy: boolean;
  banner: string | null;
  trace: number[];
  traceReference: number | null;
}

export class StudioApp {
  state: ViewState = {
    session: null,
    cards: [],
    projection: null,
    sortMode: "hint",
    autoZoom: false,
    showScores: false,
    busy: false,
    banner: null,
    trace: [],
    traceReference: null,
  };

  constructor(
    private doc: Document,
    private root: HTMLElement,
    private api: StudioApi,
  ) {}

  async boot(sessionId: string | null): Promise<void> {
    if (!sessionId) {
      await this.renderPicker();
      return;
    }
    await this.loadSession(sessionId);
  }

  async loadSession(id: string): Promise<void> {
    try {
      this.state.session = await this.api.getSession(id);
      this.state.banner = null;
    } catch (err) {
      this.state.banner = err instanceof Error ? err.message : String(err);
      this.render();
      return;
    }
    const session = this.state.session;
    const layer = session.current_layer;
    this.state.cards = [];
    this.state.projection = null;
    if (this.isSubjective(session) && layer <= session.layer_count) {
      await this.loadProjection(session, layer);
    }
    this.render();
  }

  private isSubjective(session: SessionView): boolean {
    return session.config.method === "sPPR" || session.config.method === "sPCR";
  }

  private async loadProjection(session: SessionView, layer: number): Promise<void> {
    let payload: unknown;
    try {
      payload = await this.api.getProjection(session.id, layer);
    } catch (err) {
      if (err instanceof ApiError && err.status === 409) {
        // not prepared yet: compute it now
        try {
          payload = await this.api.prepareLayer(session.id, layer);
        } catch (inner) {
          this.state.banner = inner instanceof Error ? inner.message : String(inner);
          return;
        }
      } else {
        this.state.banner = err instanceof Error ? err.message : String(err);
        return;
      }
    }
    const problems = validateProjection(payload);
    if (problems.length > 0) {
      this.state.banner = `projection payload failed validation: ${problems[0]}`;
      return;
    }
    const projection = payload as ProjectionPayload;
    let decisions: number[] | null = null;
    try {
      decisions = (await this.api.getDecisions(session.id, layer)).remove;
    } catch {
      decisions = null; // nothing submitted yet
    }
    let scores = null;
    try {
      scores = (await this.api.getScores(session.id, layer)).scores;
    } catch {
      scores = null; // objective scores are an optional overlay
    }
    this.state.projection = projection;
    this.state.cards = buildCards(projection, { decisions, scores });
  }

  toggle(kernel: number): void {
    this.state.cards = this.state.cards.map((c) => (c.kernel === kernel ? toggleDecision(c) : c));
    this.render();
  }

  async submitDecisions(): Promise<void> {
    const session = this.state.session;
    if (!session || removesFullLayer(this.state.cards)) return;
    try {
      await this.api.putDecisions(session.id, session.current_layer, removalSet(this.state.cards));
      await this.loadSession(session.id); // reconcile from the server
    } catch (err) {
      this.state.banner = err instanceof Error ? err.message : String(err);
      this.render();
    }
  }

  async commitCurrentLayer(): Promise<JobView | null> {
    const session = this.state.session;
    if (!session) return null;
    this.state.busy = true;
    this.state.trace = [];
    this.state.traceReference = null;
    this.render();
    let job: JobView;
    try {
      job = await this.api.commitLayer(session.id, session.current_layer);
    } catch (err) {
      this.state.busy = false;
      this.state.banner = err instanceof Error ? err.message : String(err);
      this.render();
      return null;
    }
    const done = await this.api.pollJob(session.id, job.id, (j) => {
      this.state.trace = j.trace;
      this.renderTracePanel(j);
    });
    if (done.status === "failed") {
      this.state.banner = done.error ?? "commit failed";
    } else {
      try {
        const record = await this.api.getLayerRecord(session.id, session.current_layer);
        if (record.loss_trace) {
          this.state.trace = record.loss_trace.per_epoch;
          this.state.traceReference = record.loss_trace.initial;
        }
      } catch {
        /* record endpoints may lag behind the job by nothing; keep live trace */
      }
    }
    this.state.busy = false;
    await this.loadSession(session.id);
    return done;
  }

  async renderPicker(): Promise<void> {
    const { sessions } = await this.api.listSessions();
    this.root.replaceChildren();
    const box = this.el("div", "picker");
    box.appendChild(this.el("h2", "", "sessions"));
    if (sessions.length === 0) {
      box.appendChild(this.el("p", "empty-state", "no sessions yet - create one with the CLI or the API"));
    }
    for (const s of sessions) {
      const a = this.doc.createElement("a");
      a.href = `?session=${s.id}`;
      a.textContent = `${s.id} - ${s.config.method} - layer ${s.current_layer}/${s.layer_count} - ${s.status}`;
      const row = this.el("div", "picker-row");
      row.appendChild(a);
      box.appendChild(row);
    }
    this.root.appendChild(box);
  }

  render(): void {
    const session = this.state.session;
    this.root.replaceChildren();
    if (this.state.banner) {
      const banner = this.el("div", "banner error", this.state.banner);
      banner.setAttribute("role", "alert");
      this.root.appendChild(banner);
    }
    if (!session) return;

    this.root.appendChild(this.renderHeader(session));
    if (this.state.projection && this.state.cards.length > 0) {
      this.root.appendChild(this.renderDecisionBar(session));
      this.root.appendChild(this.renderGrid());
    } else if (this.state.cards.length === 0 && this.isSubjective(session) &&
               session.current_layer <= session.layer_count && !this.state.banner) {
      this.root.appendChild(this.el("p", "empty-state", "no projection points for this layer"));
    }
    const tracePanel = this.el("div", "trace-panel");
    tracePanel.id = "trace-panel";
    this.root.appendChild(tracePanel);
    if (this.state.trace.length > 0) {
      this.mountTrace(tracePanel, this.state.trace, this.state.traceReference);
    }
    if (session.finalized) {
      void this.renderMetrics();
    }
  }

  private renderHeader(session: SessionView): HTMLElement {
    const header = this.el("div", "campaign-header");
    header.appendChild(
      this.el("h2", "", `session ${session.id} (${session.config.method})`),
    );
    const bar = this.el("div", "layer-progress");
    for (let l = 1; l <= session.layer_count; l++) {
      const cell = this.el("span", "layer-cell");
      cell.dataset.layer = String(l);
      if (session.committed_layers.includes(l)) cell.classList.add("committed");
      else if (l === session.current_layer) cell.classList.add("current");
      cell.textContent = String(l);
      bar.appendChild(cell);
    }
    header.appendChild(bar);
    header.appendChild(this.el("p", "status-line", `status: ${session.status}`));
    return header;
  }

  private renderDecisionBar(session: SessionView): HTMLElement {
    const bar = this.el("div", "decision-bar");
    const sortButton = this.el(
      "button",
      "sort-toggle",
      this.state.sortMode === "hint" ? "sorted by hint" : "sorted by kernel",
    );
    sortButton.addEventListener("click", () => {
      this.state.sortMode = this.state.sortMode === "hint" ? "kernel" : "hint";
      this.render();
    });
    bar.appendChild(sortButton);

    const zoom = this.el("button", "zoom-toggle", this.state.autoZoom ? "per-card zoom" : "shared frame");
    zoom.addEventListener("click", () => {
      this.state.autoZoom = !this.state.autoZoom;
      this.render();
    });
    bar.appendChild(zoom);

    if (this.state.cards.some((c) => c.score != null)) {
      const overlay = this.el(
        "button",
        "score-toggle",
        this.state.showScores ? "hide scores" : "show scores",
      );
      overlay.addEventListener("click", () => {
        this.state.showScores = !this.state.showScores;
        this.render();
      });
      bar.appendChild(overlay);
    }

    const removed = removalSet(this.state.cards);
    const summary = this.el("span", "removal-summary", `${removed.length} marked for removal`);
    bar.appendChild(summary);

    const submit = this.el("button", "submit-decisions", "submit decisions") as HTMLButtonElement;
    const blocked = removesFullLayer(this.state.cards);
    submit.disabled = blocked || this.state.busy || session.status === "done";
    if (blocked) {
      submit.title = "at least one kernel must survive the layer";
      bar.appendChild(this.el("span", "guard-note", "cannot remove every kernel of a layer"));
    }
    submit.addEventListener("click", () => void this.submitDecisions());
    bar.appendChild(submit);

    const commit = this.el("button", "commit-layer", "commit + retrain") as HTMLButtonElement;
    commit.disabled = this.state.busy;
    commit.addEventListener("click", () => void this.commitCurrentLayer());
    bar.appendChild(commit);
    return bar;
  }

  private renderGrid(): HTMLElement {
    const grid = this.el("div", "kernel-grid");
    const frame = this.state.autoZoom ? null : sharedExtent(this.state.projection!.points);
    const cards = this.state.sortMode === "hint" ? sortByHint(this.state.cards) : sortByKernel(this.state.cards);
    for (const card of cards) {
      grid.appendChild(this.renderCard(card, frame));
    }
    return grid;
  }

  private renderCard(card: KernelCard, frame: ReturnType<typeof sharedExtent> | null): HTMLElement {
    const el = this.el("div", `kernel-card decision-${card.decision}`);
    el.dataset.kernel = String(card.kernel);
    const title = this.el("div", "card-title", `kernel ${card.kernel}`);
    el.appendChild(title);
    el.appendChild(renderScatter(this.doc, card.points, { frame }));
    const hint = Number.isNaN(card.hint) ? "n/a" : card.hint.toFixed(3);
    el.appendChild(this.el("div", "card-hint", `hint ${hint}`));
    if (this.state.showScores && card.score != null) {
      el.appendChild(this.el("div", "card-score", `score ${card.score.toExponential(2)}`));
    }
    el.appendChild(this.el("div", "card-decision", card.decision));
    el.addEventListener("click", () => this.toggle(card.kernel));
    return el;
  }

  private renderTracePanel(job: JobView): void {
    const panel = this.doc.getElementById("trace-panel");
    if (!panel) return;
    this.mountTrace(panel, job.trace, null, job);
  }

  private mountTrace(panel: HTMLElement, values: number[], reference: number | null, job?: JobView): void {
    panel.replaceChildren();
    panel.appendChild(this.el("h3", "", "retraining distance"));
    if (job) {
      const progress = this.doc.createElement("progress");
      progress.max = 1;
      progress.value = job.progress;
      panel.appendChild(progress);
      panel.appendChild(this.el("span", "job-message", job.message));
    }
    panel.appendChild(renderLossChart(this.doc, values, { reference }));
    if (values.length > 1) {
      panel.appendChild(
        this.el("p", "trace-summary",
                `start ${values[0]!.toFixed(4)} -> now ${values[values.length - 1]!.toFixed(4)}`),
      );
    }
  }

  private async renderMetrics(): Promise<void> {
    const session = this.state.session!;
    let metrics;
    try {
      metrics = await this.api.getMetrics(session.id);
    } catch {
      return;
    }
    const panel = this.el("div", "metrics-panel");
    panel.appendChild(this.el("h3", "", "final metrics"));
    const table = this.doc.createElement("table");
    const rows: [string, string][] = [
      ["baseline accuracy", metrics.baseline.accuracy.toFixed(4)],
      ["final accuracy", metrics.final.accuracy.toFixed(4)],
      ["baseline kappa", metrics.baseline.cohen_kappa.toFixed(4)],
      ["final kappa", metrics.final.cohen_kappa.toFixed(4)],
      ["kernel reduction %", metrics.kernel_reduction_pct.toFixed(2)],
      ["GFLOPs reduction %", metrics.gflops_reduction_pct.toFixed(2)],
    ];
    for (const [label, value] of rows) {
      const tr = this.doc.createElement("tr");
      const td1 = this.doc.createElement("td");
      td1.textContent = label;
      const td2 = this.doc.createElement("td");
      td2.textContent = value;
      tr.append(td1, td2);
      table.appendChild(tr);
    }
    panel.appendChild(table);
    this.root.appendChild(panel);
  }

  private el(tag: string, className = "", text = ""): HTMLElement {
    const node = this.doc.createElement(tag);
    if (className) node.className = className;
    if (text) node.textContent = text;
    return node;
  }
}

export function legendFor(classCount: number, doc: Document): HTMLElement {
  const legend = doc.createElement("div");
  legend.className = "class-legend";
  for (let j = 0; j < classCount; j++) {
    const chip = doc.createElement("span");
    chip.className = "legend-chip";
    chip.style.background = classColor(j);
    chip.textContent = `class ${j}`;
    legend.appendChild(chip);
  }
  return legend;
}

export function bootFromLocation(doc: Document, win: Window): StudioApp {
  const root = doc.getElementById("app") as HTMLElement;
  const api = new StudioApi("");
  const app = new StudioApp(doc, root, api);
  const params = new URLSearchParams(win.location.search);
  void app.boot(params.get("session"));
  return app;
}
