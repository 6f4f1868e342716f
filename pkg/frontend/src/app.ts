/** Application shell: wires the API client, view models, and renderers. */

import { ApiClient, ApiError } from "./api.js";
import { enclosedDocIds, nearestOccupied } from "./geometry.js";
import type { Point } from "./geometry.js";
import { renderHeatmap } from "./heatmap.js";
import { computeProjection, drawMap, unproject } from "./render.js";
import type { Projection } from "./render.js";
import { renderTopicBars } from "./topicbars.js";
import { VersionGate } from "./version.js";
import { legendEntries, toMapViewModel, toTopicViewModel } from "./viewmodel.js";
import type { MapViewModel, TopicViewModel } from "./viewmodel.js";
import type { CreateSessionBody, MapPayload, TopicsPayload } from "./types.js";

export interface AppOptions {
  canvasWidth?: number;
  canvasHeight?: number;
  topicThreshold?: number;
  hoverRadiusPx?: number;
}

export class App {
  readonly api: ApiClient;
  readonly root: HTMLElement;
  readonly gate = new VersionGate();

  sessionId: string | null = null;
  mapVM: MapViewModel | null = null;
  topicVM: TopicViewModel | null = null;
  selection = new Set<string>();
  topicThreshold: number;
  lassoActive = false;

  canvas!: HTMLCanvasElement;
  placeholder!: HTMLElement;
  promptInput!: HTMLInputElement;
  promptList!: HTMLElement;
  topicPanel!: HTMLElement;
  thresholdInput!: HTMLInputElement;
  heatmapPanel!: HTMLElement;
  legendEl!: HTMLElement;
  statusEl!: HTMLElement;
  lassoButton!: HTMLButtonElement;
  exportButton!: HTMLButtonElement;

  private readonly hoverRadiusPx: number;
  private lassoPath: Point[] = [];
  private proj: Projection | null = null;
  private lastTopicsPayload: TopicsPayload | null = null;
  private hoveredDocId: string | null = null;

  constructor(root: HTMLElement, api: ApiClient, opts: AppOptions = {}) {
    this.root = root;
    this.api = api;
    this.topicThreshold = opts.topicThreshold ?? 0.1;
    this.hoverRadiusPx = opts.hoverRadiusPx ?? 12;
    this.mount(opts.canvasWidth ?? 640, opts.canvasHeight ?? 640);
  }

  private mount(width: number, height: number): void {
    const d = this.root.ownerDocument;
    this.root.replaceChildren();
    this.root.classList.add("promptmap-app");

    const mapPane = d.createElement("div");
    mapPane.className = "map-pane";

    this.canvas = d.createElement("canvas");
    this.canvas.width = width;
    this.canvas.height = height;
    this.canvas.className = "map-canvas";
    mapPane.appendChild(this.canvas);

    this.placeholder = d.createElement("div");
    this.placeholder.className = "map-placeholder";
    this.placeholder.dataset.testid = "placeholder";
    this.placeholder.textContent = "submit a prompt";
    mapPane.appendChild(this.placeholder);

    this.legendEl = d.createElement("div");
    this.legendEl.className = "map-legend";
    this.legendEl.dataset.testid = "legend";
    mapPane.appendChild(this.legendEl);

    const sidebar = d.createElement("div");
    sidebar.className = "sidebar";

    const form = d.createElement("form");
    form.className = "prompt-form";
    this.promptInput = d.createElement("input");
    this.promptInput.type = "text";
    this.promptInput.placeholder = "prompt text";
    this.promptInput.dataset.testid = "prompt-input";
    const submit = d.createElement("button");
    submit.type = "submit";
    submit.textContent = "add prompt";
    submit.dataset.testid = "prompt-submit";
    form.append(this.promptInput, submit);
    form.addEventListener("submit", (ev) => {
      ev.preventDefault();
      const text = this.promptInput.value.trim();
      if (text) void this.submitPrompt(text);
    });
    sidebar.appendChild(form);

    this.promptList = d.createElement("div");
    this.promptList.className = "prompt-list";
    this.promptList.dataset.testid = "prompt-list";
    sidebar.appendChild(this.promptList);

    const tools = d.createElement("div");
    tools.className = "tools";
    this.lassoButton = d.createElement("button");
    this.lassoButton.type = "button";
    this.lassoButton.textContent = "lasso";
    this.lassoButton.dataset.testid = "lasso-toggle";
    this.lassoButton.addEventListener("click", () => this.toggleLasso());
    this.exportButton = d.createElement("button");
    this.exportButton.type = "button";
    this.exportButton.textContent = "open selection";
    this.exportButton.dataset.testid = "lasso-export";
    this.exportButton.disabled = true;
    this.exportButton.addEventListener("click", () => void this.exportSelection());
    tools.append(this.lassoButton, this.exportButton);
    sidebar.appendChild(tools);

    const thresholdRow = d.createElement("label");
    thresholdRow.className = "threshold-row";
    thresholdRow.textContent = "topic bar threshold ";
    this.thresholdInput = d.createElement("input");
    this.thresholdInput.type = "range";
    this.thresholdInput.min = "0";
    this.thresholdInput.max = "1";
    this.thresholdInput.step = "0.05";
    this.thresholdInput.value = String(this.topicThreshold);
    this.thresholdInput.dataset.testid = "threshold-slider";
    this.thresholdInput.addEventListener("input", () => {
      this.topicThreshold = Number(this.thresholdInput.value);
      this.renderTopicsFromLast();
    });
    thresholdRow.appendChild(this.thresholdInput);
    sidebar.appendChild(thresholdRow);

    this.topicPanel = d.createElement("div");
    this.topicPanel.className = "topic-panel";
    this.topicPanel.dataset.testid = "topic-panel";
    sidebar.appendChild(this.topicPanel);

    this.heatmapPanel = d.createElement("div");
    this.heatmapPanel.className = "heatmap-panel";
    this.heatmapPanel.dataset.testid = "heatmap-panel";
    sidebar.appendChild(this.heatmapPanel);

    this.statusEl = d.createElement("div");
    this.statusEl.className = "status-line";
    this.statusEl.dataset.testid = "status";
    sidebar.appendChild(this.statusEl);

    this.root.append(mapPane, sidebar);

    this.canvas.addEventListener("pointerdown", (ev) => this.onPointerDown(ev));
    this.canvas.addEventListener("pointermove", (ev) => this.onPointerMove(ev));
    this.canvas.addEventListener("pointerup", () => this.onPointerUp());
    this.renderAll();
  }

  // ------------------------------------------------------------------ session

  async startSession(body: CreateSessionBody): Promise<void> {
    const created = await this.api.createSession(body);
    this.sessionId = created.session_id;
    this.gate.reset();
    this.gate.bump(created.version);
    this.mapVM = null;
    this.topicVM = null;
    this.lastTopicsPayload = null;
    this.selection = new Set();
    this.renderAll();
    this.setStatus(`session ${created.session_id.slice(0, 8)}: ${created.n_docs} docs`);
  }

  async submitPrompt(text: string, weight?: number): Promise<void> {
    if (!this.sessionId) throw new Error("no session");
    try {
      const payload = await this.api.addPrompt(this.sessionId, text, weight);
      this.promptInput.value = "";
      if (this.applyMap(payload)) await this.refreshTopics(payload.version);
    } catch (err) {
      this.reportError(err);
    }
  }

  /** Read sliders, normalize to sum 1, PATCH, re-render. */
  async applyWeightsFromSliders(): Promise<void> {
    if (!this.sessionId || !this.mapVM) return;
    const sliders = this.promptList.querySelectorAll<HTMLInputElement>("input[type=range]");
    const raw = [...sliders].map((s) => Math.max(0, Number(s.value)));
    const total = raw.reduce((a, b) => a + b, 0);
    const weights =
      total > 0 ? raw.map((w) => w / total) : raw.map(() => 1 / Math.max(raw.length, 1));
    try {
      const payload = await this.api.setWeights(this.sessionId, weights);
      if (this.applyMap(payload)) await this.refreshTopics(payload.version);
    } catch (err) {
      this.reportError(err);
    }
  }

  /** Version-guarded application of a map payload. False when stale. */
  applyMap(payload: MapPayload): boolean {
    if (!this.gate.accept(payload.version)) return false;
    this.selection = new Set(
      [...this.selection].filter((id) => payload.relevances[id] !== undefined),
    );
    this.mapVM = toMapViewModel(payload, this.selection);
    this.renderAll();
    return true;
  }

  async refreshTopics(version: number): Promise<void> {
    if (!this.sessionId) return;
    try {
      const payload = await this.api.getTopics(this.sessionId, version);
      this.applyTopics(payload);
    } catch (err) {
      if (err instanceof ApiError && err.status === 409) return; // stale, a newer refresh follows
      this.reportError(err);
    }
  }

  /** Version-guarded application of a topics payload. False when stale. */
  applyTopics(payload: TopicsPayload): boolean {
    if (payload.version < this.gate.current) return false;
    this.lastTopicsPayload = payload;
    this.renderTopicsFromLast();
    return true;
  }

  async showDoc(docId: string): Promise<void> {
    if (!this.sessionId) return;
    try {
      const doc = await this.api.getDoc(this.sessionId, docId);
      if (doc.version < this.gate.current) return;
      renderHeatmap(this.heatmapPanel, doc);
    } catch (err) {
      if (err instanceof ApiError && err.status === 409) return;
      this.reportError(err);
    }
  }

  // -------------------------------------------------------------------- lasso

  toggleLasso(): void {
    this.lassoActive = !this.lassoActive;
    this.lassoPath = [];
    this.lassoButton.classList.toggle("active", this.lassoActive);
    this.redrawMap();
  }

  /** Selection from a finished polygon in data coordinates. */
  finishLasso(polygon: Point[]): string[] {
    const vm = this.mapVM;
    if (!vm) return [];
    const ids = enclosedDocIds(vm.cells, polygon);
    this.selection = new Set(ids);
    vm.selection = this.selection;
    this.exportButton.disabled = ids.length === 0;
    this.redrawMap();
    return ids;
  }

  async exportSelection(): Promise<void> {
    if (!this.sessionId || this.selection.size === 0) return;
    try {
      const child = await this.api.lasso(this.sessionId, [...this.selection]);
      this.sessionId = child.session_id;
      this.gate.reset();
      this.gate.bump(child.version);
      this.selection = new Set();
      this.exportButton.disabled = true;
      this.setStatus(`session ${child.session_id.slice(0, 8)}: ${child.n_docs} docs`);
      if (child.version > 0) {
        const payload = await this.api.getMap(this.sessionId, child.version);
        this.gate.reset();
        if (this.applyMap(payload)) await this.refreshTopics(payload.version);
      } else {
        this.mapVM = null;
        this.topicVM = null;
        this.lastTopicsPayload = null;
        this.renderAll();
      }
    } catch (err) {
      this.reportError(err);
    }
  }

  private onPointerDown(ev: PointerEvent): void {
    if (!this.lassoActive || !this.proj || !this.mapVM) return;
    this.lassoPath = [this.dataPoint(ev)];
  }

  private onPointerMove(ev: PointerEvent): void {
    if (!this.proj || !this.mapVM) return;
    if (this.lassoActive && this.lassoPath.length > 0) {
      this.lassoPath.push(this.dataPoint(ev));
      this.redrawMap();
      return;
    }
    const p = this.dataPoint(ev);
    const hit = nearestOccupied(this.mapVM.cells, p, this.hoverRadiusPx / this.proj.scale);
    const docId = hit?.occupant ?? null;
    if (docId !== null && docId !== this.hoveredDocId) {
      this.hoveredDocId = docId;
      void this.showDoc(docId);
    }
  }

  private onPointerUp(): void {
    if (!this.lassoActive || this.lassoPath.length < 3) {
      this.lassoPath = [];
      return;
    }
    const polygon = this.lassoPath;
    this.lassoPath = [];
    this.finishLasso(polygon);
  }

  private dataPoint(ev: PointerEvent): Point {
    const rect = this.canvas.getBoundingClientRect();
    const px = ev.clientX - rect.left;
    const py = ev.clientY - rect.top;
    return unproject(this.proj as Projection, { x: px, y: py });
  }

  // ---------------------------------------------------------------- rendering

  private renderAll(): void {
    const hasMap = this.mapVM !== null;
    this.placeholder.style.display = hasMap ? "none" : "";
    this.canvas.style.display = hasMap ? "" : "none";
    this.redrawMap();
    this.renderPrompts();
    this.renderLegend();
    if (hasMap && this.mapVM) {
      this.setStatus(
        `version ${this.mapVM.version}: ${this.mapVM.nDocs} docs, ` +
          `${this.mapVM.prompts.length} prompt(s)`,
      );
    }
  }

  private redrawMap(): void {
    if (!this.mapVM) return;
    this.proj = computeProjection(this.mapVM, this.canvas.width, this.canvas.height);
    drawMap(this.canvas, this.mapVM, this.proj, { lassoPath: this.lassoPath });
  }

  private renderPrompts(): void {
    const d = this.root.ownerDocument;
    this.promptList.replaceChildren();
    if (!this.mapVM) return;
    this.mapVM.prompts.forEach((prompt, i) => {
      const row = d.createElement("div");
      row.className = "prompt-row";
      const label = d.createElement("span");
      label.textContent = prompt.text;
      label.className = "prompt-text";
      const slider = d.createElement("input");
      slider.type = "range";
      slider.min = "0";
      slider.max = "1";
      slider.step = "0.01";
      slider.value = String(prompt.weight);
      slider.dataset.promptIndex = String(i);
      const value = d.createElement("span");
      value.className = "prompt-weight";
      value.textContent = prompt.weight.toFixed(2);
      slider.addEventListener("input", () => {
        value.textContent = Number(slider.value).toFixed(2);
      });
      row.append(label, slider, value);
      this.promptList.appendChild(row);
    });
    const apply = d.createElement("button");
    apply.type = "button";
    apply.textContent = "apply weights";
    apply.dataset.testid = "apply-weights";
    apply.addEventListener("click", () => void this.applyWeightsFromSliders());
    this.promptList.appendChild(apply);
  }

  private renderLegend(): void {
    const d = this.root.ownerDocument;
    this.legendEl.replaceChildren();
    if (!this.mapVM) return;
    for (const entry of legendEntries(this.mapVM)) {
      const chip = d.createElement("span");
      chip.className = "legend-chip";
      chip.style.backgroundColor = entry.color;
      chip.dataset.clusterId = String(entry.clusterId);
      chip.textContent = String(entry.clusterId);
      this.legendEl.appendChild(chip);
    }
    // relevance radius legend: mean ring gamma from center outwards
    const gammas = this.mapVM.layerGamma
      .map((g) => `ring ${g.layer}: ${g.gamma.toFixed(2)}`)
      .join("  ");
    const gammaLine = d.createElement("div");
    gammaLine.className = "gamma-legend";
    gammaLine.dataset.testid = "gamma-legend";
    gammaLine.textContent = gammas;
    this.legendEl.appendChild(gammaLine);
  }

  private renderTopicsFromLast(): void {
    if (!this.lastTopicsPayload) {
      this.topicVM = null;
      this.topicPanel.replaceChildren();
      return;
    }
    this.topicVM = toTopicViewModel(this.lastTopicsPayload, this.topicThreshold);
    renderTopicBars(this.topicPanel, this.topicVM);
  }

  private setStatus(text: string): void {
    this.statusEl.textContent = text;
  }

  private reportError(err: unknown): void {
    const message =
      err instanceof ApiError ? `${err.status}: ${err.message}` : String(err);
    this.setStatus(`error ${message}`);
  }
}
