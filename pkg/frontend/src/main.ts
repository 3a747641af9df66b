// Single-page annotation and calibration UI. Two views: the labelling flow
// (one pair at a time, keyboard-first) and the threshold explorer.

import { ApiClient, CurvePoint } from "./api";
import { AnnotateController } from "./annotate";
import { ExplorerState, markerReadout, nearestIndex, renderCurveSvg } from "./curves";
import { decodePpm, drawPpm } from "./ppm";
import { LabelQueue } from "./queue";
import "./style.css";

const api = new ApiClient("");
const queue = new LabelQueue(api);

function el<T extends HTMLElement>(id: string): T {
  const node = document.getElementById(id);
  if (!node) throw new Error(`missing element #${id}`);
  return node as T;
}

function annotatorId(): string {
  const params = new URLSearchParams(location.search);
  const fromUrl = params.get("annotator");
  if (fromUrl) sessionStorage.setItem("annotator", fromUrl);
  let id = sessionStorage.getItem("annotator");
  if (!id) {
    id = prompt("Annotator id (e.g. ann_a)?") || "ann_a";
    sessionStorage.setItem("annotator", id);
  }
  return id;
}

async function refreshAgreement(): Promise<void> {
  const view = await api.agreement();
  el("kappa").textContent = view.kappa === null ? "n/a" : view.kappa.toFixed(4);
  el("conflicts").textContent = view.conflicts.length
    ? `${view.conflicts.length} conflict(s) awaiting a third annotator`
    : "no conflicts";
}

function setupAnnotation(): AnnotateController {
  const controller = new AnnotateController(api, queue, annotatorId());
  el("who").textContent = controller.annotator;

  controller.onChange = async (view) => {
    el("pending").textContent = String(view.pendingRetries);
    el("labeled").textContent = String(view.labeled);
    el("banner").textContent = view.conflictBanner ?? "";
    el("banner").style.display = view.conflictBanner ? "block" : "none";
    if (view.done || !view.card) {
      el("card").style.display = "none";
      el("done").style.display = "block";
      return;
    }
    el("card").style.display = "block";
    el("done").style.display = "none";
    el("verbatim").textContent = view.card.verbatim ?? "";
    el("category").textContent = view.card.category ?? "";
    el("remaining").textContent = String(view.card.remaining);
    const list = el("guidelines");
    list.innerHTML = "";
    for (const g of view.card.guidelines ?? []) {
      const li = document.createElement("li");
      li.textContent = g;
      list.appendChild(li);
    }
    if (view.card.image_url) {
      const bytes = await api.imageBytes(view.card.image_url);
      drawPpm(el<HTMLCanvasElement>("pair-image"), decodePpm(bytes));
    }
    refreshAgreement().catch(() => undefined);
  };

  el("btn-relevant").addEventListener("click", () => controller.label("relevant"));
  el("btn-not-relevant").addEventListener("click", () => controller.label("not_relevant"));
  el("btn-retry").addEventListener("click", async () => {
    await queue.flush();
    controller.onChange?.({ ...controller.view, pendingRetries: queue.pendingCount });
  });
  el<HTMLInputElement>("conflicts-mode").addEventListener("change", async (ev) => {
    controller.conflictsMode = (ev.target as HTMLInputElement).checked;
    await controller.advance();
  });
  document.addEventListener("keydown", (ev) => {
    if ((ev.target as HTMLElement).tagName === "INPUT") return;
    controller.handleKey(ev.key);
  });
  return controller;
}

function setupExplorer(): void {
  const state: ExplorerState = { points: [], markerIndex: 0, selectedThreshold: null };

  function paint(): void {
    el("chart").innerHTML = renderCurveSvg(state);
    const at = markerReadout(state);
    el("readout").textContent = at
      ? `t=${at.threshold}  precision=${at.precision.toFixed(4)}  recall=${at.recall.toFixed(4)}  ` +
        `f1=${at.f1.toFixed(4)}  coverage=${at.coverage.toFixed(4)}  (tp=${at.tp} fp=${at.fp} fn=${at.fn})`
      : "no curve yet";
    const slider = el<HTMLInputElement>("marker");
    slider.max = String(Math.max(0, state.points.length - 1));
    slider.value = String(state.markerIndex);
  }

  async function reload(): Promise<void> {
    const grid = el<HTMLInputElement>("grid").value.trim() || undefined;
    const { points } = await api.curves(grid);
    state.points = points as CurvePoint[];
    state.markerIndex = Math.min(state.markerIndex, Math.max(0, points.length - 1));
    paint();
  }

  el("btn-reload").addEventListener("click", () => reload().catch(console.error));
  el<HTMLInputElement>("marker").addEventListener("input", (ev) => {
    state.markerIndex = parseInt((ev.target as HTMLInputElement).value, 10) || 0;
    paint();
  });
  el("btn-apply").addEventListener("click", async () => {
    const kind = el<HTMLSelectElement>("policy-kind").value;
    const raw = el<HTMLInputElement>("policy-value").value;
    const value = raw ? parseFloat(raw) : null;
    const grid = el<HTMLInputElement>("grid").value.trim() || undefined;
    try {
      const sel = await api.applyPolicy(kind, value, grid);
      state.selectedThreshold = sel.threshold;
      state.markerIndex = nearestIndex(state.points, sel.threshold);
      el("policy-result").textContent =
        `service selected threshold ${sel.threshold} for ${sel.policy.kind}`;
    } catch (err) {
      el("policy-result").textContent = String(err);
    }
    paint();
  });
  reload().catch(() => paint());
}

function setupTabs(): void {
  const tabs = document.querySelectorAll<HTMLElement>("[data-tab]");
  tabs.forEach((tab) =>
    tab.addEventListener("click", () => {
      document.querySelectorAll<HTMLElement>(".view").forEach((v) => (v.style.display = "none"));
      el(tab.dataset.tab!).style.display = "block";
      tabs.forEach((t) => t.classList.toggle("active", t === tab));
    }),
  );
}

async function init(): Promise<void> {
  setupTabs();
  const controller = setupAnnotation();
  setupExplorer();
  await controller.advance();
  refreshAgreement().catch(() => undefined);
}

init().catch((err) => {
  document.body.innerHTML = `<pre class="fatal">failed to start: ${err}</pre>`;
});
