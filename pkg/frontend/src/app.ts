/** Operator console wiring: DOM in, service calls out. All the logic
 * that deserves tests lives in the imported modules; this file only
 * moves data between them and the page.
 */

import { ApiError, ServiceApi } from "./api.js";
import { chartModel, type ChartFrame } from "./chart.js";
import { likelihoodColumns, sumsToOne } from "./columns.js";
import { buildGraph, forceLayout, isIsolated } from "./graph.js";
import { canStop, idleState, transition, type OperatorState } from "./machine.js";
import { fetchTransport, liveStream } from "./stream.js";
import type { ClassificationResult, ScenarioInfo } from "./types.js";

const CHART_W = 720;
const CHART_H = 260;
const GRAPH_W = 480;
const GRAPH_H = 340;
const LAYOUT_SEED = 42;

const $ = <T extends HTMLElement>(id: string): T => {
  const el = document.getElementById(id);
  if (el === null) throw new Error(`missing element #${id}`);
  return el as T;
};

const state = { machine: idleState(), frames: [] as ChartFrame[], expectedFrames: 0 };

function setMachine(next: OperatorState): void {
  state.machine = next;
  $("state-badge").textContent = next.kind;
  $<HTMLButtonElement>("start-btn").disabled = next.kind !== "idle";
  $<HTMLButtonElement>("stop-btn").disabled = !canStop(next);
  const banner = $("banner");
  banner.textContent = next.notice ?? "";
  banner.style.display = next.notice === null ? "none" : "block";
}

function showBanner(text: string): void {
  const banner = $("banner");
  banner.textContent = text;
  banner.style.display = "block";
}

function renderChart(): void {
  const model = chartModel(state.frames, {
    width: CHART_W,
    height: CHART_H,
    expectedFrames: state.expectedFrames,
  });
  for (let c = 0; c < 3; c++) {
    $(`chan-${c}`).setAttribute("d", model.paths[c] as string);
  }
  const marker = $("immersion-marker");
  if (model.immersionX === null) {
    marker.style.display = "none";
  } else {
    marker.style.display = "";
    marker.setAttribute("x1", String(model.immersionX));
    marker.setAttribute("x2", String(model.immersionX));
  }
}

function renderResult(result: ClassificationResult): void {
  $("result-section").style.display = "block";
  $("verdict").textContent =
    `${result.top_class} (confidence ${result.confidence.toFixed(3)}, ${result.latency_ms.toFixed(1)} ms)`;

  const columns = likelihoodColumns(result.likelihoods);
  if (!sumsToOne(columns)) showBanner("likelihoods do not sum to 1; service response looks off");
  const colWidth = 64;
  const gap = 28;
  const colsSvg = columns
    .map((col, i) => {
      const h = Math.max(col.value * 200, 1);
      const x = 20 + i * (colWidth + gap);
      return (
        `<rect x="${x}" y="${220 - h}" width="${colWidth}" height="${h}" ` +
        `class="${col.cls === result.top_class ? "col col-top" : "col"}"></rect>` +
        `<text x="${x + colWidth / 2}" y="238" text-anchor="middle" class="col-label">${col.cls}</text>` +
        `<text x="${x + colWidth / 2}" y="${212 - h}" text-anchor="middle" class="col-value">${col.value.toFixed(3)}</text>`
      );
    })
    .join("");
  $("columns-svg").innerHTML = colsSvg;

  const graph = buildGraph(result.record_id, result.similarities);
  const graphHost = $("graph-svg");
  const graphNote = $("graph-note");
  if (graph === null) {
    graphHost.innerHTML = "";
    graphNote.textContent = "no training records to compare against; graph omitted";
    return;
  }
  graphNote.textContent = isIsolated(graph, 0)
    ? "no training record shares leaves with this measurement"
    : "";
  const points = forceLayout(graph, { width: GRAPH_W, height: GRAPH_H, seed: LAYOUT_SEED });
  const edges = graph.edges
    .map((e) => {
      const a = points[e.from]!;
      const b = points[e.to]!;
      return (
        `<line x1="${a.x.toFixed(1)}" y1="${a.y.toFixed(1)}" x2="${b.x.toFixed(1)}" ` +
        `y2="${b.y.toFixed(1)}" class="edge" stroke-width="${(0.5 + 3 * e.weight).toFixed(2)}"></line>`
      );
    })
    .join("");
  const nodes = graph.nodes
    .map((node, i) => {
      const p = points[i]!;
      const cls = node.isTest ? "node node-test" : "node";
      return (
        `<circle cx="${p.x.toFixed(1)}" cy="${p.y.toFixed(1)}" r="${node.isTest ? 9 : 6}" class="${cls}">` +
        `<title>${node.id}</title></circle>` +
        `<text x="${p.x.toFixed(1)}" y="${(p.y - 12).toFixed(1)}" text-anchor="middle" class="node-label">${node.label}</text>`
      );
    })
    .join("");
  graphHost.innerHTML = edges + nodes;
}

async function runAcquisition(
  base: string,
  api: ServiceApi,
  scenario: ScenarioInfo,
  modelId: string | null,
) {
  state.frames = [];
  state.expectedFrames = Math.round((scenario.baseline_s + scenario.sample_s) * 2);
  $("result-section").style.display = "none";
  renderChart();

  const seedInput = $<HTMLInputElement>("seed-input").value.trim();
  const started = await api.startAcquisition({
    scenario: scenario.name,
    pack: scenario.pack,
    label: scenario.label,
    time_scale: Number($<HTMLInputElement>("time-scale").value) || 0,
    ...(seedInput === "" ? {} : { seed: Number(seedInput) }),
    ...(modelId === null ? {} : { model_id: modelId }),
  });
  setMachine(transition(state.machine, { type: "started", acquisitionId: started.acquisition_id }));

  $<HTMLButtonElement>("stop-btn").onclick = async () => {
    if (!canStop(state.machine)) return;
    if (!window.confirm("Stop now and discard this measurement?")) return;
    setMachine(transition(state.machine, { type: "stop-requested" }));
    await api.stopAcquisition(started.acquisition_id);
  };

  for await (const item of liveStream(base, started.acquisition_id, fetchTransport())) {
    if (item.type === "frame") {
      setMachine(transition(state.machine, { type: "frame", phase: item.message.phase }));
      state.frames.push({
        seq: item.message.frame.seq,
        mv: item.message.frame.mv,
        phase: item.message.phase,
      });
      renderChart();
    } else if (item.type === "disconnected") {
      showBanner(`connection lost (${item.error}); resuming...`);
    } else if (item.type === "reconnected") {
      showBanner(`resumed from frame ${item.fromSeq}`);
    } else {
      const next = transition(state.machine, { type: "stream-ended", snapshot: item.snapshot });
      setMachine(next);
      if (next.kind !== "awaiting-result") return; // stopped or failed; banner already set
      if (item.snapshot.result !== null) {
        setMachine(transition(state.machine, { type: "result", result: item.snapshot.result }));
        renderResult(item.snapshot.result);
      } else {
        setMachine(transition({ ...state.machine, notice: "record stored; no model attached" }, { type: "reset" }));
      }
      return;
    }
  }
}

async function main(): Promise<void> {
  const base = window.location.origin;
  const api = new ServiceApi(base);
  setMachine(idleState());

  const scenarios = await api.scenarios();
  const scenarioSelect = $<HTMLSelectElement>("scenario-select");
  scenarioSelect.innerHTML = scenarios
    .map((s, i) => `<option value="${i}">${s.pack}/${s.name} (${s.label})</option>`)
    .join("");

  const models = await api.readyModels();
  const modelSelect = $<HTMLSelectElement>("model-select");
  modelSelect.innerHTML =
    `<option value="">no model (store only)</option>` +
    models
      .map((m) => `<option value="${m.model_id}">${m.model_id} (${m.classes.join(", ")})</option>`)
      .join("");

  $<HTMLButtonElement>("start-btn").onclick = () => {
    const scenario = scenarios[Number(scenarioSelect.value)];
    if (scenario === undefined) return;
    const modelId = modelSelect.value === "" ? null : modelSelect.value;
    runAcquisition(base, api, scenario, modelId).catch((err) => {
      setMachine({ ...idleState(), notice: err instanceof ApiError ? err.message : String(err) });
    });
  };

  $("reset-btn").onclick = () => {
    if (state.machine.kind === "result") setMachine(transition(state.machine, { type: "reset" }));
  };
}

main().catch((err) => {
  showBanner(`console failed to start: ${err instanceof Error ? err.message : String(err)}`);
});
