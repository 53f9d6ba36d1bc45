/** Console wiring: one session card, form on the left, chart on the right. */

import { ApiError, ConsoleApi } from "./api.js";
import { drawStripChart } from "./chart.js";
import {
  FORM_DEFAULTS,
  RawFormValues,
  draftFromRaw,
  snappedIntensityText,
  violationsToIssues,
} from "./form.js";
import { FieldIssue, snapIntensity, toCreateBody } from "./validate.js";
import { ConsoleSessionView, chartModel, sessionCardStrings } from "./view.js";

const api = new ConsoleApi("");
const view = new ConsoleSessionView();
let streamAbort: AbortController | null = null;

const el = <T extends HTMLElement>(id: string): T => {
  const node = document.getElementById(id);
  if (!node) throw new Error(`missing element #${id}`);
  return node as T;
};

function toast(message: string): void {
  const box = el<HTMLDivElement>("toasts");
  const item = document.createElement("div");
  item.className = "toast";
  item.textContent = message;
  box.appendChild(item);
  setTimeout(() => item.remove(), 4000);
}

function readForm(): RawFormValues {
  return {
    mode: el<HTMLSelectElement>("f-mode").value,
    intensity_mA: el<HTMLInputElement>("f-intensity").value,
    dose_s: el<HTMLInputElement>("f-dose").value,
    ramp_rate_mA_per_min: el<HTMLInputElement>("f-ramp").value,
    freq_lo_Hz: el<HTMLInputElement>("f-freq-lo").value,
    freq_hi_Hz: el<HTMLInputElement>("f-freq-hi").value,
    duty_pct: el<HTMLInputElement>("f-duty").value,
    pattern: el<HTMLSelectElement>("f-pattern").value,
    burst_freq_Hz: el<HTMLInputElement>("f-burst-freq").value,
    chain_count: el<HTMLInputElement>("f-chain").value,
    sham: el<HTMLInputElement>("f-sham").checked,
    seed: el<HTMLInputElement>("f-seed").value,
  };
}

function renderIssues(issues: FieldIssue[]): void {
  document.querySelectorAll(".issue").forEach((node) => (node.textContent = ""));
  for (const issue of issues) {
    const slot = document.getElementById(`issue-${issue.field}`);
    if (slot) slot.textContent = issue.message;
    else toast(`${issue.field}: ${issue.message}`);
  }
}

function renderSession(): void {
  const card = el<HTMLDivElement>("session-card");
  const resource = view.resource;
  card.hidden = resource === null;
  if (!resource) return;
  const text = sessionCardStrings(view);
  el<HTMLSpanElement>("s-id").textContent = text.id;
  const badge = el<HTMLSpanElement>("s-state");
  badge.textContent = text.state;
  badge.dataset.state = text.state;
  el<HTMLSpanElement>("s-displayed").textContent = text.displayed;
  el<HTMLSpanElement>("s-connection").textContent = text.connection;
  el<HTMLButtonElement>("b-start").disabled = !view.canStart();
  el<HTMLButtonElement>("b-abort").disabled = !view.canAbort();
  const adjustable = view.canAdjustIntensity();
  el<HTMLButtonElement>("b-int-up").disabled = !adjustable;
  el<HTMLButtonElement>("b-int-down").disabled = !adjustable;
  drawStripChart(el<HTMLCanvasElement>("chart"), chartModel(view));
}

async function pumpTelemetry(id: string): Promise<void> {
  streamAbort?.abort();
  streamAbort = new AbortController();
  const signal = streamAbort.signal;
  for (;;) {
    try {
      view.setConnection("live");
      renderSession();
      for await (const frame of api.streamTelemetry(id, signal)) {
        view.applyFrame(frame);
        renderSession();
      }
      // clean end of stream: session finished
      view.setConnection("closed");
      renderSession();
      return;
    } catch (error) {
      if (signal.aborted) return;
      if (view.isFinished()) {
        view.setConnection("closed");
        renderSession();
        return;
      }
      // chart stays frozen; no samples are invented while reconnecting
      view.setConnection("reconnecting");
      renderSession();
      await new Promise((resolve) => setTimeout(resolve, 1000));
    }
  }
}

async function onCreate(event: Event): Promise<void> {
  event.preventDefault();
  const { draft, issues } = draftFromRaw(readForm());
  renderIssues(issues);
  if (issues.length > 0) return;
  try {
    const resource = await api.createSession(toCreateBody(draft));
    view.frames.clear();
    view.applyResource(resource);
    renderSession();
    el<HTMLInputElement>("f-sham").checked = false; // write-only field
    void pumpTelemetry(resource.id);
  } catch (error) {
    if (error instanceof ApiError && error.violations.length > 0) {
      renderIssues(violationsToIssues(error.violations));
    } else {
      toast(`create failed: ${(error as Error).message}`);
    }
  }
}

async function onStart(): Promise<void> {
  if (!view.resource) return;
  try {
    view.applyResource(await api.start(view.resource.id));
    renderSession();
  } catch (error) {
    toast(`start: ${(error as Error).message}`);
  }
}

async function onAbort(): Promise<void> {
  if (!view.resource) return;
  if (!window.confirm("Abort the running session? Current ramps down at 4 mA/min.")) {
    return;
  }
  try {
    view.applyResource(await api.abort(view.resource.id));
    renderSession();
  } catch (error) {
    toast(`abort: ${(error as Error).message}`);
  }
}

async function onStepIntensity(direction: 1 | -1): Promise<void> {
  if (!view.resource) return;
  const target = snapIntensity(view.lastDisplayed_mA() + direction * 0.1);
  try {
    view.applyResource(await api.setIntensity(view.resource.id, target));
    toast(`intensity target ${target.toFixed(1)} mA`);
  } catch (error) {
    toast(`intensity: ${(error as Error).message}`);
  }
}

function onModeOrPatternChange(): void {
  const mode = el<HTMLSelectElement>("f-mode").value;
  const pattern = el<HTMLSelectElement>("f-pattern").value;
  const pulsed = mode === "tpcs" || mode === "ces";
  el<HTMLDivElement>("g-pulse").hidden = !pulsed;
  el<HTMLDivElement>("g-pattern").hidden = mode !== "ces";
  el<HTMLDivElement>("g-burst").hidden = !(mode === "ces" && pattern === "burst");
}

function init(): void {
  const fields = el<HTMLFormElement>("prescription");
  el<HTMLInputElement>("f-intensity").value = FORM_DEFAULTS.intensity_mA;
  el<HTMLInputElement>("f-dose").value = FORM_DEFAULTS.dose_s;
  el<HTMLInputElement>("f-ramp").value = FORM_DEFAULTS.ramp_rate_mA_per_min;
  el<HTMLInputElement>("f-freq-lo").value = FORM_DEFAULTS.freq_lo_Hz;
  el<HTMLInputElement>("f-freq-hi").value = FORM_DEFAULTS.freq_hi_Hz;
  el<HTMLInputElement>("f-duty").value = FORM_DEFAULTS.duty_pct;
  el<HTMLInputElement>("f-burst-freq").value = FORM_DEFAULTS.burst_freq_Hz;
  el<HTMLInputElement>("f-chain").value = FORM_DEFAULTS.chain_count;
  el<HTMLInputElement>("f-seed").value = FORM_DEFAULTS.seed;

  fields.addEventListener("submit", (event) => void onCreate(event));
  el<HTMLInputElement>("f-intensity").addEventListener("change", (event) => {
    const input = event.target as HTMLInputElement;
    input.value = snappedIntensityText(input.value);
  });
  el<HTMLSelectElement>("f-mode").addEventListener("change", onModeOrPatternChange);
  el<HTMLSelectElement>("f-pattern").addEventListener("change", onModeOrPatternChange);
  el<HTMLButtonElement>("b-start").addEventListener("click", () => void onStart());
  el<HTMLButtonElement>("b-abort").addEventListener("click", () => void onAbort());
  el<HTMLButtonElement>("b-int-up").addEventListener(
    "click", () => void onStepIntensity(1));
  el<HTMLButtonElement>("b-int-down").addEventListener(
    "click", () => void onStepIntensity(-1));
  onModeOrPatternChange();
}

window.addEventListener("load", init);
