// DOM wiring for the scenario explorer. All displayed numbers, prompts and
// labels come from service responses; this file only renders and routes events.

import { ServiceClient } from "./api.js";
import { SessionState, buildRequest, cardView, clampMacd, clampRsi, panelCount,
         MACD_SCALE } from "./state.js";
import { WindowSummary } from "./types.js";

const client = new ServiceClient("");
const state = new SessionState(client);
let lookahead = 3;

const el = (id: string) => document.getElementById(id) as HTMLElement;
const input = (id: string) => document.getElementById(id) as HTMLInputElement;

function banner(message: string, retry: (() => void) | null): void {
  const box = el("banner");
  box.textContent = message;
  box.classList.toggle("hidden", message === "");
  if (retry) {
    const btn = document.createElement("button");
    btn.textContent = "retry";
    btn.onclick = retry;
    box.append(" ", btn);
  }
}

function toast(message: string): void {
  const box = el("toast");
  box.textContent = message;
  box.classList.remove("hidden");
  setTimeout(() => box.classList.add("hidden"), 4000);
}

async function loadWindows(): Promise<void> {
  banner("", null);
  let page;
  try {
    page = await client.listWindows(0, 200);
  } catch (err) {
    banner("service unreachable — is `candleforge serve` running?", loadWindows);
    return;
  }
  lookahead = page.lookahead;
  const list = el("window-list");
  list.innerHTML = "";
  for (const w of page.windows) {
    const item = document.createElement("button");
    item.className = "window-item";
    item.innerHTML =
      `<span class="wid">#${w.id}</span> close ${w.close}` +
      ` <span class="dim">rsi ${w.rsi.toFixed(2)} macd ${w.macd.toFixed(2)}</span>` +
      (w.has_ground_truth ? "" : ` <span class="badge">no ground truth</span>`);
    item.onclick = () => select(w);
    list.appendChild(item);
  }
  el("window-count").textContent = `${page.total} windows`;
}

function select(w: WindowSummary): void {
  state.select(w);
  el("selected-title").textContent = `window #${w.id}`;
  input("rsi-slider").value = String(w.rsi);
  input("macd-slider").value = String(clampMacd(w.macd));
  el("rsi-value").textContent = w.rsi.toFixed(2);
  el("macd-value").textContent = w.macd.toFixed(2);
  input("seed-field").value = "";
  const panels = el("panels");
  panels.dataset.count = String(panelCount(w));
  (el("input-chart") as HTMLImageElement).setAttribute(
    "src", client.windowChartUrl(w.id));
  (el("generated-chart") as HTMLImageElement).removeAttribute("src");
  el("gt-panel").classList.toggle("hidden", !w.has_ground_truth);
  if (w.has_ground_truth) {
    (el("gt-chart") as HTMLImageElement).setAttribute(
      "src", client.windowChartUrl(w.id + lookahead));
  }
  el("workspace").classList.remove("hidden");
  renderHistory();
}

function overridesFromControls() {
  const o = {
    rsi: null as number | null, macd: null as number | null,
    seed: null as number | null, steps: null as number | null,
    textGuidance: null as number | null, imageGuidance: null as number | null,
  };
  if (input("rsi-touched").value === "1") o.rsi = clampRsi(Number(input("rsi-slider").value));
  if (input("macd-touched").value === "1") o.macd = clampMacd(Number(input("macd-slider").value));
  if (input("seed-field").value !== "") o.seed = Number(input("seed-field").value);
  if (input("steps-field").value !== "") o.steps = Number(input("steps-field").value);
  return o;
}

async function submit(): Promise<void> {
  const w = state.selected;
  if (!w) return;
  const req = buildRequest(w.id, overridesFromControls());
  el("spinner").classList.remove("hidden");
  const outcome = await state.submit(req);
  el("spinner").classList.add("hidden");
  if (outcome.kind === "error") {
    if (outcome.retryable) {
      toast(`busy (${outcome.code}) — try again shortly`);
    } else {
      toast(`rejected: ${outcome.message}`);
    }
    return;
  }
  (el("generated-chart") as HTMLImageElement).setAttribute(
    "src", client.imageUrl(outcome.result));
  renderHistory();
}

function labelChip(color: "red" | "blue" | "black", text: string): string {
  return `<span class="chip chip-${color}">${text}</span>`;
}

function renderHistory(): void {
  const w = state.selected;
  if (!w) return;
  const holder = el("history");
  holder.innerHTML = "";
  for (const entry of state.historyFor(w.id)) {
    const view = cardView(entry.result, client);
    const card = document.createElement("div");
    card.className = "card";
    card.innerHTML = `
      <img src="${view.imageUrl}" alt="generated chart" width="128" height="128">
      <div class="card-body">
        <div class="prompt">${view.prompt}</div>
        <div>${labelChip(view.labelColor, `predicted ${view.labelColor}`)}
             ${view.groundTruthColor
               ? labelChip(view.groundTruthColor, `actual ${view.groundTruthColor}`)
               : `<span class="dim">no ground truth</span>`}
             ${view.cached ? `<span class="badge">cached</span>` : ""}</div>
        <div class="dim">seed ${view.seed} · ${view.params}</div>
      </div>`;
    holder.appendChild(card);
  }
}

function wireControls(): void {
  const mark = (slider: string, touched: string, label: string) => {
    input(slider).addEventListener("input", () => {
      input(touched).value = "1";
      el(label).textContent = Number(input(slider).value).toFixed(2);
    });
  };
  input("macd-slider").min = String(-MACD_SCALE);
  input("macd-slider").max = String(MACD_SCALE);
  mark("rsi-slider", "rsi-touched", "rsi-value");
  mark("macd-slider", "macd-touched", "macd-value");
  el("submit-btn").addEventListener("click", () => void submit());
  el("reload-btn").addEventListener("click", () => void loadWindows());
}

wireControls();
void loadWindows();
