/** DOM rendering for the labeling client. Logic stays in state.ts. */

import { BboxTool } from "./bbox.js";
import { frameColor } from "./slider.js";
import type { ViewState } from "./state.js";

export function renderSliderFrames(state: ViewState, container: HTMLElement): void {
  container.innerHTML = "";
  if (!state.sliderBatch) return;
  for (const entry of state.sliderBatch.entries) {
    const card = document.createElement("div");
    card.className = `frame ${frameColor(entry.score, state.bias)}`;
    const img = document.createElement("img");
    img.src = `data:image/png;base64,${entry.crop}`;
    card.appendChild(img);
    container.appendChild(card);
  }
}

export function renderBatch(state: ViewState, container: HTMLElement): void {
  container.innerHTML = "";
  if (!state.batch) return;
  state.batch.entries.forEach((entry, index) => {
    const card = document.createElement("div");
    card.className = `frame ${state.labelOf(index) === "positive" ? "green" : "red"}`;
    card.title = `cluster ${entry.cluster_id} score ${entry.score.toFixed(3)} (${entry.zone})`;
    const img = document.createElement("img");
    img.src = `data:image/png;base64,${entry.crop}`;
    card.appendChild(img);
    card.addEventListener("click", () => {
      state.toggle(index);
      renderBatch(state, container);
    });
    container.appendChild(card);
  });
  state.markViewed();
}

export function renderResult(state: ViewState, canvas: HTMLCanvasElement, countEl: HTMLElement): void {
  if (!state.result) return;
  countEl.textContent = `count: ${state.result.count}${state.result.converged ? "" : " (in progress)"}`;
  const ctx = canvas.getContext("2d");
  if (!ctx) return;
  for (const det of state.result.detections) {
    if (det.label !== "positive") continue;
    ctx.beginPath();
    ctx.strokeStyle = "#2e9e44";
    ctx.lineWidth = 1.5;
    ctx.arc(det.x, det.y, 13, 0, 2 * Math.PI);
    ctx.stroke();
  }
}

export function attachBboxTool(canvas: HTMLCanvasElement, onBox: (rect: DOMRectReadOnly) => void): BboxTool {
  const tool = new BboxTool();
  const position = (ev: PointerEvent) => {
    const bounds = canvas.getBoundingClientRect();
    return { x: ev.clientX - bounds.left, y: ev.clientY - bounds.top };
  };
  canvas.addEventListener("pointerdown", (ev) => {
    const p = position(ev);
    tool.pointerDown(p.x, p.y);
  });
  canvas.addEventListener("pointermove", (ev) => {
    const p = position(ev);
    tool.pointerMove(p.x, p.y);
  });
  canvas.addEventListener("pointerup", (ev) => {
    const p = position(ev);
    const rect = tool.pointerUp(p.x, p.y);
    if (rect) onBox(new DOMRectReadOnly(rect.x, rect.y, rect.w, rect.h));
  });
  return tool;
}
