/** Wiring: image upload, bbox drawing, slider round, correction rounds. */

import { SessionApi } from "./api.js";
import { attachBboxTool, renderBatch, renderResult, renderSliderFrames } from "./render.js";
import { sliderToBias } from "./slider.js";
import { ViewState, type ViewPhase } from "./state.js";
import type { Rect } from "./types.js";

function el<T extends HTMLElement>(id: string): T {
  const node = document.getElementById(id);
  if (!node) throw new Error(`missing element #${id}`);
  return node as T;
}

async function boot(): Promise<void> {
  const api = new SessionApi(undefined, "");
  const state = new ViewState(api);

  const fileInput = el<HTMLInputElement>("image-file");
  const canvas = el<HTMLCanvasElement>("scene");
  const status = el<HTMLElement>("status");
  const frames = el<HTMLElement>("frames");
  const slider = el<HTMLInputElement>("bias-slider");
  const sliderRow = el<HTMLElement>("slider-row");
  const confirmBias = el<HTMLButtonElement>("confirm-bias");
  const submitLabels = el<HTMLButtonElement>("submit-labels");
  const countEl = el<HTMLElement>("count");

  let imageBlob: Blob | null = null;
  let pendingBox: Rect | null = null;

  fileInput.addEventListener("change", () => {
    const file = fileInput.files?.[0];
    if (!file) return;
    imageBlob = file;
    const url = URL.createObjectURL(file);
    const img = new Image();
    img.onload = () => {
      canvas.width = img.width;
      canvas.height = img.height;
      canvas.getContext("2d")?.drawImage(img, 0, 0);
      status.textContent = "drag a box around one object";
    };
    img.src = url;
  });

  attachBboxTool(canvas, async (rect) => {
    pendingBox = { x: rect.x, y: rect.y, w: rect.width, h: rect.height };
    if (!imageBlob || state.phase !== "bbox") return;
    status.textContent = "mining patches and building the model...";
    try {
      await state.startSession(imageBlob, pendingBox, 0);
    } catch (err) {
      status.textContent = String(err);
      return;
    }
    status.textContent = "pick the initial threshold with the slider";
    sliderRow.hidden = false;
    renderSliderFrames(state, frames);
  });

  slider.addEventListener("input", () => {
    if (state.phase !== "slider") return;
    state.moveSlider(sliderToBias(Number(slider.value) / 1000, state.bMin, state.bMax));
    renderSliderFrames(state, frames);
  });

  const currentPhase = (): ViewPhase => state.phase;

  confirmBias.addEventListener("click", async () => {
    if (state.phase !== "slider" || state.busy) return;
    await state.confirmBias();
    sliderRow.hidden = true;
    submitLabels.hidden = false;
    if (currentPhase() === "querying") {
      status.textContent = "click frames that are wrong, then submit";
      renderBatch(state, frames);
    }
    await state.refreshResult();
    renderResult(state, canvas, countEl);
  });

  submitLabels.addEventListener("click", async () => {
    if (!state.canSubmit) return;
    await state.submitLabels();
    await state.refreshResult();
    renderResult(state, canvas, countEl);
    if (state.phase === "converged") {
      status.textContent = "converged";
      submitLabels.hidden = true;
      frames.innerHTML = "";
    } else {
      renderBatch(state, frames);
    }
  });
}

boot();
