/** Initial-bias slider logic: live frame recolor as the threshold moves. */

import type { Batch, Label } from "./types.js";

/** Green = classified positive (score above the bias), red = negative. */
export function frameColor(score: number, b: number): "green" | "red" {
  return score > b ? "green" : "red";
}

export function frameColors(batch: Batch, b: number): ("green" | "red")[] {
  return batch.entries.map((e) => frameColor(e.score, b));
}

export function predictedLabel(score: number, b: number): Label {
  return score > b ? "positive" : "negative";
}

/** Map slider position in [0, 1] onto the advertised bias range. */
export function sliderToBias(fraction: number, bMin: number, bMax: number): number {
  const t = Math.min(Math.max(fraction, 0), 1);
  return bMin + t * (bMax - bMin);
}
