/** Drag-to-draw bounding box geometry (canvas glue lives in render.ts). */

import type { Rect } from "./types.js";

export const MIN_DRAG_PX = 4;

export class BboxTool {
  private start: { x: number; y: number } | null = null;
  /** Latest committed rectangle; redrawing before submit replaces it. */
  rect: Rect | null = null;
  /** Live rectangle while dragging, for preview rendering. */
  preview: Rect | null = null;

  pointerDown(x: number, y: number): void {
    this.start = { x, y };
    this.preview = null;
  }

  pointerMove(x: number, y: number): void {
    if (!this.start) return;
    this.preview = normalize(this.start.x, this.start.y, x, y);
  }

  pointerUp(x: number, y: number): Rect | null {
    if (!this.start) return null;
    const rect = normalize(this.start.x, this.start.y, x, y);
    this.start = null;
    this.preview = null;
    if (rect.w < MIN_DRAG_PX || rect.h < MIN_DRAG_PX) {
      return null; // degenerate drag is ignored, previous rect stands
    }
    this.rect = rect;
    return rect;
  }
}

function normalize(x0: number, y0: number, x1: number, y1: number): Rect {
  const x = Math.round(Math.min(x0, x1));
  const y = Math.round(Math.min(y0, y1));
  const w = Math.round(Math.abs(x1 - x0));
  const h = Math.round(Math.abs(y1 - y0));
  return { x, y, w, h };
}
