/** The UI's single state machine.
 *
 * Mirrors the server phases and enforces the interaction invariants: label
 * toggles apply only to entries of the current batch, submission needs the
 * batch to have been viewed, and only one mutating request is in flight.
 * Toggles start from the server's predictions, so submitting with no
 * clicks confirms every shown classification.
 */

import type { SessionApi } from "./api.js";
import type { Batch, Label, Rect, SessionResult } from "./types.js";

export type ViewPhase = "bbox" | "slider" | "querying" | "converged";

export class ViewState {
  phase: ViewPhase = "bbox";
  sliderBatch: Batch | null = null;
  bMin = 0;
  bMax = 0;
  bias = 0;
  batch: Batch | null = null;
  toggled: Set<number> = new Set(); // entry indexes the user flipped
  batchViewed = false;
  result: SessionResult | null = null;
  private inFlight = false;

  constructor(private api: SessionApi) {}

  get busy(): boolean {
    return this.inFlight;
  }

  private async mutate<T>(op: () => Promise<T>): Promise<T> {
    if (this.inFlight) throw new Error("request already in flight");
    this.inFlight = true;
    try {
      return await op();
    } finally {
      this.inFlight = false;
    }
  }

  async startSession(image: Blob, bbox: Rect, seed: number): Promise<void> {
    if (this.phase !== "bbox") throw new Error(`startSession in phase ${this.phase}`);
    await this.mutate(async () => {
      const out = await this.api.createSession(image, bbox, seed);
      this.sliderBatch = out.slider;
      this.bMin = out.b_min;
      this.bMax = out.b_max;
      this.bias = (out.b_min + out.b_max) / 2;
      this.phase = "slider";
    });
  }

  moveSlider(bias: number): void {
    if (this.phase !== "slider") throw new Error(`moveSlider in phase ${this.phase}`);
    this.bias = Math.min(Math.max(bias, this.bMin), this.bMax);
  }

  async confirmBias(): Promise<void> {
    if (this.phase !== "slider") throw new Error(`confirmBias in phase ${this.phase}`);
    await this.mutate(async () => {
      await this.api.submitBias(this.bias);
      this.phase = "querying";
    });
    await this.fetchBatch();
  }

  async fetchBatch(): Promise<void> {
    if (this.phase !== "querying") throw new Error(`fetchBatch in phase ${this.phase}`);
    try {
      const batch = await this.api.getBatch();
      this.batch = batch;
      this.toggled = new Set();
      this.batchViewed = false;
    } catch {
      // 409: the margin zones are exhausted, the session is over.
      await this.finish();
    }
  }

  /** Rendering the batch marks it viewed; submit stays disabled until then. */
  markViewed(): void {
    this.batchViewed = true;
  }

  get canSubmit(): boolean {
    return this.phase === "querying" && this.batch !== null && this.batchViewed && !this.inFlight;
  }

  toggle(index: number): void {
    if (this.phase !== "querying" || this.batch === null) {
      throw new Error("no active batch to toggle");
    }
    if (index < 0 || index >= this.batch.entries.length) {
      throw new Error(`toggle index ${index} outside current batch`);
    }
    if (this.toggled.has(index)) this.toggled.delete(index);
    else this.toggled.add(index);
  }

  labelOf(index: number): Label {
    const entry = this.batch!.entries[index];
    const flipped = this.toggled.has(index);
    if (entry.predicted === "positive") return flipped ? "negative" : "positive";
    return flipped ? "positive" : "negative";
  }

  /** Full label map for the current batch: predictions with toggles applied. */
  labelsPayload(): Record<number, Label> {
    if (this.batch === null) throw new Error("no batch");
    const labels: Record<number, Label> = {};
    this.batch.entries.forEach((entry, index) => {
      labels[entry.cluster_id] = this.labelOf(index);
    });
    return labels;
  }

  async submitLabels(): Promise<void> {
    if (!this.canSubmit) throw new Error("submit not allowed");
    const payload = this.labelsPayload();
    const out = await this.mutate(() => this.api.submitLabels(payload));
    this.batch = null;
    this.toggled = new Set();
    this.batchViewed = false;
    if (out.converged) {
      await this.finish();
    } else {
      await this.fetchBatch();
    }
  }

  async refreshResult(): Promise<void> {
    this.result = await this.api.getResult();
  }

  private async finish(): Promise<void> {
    this.phase = "converged";
    await this.refreshResult();
  }
}
