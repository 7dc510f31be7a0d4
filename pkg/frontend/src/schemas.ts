/** Runtime validation of every payload the UI sends.
 *
 * The checks mirror docs/schemas/bias-request.schema.json and
 * labels-request.schema.json; the test suite additionally validates
 * emitted payloads against those schema files directly.
 */

import type { BiasRequest, LabelsRequest } from "./types.js";

export function validateBiasRequest(payload: unknown): payload is BiasRequest {
  if (typeof payload !== "object" || payload === null) return false;
  const keys = Object.keys(payload as object);
  if (keys.length !== 1 || keys[0] !== "b") return false;
  const b = (payload as { b: unknown }).b;
  return typeof b === "number" && Number.isFinite(b);
}

export function validateLabelsRequest(payload: unknown): payload is LabelsRequest {
  if (typeof payload !== "object" || payload === null) return false;
  const keys = Object.keys(payload as object);
  if (keys.length !== 1 || keys[0] !== "labels") return false;
  const labels = (payload as { labels: unknown }).labels;
  if (typeof labels !== "object" || labels === null || Array.isArray(labels)) return false;
  for (const [key, value] of Object.entries(labels)) {
    if (!/^[0-9]+$/.test(key)) return false;
    if (value !== "positive" && value !== "negative") return false;
  }
  return true;
}

export function assertValidBias(payload: BiasRequest): BiasRequest {
  if (!validateBiasRequest(payload)) {
    throw new Error(`invalid bias payload: ${JSON.stringify(payload)}`);
  }
  return payload;
}

export function assertValidLabels(payload: LabelsRequest): LabelsRequest {
  if (!validateLabelsRequest(payload)) {
    throw new Error(`invalid labels payload: ${JSON.stringify(payload)}`);
  }
  return payload;
}
