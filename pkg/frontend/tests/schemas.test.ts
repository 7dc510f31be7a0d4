import { readFileSync } from "node:fs";
import { join } from "node:path";
import { describe, expect, it } from "vitest";
import { validateBiasRequest, validateLabelsRequest } from "../src/schemas.js";
import { validateAgainstSchema, type Schema } from "./schema-validator.js";

const SCHEMA_DIR = join(__dirname, "..", "..", "docs", "schemas");

function loadSchema(name: string): Schema {
  return JSON.parse(readFileSync(join(SCHEMA_DIR, name), "utf-8"));
}

describe("payload validators agree with the service schemas", () => {
  const biasSchema = loadSchema("bias-request.schema.json");
  const labelsSchema = loadSchema("labels-request.schema.json");

  const biasCases: [unknown, boolean][] = [
    [{ b: 0.5 }, true],
    [{ b: -3 }, true],
    [{ b: "x" }, false],
    [{ b: 1, extra: 2 }, false],
    [{}, false],
  ];

  it.each(biasCases)("bias payload %j -> %s", (payload, ok) => {
    expect(validateBiasRequest(payload)).toBe(ok);
    expect(validateAgainstSchema(payload, biasSchema).length === 0).toBe(ok);
  });

  const labelsCases: [unknown, boolean][] = [
    [{ labels: { "3": "positive", "17": "negative" } }, true],
    [{ labels: {} }, true],
    [{ labels: { "3": "maybe" } }, false],
    [{ labels: { abc: "positive" } }, false],
    [{ labels: { "3": "positive" }, extra: 1 }, false],
    [{}, false],
  ];

  it.each(labelsCases)("labels payload %j -> %s", (payload, ok) => {
    expect(validateLabelsRequest(payload)).toBe(ok);
    expect(validateAgainstSchema(payload, labelsSchema).length === 0).toBe(ok);
  });
});

describe("recorded service responses satisfy the response schemas", () => {
  const conversation = JSON.parse(
    readFileSync(join(__dirname, "..", "fixtures", "conversation.json"), "utf-8"),
  );

  it("create-session response", () => {
    const step = conversation.steps[0];
    const schema = loadSchema("create-session-response.schema.json");
    expect(validateAgainstSchema(step.response, schema)).toEqual([]);
  });

  it("batch responses", () => {
    const schema = loadSchema("batch.schema.json");
    for (const step of conversation.steps) {
      if (step.method === "GET" && step.path.endsWith("/batch") && step.status === 200) {
        expect(validateAgainstSchema(step.response, schema)).toEqual([]);
      }
    }
  });

  it("result response", () => {
    const schema = loadSchema("result.schema.json");
    const step = conversation.steps[conversation.steps.length - 1];
    expect(step.path.endsWith("/result")).toBe(true);
    expect(validateAgainstSchema(step.response, schema)).toEqual([]);
  });
});
