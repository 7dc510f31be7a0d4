import { describe, expect, it } from "vitest";
import { frameColor, frameColors, sliderToBias } from "../src/slider.js";
import type { Batch } from "../src/types.js";

function batchWithScores(scores: number[]): Batch {
  return {
    round: 0,
    phase: "slider",
    entries: scores.map((score, k) => ({
      cluster_id: k,
      score,
      predicted: "positive",
      zone: "slider",
      crop: "",
    })),
  };
}

describe("slider", () => {
  const batch = batchWithScores([-2, -1, 0, 1, 2]);

  it("slider at max turns every frame red", () => {
    const colors = frameColors(batch, 2.5);
    expect(colors.every((c) => c === "red")).toBe(true);
  });

  it("slider at min turns every frame green", () => {
    const colors = frameColors(batch, -2.5);
    expect(colors.every((c) => c === "green")).toBe(true);
  });

  it("colors match sign(score - b) for spot-checked entries", () => {
    const b = 0.5;
    for (const entry of batch.entries) {
      const expected = entry.score > b ? "green" : "red";
      expect(frameColor(entry.score, b)).toBe(expected);
    }
  });

  it("score exactly at the bias renders red (non-positive)", () => {
    expect(frameColor(1.0, 1.0)).toBe("red");
  });

  it("maps slider fractions onto the bias range with clamping", () => {
    expect(sliderToBias(0, -3, 5)).toBe(-3);
    expect(sliderToBias(1, -3, 5)).toBe(5);
    expect(sliderToBias(0.5, -3, 5)).toBe(1);
    expect(sliderToBias(-0.2, -3, 5)).toBe(-3);
    expect(sliderToBias(1.7, -3, 5)).toBe(5);
  });
});
