import { describe, expect, it } from "vitest";
import { BboxTool } from "../src/bbox.js";

describe("BboxTool", () => {
  it("drag and release yields an integer rectangle", () => {
    const tool = new BboxTool();
    tool.pointerDown(10.4, 20.6);
    tool.pointerMove(30, 40);
    const rect = tool.pointerUp(30.2, 44.8);
    expect(rect).toEqual({ x: 10, y: 21, w: 20, h: 24 });
    expect(tool.rect).toEqual(rect);
  });

  it("normalizes drags in any direction", () => {
    const tool = new BboxTool();
    tool.pointerDown(50, 60);
    const rect = tool.pointerUp(20, 30);
    expect(rect).toEqual({ x: 20, y: 30, w: 30, h: 30 });
  });

  it("ignores degenerate drags below 4 px", () => {
    const tool = new BboxTool();
    tool.pointerDown(10, 10);
    expect(tool.pointerUp(12, 40)).toBeNull();
    expect(tool.rect).toBeNull();
  });

  it("redraw before submit replaces the box", () => {
    const tool = new BboxTool();
    tool.pointerDown(0, 0);
    tool.pointerUp(10, 10);
    tool.pointerDown(5, 5);
    const second = tool.pointerUp(25, 30);
    expect(tool.rect).toEqual(second);
    expect(tool.rect).toEqual({ x: 5, y: 5, w: 20, h: 25 });
  });

  it("keeps the previous box when a later drag is degenerate", () => {
    const tool = new BboxTool();
    tool.pointerDown(0, 0);
    const first = tool.pointerUp(12, 12);
    tool.pointerDown(40, 40);
    expect(tool.pointerUp(41, 41)).toBeNull();
    expect(tool.rect).toEqual(first);
  });
});
