import { describe, expect, it } from "vitest";
import { SessionApi, type Transport } from "../src/api.js";
import { ViewState } from "../src/state.js";
import type { Batch } from "../src/types.js";

function makeBatch(round: number, predictions: ("positive" | "negative")[]): Batch {
  return {
    round,
    phase: "querying",
    entries: predictions.map((predicted, k) => ({
      cluster_id: 100 + k,
      score: k,
      predicted,
      zone: "near+",
      crop: "",
    })),
  };
}

interface Scripted {
  match: (method: string, path: string) => boolean;
  status?: number;
  response: unknown;
}

function scriptedTransport(steps: Scripted[]): Transport {
  let cursor = 0;
  return async (path, init) => {
    const method = init.method ?? "GET";
    const step = steps[cursor];
    if (!step || !step.match(method, path)) {
      throw new Error(`unexpected request ${method} ${path} at step ${cursor}`);
    }
    cursor += 1;
    return { status: step.status ?? 200, json: async () => step.response };
  };
}

function sessionSteps(batches: Batch[], converged: number): Scripted[] {
  const steps: Scripted[] = [
    {
      match: (m, p) => m === "POST" && p === "/sessions",
      status: 201,
      response: {
        session_id: "s1",
        n_clusters: 40,
        slider: { round: 0, phase: "slider", entries: [] },
        b_min: -1,
        b_max: 1,
      },
    },
    {
      match: (m, p) => m === "PUT" && p === "/sessions/s1/bias",
      response: { phase: "querying", b: 0 },
    },
  ];
  batches.forEach((batch, k) => {
    steps.push({
      match: (m, p) => m === "GET" && p === "/sessions/s1/batch",
      response: batch,
    });
    steps.push({
      match: (m, p) => m === "POST" && p === "/sessions/s1/labels",
      response: { converged: k === converged, round: k + 1, corrections: [] },
    });
  });
  steps.push({
    match: (m, p) => m === "GET" && p === "/sessions/s1/result",
    response: { count: 33, detections: [], converged: true, round: converged + 1, phase: "converged" },
  });
  return steps;
}

const dummyBlob = new Blob([new Uint8Array([1, 2, 3])]);
const box = { x: 1, y: 2, w: 30, h: 28 };

describe("ViewState", () => {
  it("zero clicks submits the predictions verbatim", async () => {
    const batch = makeBatch(0, ["positive", "negative", "positive"]);
    const api = new SessionApi(scriptedTransport(sessionSteps([batch], 0)));
    const state = new ViewState(api);
    await state.startSession(dummyBlob, box, 7);
    await state.confirmBias();
    state.markViewed();
    await state.submitLabels();
    const labelsRequest = api.sent.find((r) => r.path.endsWith("/labels"));
    expect(labelsRequest?.body).toEqual({
      labels: { "100": "positive", "101": "negative", "102": "positive" },
    });
    expect(state.phase).toBe("converged");
    expect(state.result?.count).toBe(33);
  });

  it("one toggle flips exactly one label", async () => {
    const batch = makeBatch(0, ["positive", "negative"]);
    const api = new SessionApi(scriptedTransport(sessionSteps([batch], 0)));
    const state = new ViewState(api);
    await state.startSession(dummyBlob, box, 7);
    await state.confirmBias();
    state.markViewed();
    state.toggle(1);
    await state.submitLabels();
    const labelsRequest = api.sent.find((r) => r.path.endsWith("/labels"));
    expect(labelsRequest?.body).toEqual({
      labels: { "100": "positive", "101": "positive" },
    });
  });

  it("toggling twice restores the prediction", async () => {
    const batch = makeBatch(0, ["negative"]);
    const api = new SessionApi(scriptedTransport(sessionSteps([batch], 0)));
    const state = new ViewState(api);
    await state.startSession(dummyBlob, box, 7);
    await state.confirmBias();
    state.markViewed();
    state.toggle(0);
    state.toggle(0);
    expect(state.labelOf(0)).toBe("negative");
  });

  it("rejects toggles outside the current batch", async () => {
    const batch = makeBatch(0, ["positive"]);
    const api = new SessionApi(scriptedTransport(sessionSteps([batch], 0)));
    const state = new ViewState(api);
    await state.startSession(dummyBlob, box, 7);
    await state.confirmBias();
    expect(() => state.toggle(5)).toThrow(/outside/);
  });

  it("submit stays disabled until the batch is viewed", async () => {
    const batch = makeBatch(0, ["positive"]);
    const api = new SessionApi(scriptedTransport(sessionSteps([batch], 0)));
    const state = new ViewState(api);
    await state.startSession(dummyBlob, box, 7);
    await state.confirmBias();
    expect(state.canSubmit).toBe(false);
    await expect(state.submitLabels()).rejects.toThrow(/not allowed/);
    state.markViewed();
    expect(state.canSubmit).toBe(true);
  });

  it("continues to the next batch while not converged", async () => {
    const batches = [makeBatch(0, ["positive"]), makeBatch(1, ["negative"])];
    const api = new SessionApi(scriptedTransport(sessionSteps(batches, 1)));
    const state = new ViewState(api);
    await state.startSession(dummyBlob, box, 7);
    await state.confirmBias();
    state.markViewed();
    await state.submitLabels();
    expect(state.phase).toBe("querying");
    expect(state.batch?.round).toBe(1);
    state.markViewed();
    await state.submitLabels();
    expect(state.phase).toBe("converged");
  });

  it("treats a 409 batch fetch as convergence", async () => {
    const steps = sessionSteps([makeBatch(0, ["positive"])], 99); // never converges via labels
    // Replace the second GET batch with a 409 and end with the result.
    steps.splice(4, steps.length - 4, {
      match: (m, p) => m === "GET" && p === "/sessions/s1/batch",
      status: 409,
      response: { detail: "session converged" },
    }, {
      match: (m, p) => m === "GET" && p === "/sessions/s1/result",
      response: { count: 12, detections: [], converged: true, round: 1, phase: "converged" },
    });
    const api = new SessionApi(scriptedTransport(steps));
    const state = new ViewState(api);
    await state.startSession(dummyBlob, box, 7);
    await state.confirmBias();
    state.markViewed();
    await state.submitLabels();
    expect(state.phase).toBe("converged");
    expect(state.result?.count).toBe(12);
  });

  it("blocks overlapping mutating requests", async () => {
    const batch = makeBatch(0, ["positive"]);
    let release: () => void = () => {};
    const gate = new Promise<void>((resolve) => (release = resolve));
    const base = scriptedTransport(sessionSteps([batch], 0));
    const slow: Transport = async (path, init) => {
      if (init.method === "PUT") await gate;
      return base(path, init);
    };
    const state = new ViewState(new SessionApi(slow));
    await state.startSession(dummyBlob, box, 7);
    const pending = state.confirmBias();
    expect(state.busy).toBe(true);
    await expect(state.submitLabels()).rejects.toThrow();
    release();
    await pending;
  });
});
