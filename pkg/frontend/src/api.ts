/** Thin client over the session service; transport injectable for tests. */

import { assertValidBias, assertValidLabels } from "./schemas.js";
import type {
  Batch,
  CreateSessionResponse,
  Label,
  LabelsResponse,
  Rect,
  SessionResult,
} from "./types.js";

export interface Transport {
  (path: string, init: RequestInit): Promise<{ status: number; json(): Promise<unknown> }>;
}

export interface SentRequest {
  method: string;
  path: string;
  body: unknown;
}

export class SessionApi {
  private transport: Transport;
  /** Every mutating payload actually sent, in order (audit + tests). */
  readonly sent: SentRequest[] = [];
  sessionId: string | null = null;

  constructor(transport?: Transport, private base: string = "") {
    this.transport =
      transport ??
      (async (path, init) => {
        const resp = await fetch(this.base + path, init);
        return { status: resp.status, json: () => resp.json() };
      });
  }

  private async request(method: string, path: string, body?: unknown): Promise<unknown> {
    const init: RequestInit = { method };
    if (body !== undefined && !(body instanceof FormData)) {
      init.headers = { "content-type": "application/json" };
      init.body = JSON.stringify(body);
    } else if (body instanceof FormData) {
      init.body = body;
    }
    if (method !== "GET") {
      this.sent.push({ method, path, body: body instanceof FormData ? "<form-data>" : body });
    }
    const resp = await this.transport(path, init);
    const payload = await resp.json();
    if (resp.status >= 400) {
      const detail = (payload as { detail?: string }).detail ?? resp.status;
      throw new Error(`${method} ${path}: ${detail}`);
    }
    return payload;
  }

  async createSession(image: Blob, bbox: Rect, seed: number): Promise<CreateSessionResponse> {
    const form = new FormData();
    form.append("image", image, "upload.png");
    form.append("bbox", `${bbox.x},${bbox.y},${bbox.w},${bbox.h}`);
    form.append("seed", String(seed));
    const out = (await this.request("POST", "/sessions", form)) as CreateSessionResponse;
    this.sessionId = out.session_id;
    return out;
  }

  async submitBias(b: number): Promise<{ phase: string }> {
    const payload = assertValidBias({ b });
    return (await this.request("PUT", `/sessions/${this.sessionId}/bias`, payload)) as {
      phase: string;
    };
  }

  async getBatch(): Promise<Batch> {
    return (await this.request("GET", `/sessions/${this.sessionId}/batch`)) as Batch;
  }

  async submitLabels(labels: Record<number, Label>): Promise<LabelsResponse> {
    const stringKeyed: Record<string, Label> = {};
    for (const [key, value] of Object.entries(labels)) stringKeyed[key] = value;
    const payload = assertValidLabels({ labels: stringKeyed });
    return (await this.request(
      "POST",
      `/sessions/${this.sessionId}/labels`,
      payload,
    )) as LabelsResponse;
  }

  async getResult(): Promise<SessionResult> {
    return (await this.request("GET", `/sessions/${this.sessionId}/result`)) as SessionResult;
  }
}
