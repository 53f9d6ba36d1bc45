/** REST + streaming client for the control service. */

import {
  BlindedFrame,
  SessionResource,
  Violation,
  parseBlindedFrame,
  parseResource,
} from "./protocol.js";

export class ApiError extends Error {
  constructor(
    readonly status: number,
    message: string,
    readonly violations: Violation[] = [],
  ) {
    super(message);
  }
}

async function throwFrom(response: Response): Promise<never> {
  let detail = `${response.status}`;
  let violations: Violation[] = [];
  try {
    const body = (await response.json()) as Record<string, unknown>;
    if (typeof body["detail"] === "string") detail = body["detail"];
    if (Array.isArray(body["violations"])) {
      violations = body["violations"] as Violation[];
    }
  } catch {
    /* non-JSON error body */
  }
  throw new ApiError(response.status, detail, violations);
}

export class ConsoleApi {
  constructor(readonly base: string = "") {}

  private async post(path: string, body?: unknown): Promise<SessionResource> {
    const response = await fetch(this.base + path, {
      method: "POST",
      headers: { "content-type": "application/json" },
      body: body === undefined ? undefined : JSON.stringify(body),
    });
    if (!response.ok) await throwFrom(response);
    return parseResource(await response.json());
  }

  createSession(body: { stim: Record<string, unknown> }): Promise<SessionResource> {
    return this.post("/sessions", body);
  }

  getSession(id: string): Promise<SessionResource> {
    return fetch(`${this.base}/sessions/${id}`).then(async (response) => {
      if (!response.ok) await throwFrom(response);
      return parseResource(await response.json());
    });
  }

  start(id: string): Promise<SessionResource> {
    return this.post(`/sessions/${id}/start`);
  }

  abort(id: string): Promise<SessionResource> {
    return this.post(`/sessions/${id}/abort`);
  }

  setIntensity(id: string, intensity_mA: number): Promise<SessionResource> {
    return this.post(`/sessions/${id}/intensity`, { intensity_mA });
  }

  /**
   * Consume the blinded telemetry stream as parsed frames.
   *
   * Ends when the service closes the stream (final done/aborted frame) or
   * the signal aborts; network failures propagate to the caller, which
   * owns reconnect policy.
   */
  async *streamTelemetry(
    id: string,
    signal?: AbortSignal,
  ): AsyncGenerator<BlindedFrame> {
    const response = await fetch(
      `${this.base}/sessions/${id}/telemetry?channel=blinded`,
      { signal },
    );
    if (!response.ok) await throwFrom(response);
    if (!response.body) throw new ApiError(0, "no response body");
    const reader = response.body.getReader();
    const decoder = new TextDecoder();
    let buffer = "";
    try {
      for (;;) {
        const { done, value } = await reader.read();
        if (done) break;
        buffer += decoder.decode(value, { stream: true });
        let newline;
        while ((newline = buffer.indexOf("\n")) >= 0) {
          const line = buffer.slice(0, newline).trim();
          buffer = buffer.slice(newline + 1);
          if (line) yield parseBlindedFrame(JSON.parse(line));
        }
      }
      const tail = buffer.trim();
      if (tail) yield parseBlindedFrame(JSON.parse(tail));
    } finally {
      reader.releaseLock();
    }
  }
}
