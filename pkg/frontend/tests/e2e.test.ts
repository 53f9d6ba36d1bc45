/**
 * Live end-to-end run against the real Python control service.
 *
 * Spawns `python -m tessim.cli serve`, then drives a CES burst session
 * through the console's own client and view: create -> start -> adjust
 * intensity in dose -> abort. Asserts the chart/view picks up each state
 * transition within two published frames, that the abort shows a ramp
 * (never a step) on the blinded display, and that no blinded payload
 * byte ever mentions the sham flag or the delivered current.
 */

import { spawn, ChildProcess } from "node:child_process";
import { afterAll, beforeAll, describe, expect, it } from "vitest";

import { ApiError, ConsoleApi } from "../src/api.js";
import { BlindedFrame } from "../src/protocol.js";
import { ConsoleSessionView, chartModel } from "../src/view.js";

const PORT = 8470 + (process.pid % 400);
const BASE = `http://127.0.0.1:${PORT}`;
const PYTHON = process.env.TESSIM_PYTHON ?? "python3";

let server: ChildProcess;
let serverLog = "";

async function serverUp(): Promise<boolean> {
  try {
    const r = await fetch(`${BASE}/sessions/probe`);
    return r.status === 404;
  } catch {
    return false;
  }
}

beforeAll(async () => {
  server = spawn(
    PYTHON,
    ["-m", "tessim.cli", "serve", "--listen", `127.0.0.1:${PORT}`],
    { cwd: "..", stdio: ["ignore", "pipe", "pipe"] },
  );
  server.stdout?.on("data", (chunk) => (serverLog += chunk));
  server.stderr?.on("data", (chunk) => (serverLog += chunk));
  for (let tries = 0; tries < 100; tries++) {
    if (await serverUp()) return;
    if (server.exitCode !== null) break;
    await new Promise((resolve) => setTimeout(resolve, 100));
  }
  throw new Error(`control service failed to start on ${BASE}\n${serverLog}`);
}, 20_000);

afterAll(() => {
  server?.kill("SIGINT");
});

const BURST_PRESCRIPTION = {
  stim: {
    mode: "ces",
    intensity_mA: 0.2,
    dose_s: 6.0,
    ramp_rate_mA_per_min: 60.0,
    freq_lo_Hz: 100,
    freq_hi_Hz: 100,
    duty_pct: 50,
    pattern: "burst",
    burst_freq_Hz: 2.0,
    chain_count: 3,
    sham: true,
    seed: 5,
  },
};

interface Collected {
  view: ConsoleSessionView;
  frames: BlindedFrame[];
  rawLines: string[];
  done: Promise<void>;
}

function collect(api: ConsoleApi, id: string): Collected {
  const view = new ConsoleSessionView();
  const frames: BlindedFrame[] = [];
  const rawLines: string[] = [];
  const done = (async () => {
    // raw byte audit runs on a second subscription to the same stream
    const rawResponse = await fetch(`${BASE}/sessions/${id}/telemetry?channel=blinded`);
    const rawPump = (async () => {
      const reader = rawResponse.body!.getReader();
      const decoder = new TextDecoder();
      let buffer = "";
      for (;;) {
        const { done: finished, value } = await reader.read();
        if (finished) break;
        buffer += decoder.decode(value, { stream: true });
        let idx;
        while ((idx = buffer.indexOf("\n")) >= 0) {
          const line = buffer.slice(0, idx).trim();
          buffer = buffer.slice(idx + 1);
          if (line) rawLines.push(line);
        }
      }
    })();
    view.setConnection("live");
    for await (const frame of api.streamTelemetry(id)) {
      view.applyFrame(frame);
      frames.push(frame);
    }
    view.setConnection("closed");
    await rawPump;
  })();
  return { view, frames, rawLines, done };
}

async function frameCountWhen<T>(collected: Collected, action: () => Promise<T>):
    Promise<{ result: T; at: number }> {
  const result = await action();
  return { result, at: collected.frames.length };
}

function statesAfter(collected: Collected, index: number, count: number):
    string[] {
  return collected.frames.slice(index, index + count).map((f) => f.state);
}

async function waitForFrames(collected: Collected, index: number,
                             count: number): Promise<void> {
  for (let tries = 0; tries < 200; tries++) {
    if (collected.frames.length >= index + count) return;
    await new Promise((resolve) => setTimeout(resolve, 25));
  }
  throw new Error(`frames ${index}+${count} never arrived`);
}

describe("console end-to-end against the live service", () => {
  it("runs create -> start -> adjust -> abort with a ramped shutdown",
     async () => {
    const api = new ConsoleApi(BASE);
    const created = await api.createSession(BURST_PRESCRIPTION);
    expect(created.state).toBe("armed");
    expect(created.params.burst?.chain_count).toBe(3);

    const collected = collect(api, created.id);
    collected.view.applyResource(created);

    // start: the chart must reflect warm-up within 2 published frames
    const start = await frameCountWhen(collected, () => api.start(created.id));
    expect(start.result.state).toBe("warmup");
    await waitForFrames(collected, start.at, 2);
    expect(statesAfter(collected, start.at, 2)).toContain("warmup");

    // wait into the dose, then retarget the plateau
    for (let tries = 0; tries < 200 &&
         collected.view.currentState() !== "dose"; tries++) {
      await new Promise((resolve) => setTimeout(resolve, 50));
    }
    expect(collected.view.currentState()).toBe("dose");
    expect(collected.view.canAdjustIntensity()).toBe(true);
    const adjusted = await api.setIntensity(created.id, 0.3);
    expect(adjusted.state).toBe("dose");

    // let the glide run briefly, then abort
    await new Promise((resolve) => setTimeout(resolve, 700));
    const abort = await frameCountWhen(collected, () => api.abort(created.id));
    expect(["cooldown", "aborted"]).toContain(abort.result.state);
    await waitForFrames(collected, abort.at, 2);
    expect(statesAfter(collected, abort.at, 2)).toContain("cooldown");

    await collected.done;
    const finalStates = collected.frames.map((f) => f.state);
    expect(finalStates[finalStates.length - 1]).toBe("aborted");

    // abort is a ramp, never a step: bucket the post-abort display into
    // 0.5 s windows (one burst period); the per-window level must fall
    // monotonically and never by more than the ramp allows per window
    const post = collected.frames.slice(abort.at);
    const buckets = new Map<number, number>();
    for (const frame of post) {
      const bucket = Math.floor(frame.t_ms / 500);
      buckets.set(bucket,
                  Math.max(buckets.get(bucket) ?? 0, frame.displayed_mA));
    }
    // drop the partial first/last windows: they can miss their chain
    const levels = [...buckets.entries()]
      .sort((a, b) => a[0] - b[0])
      .map(([, level]) => level)
      .slice(1, -1);
    expect(levels.length).toBeGreaterThan(2);
    const perWindowBudget = (4.0 / 60.0) * 0.5 + 0.1 + 1e-9;
    for (let k = 1; k < levels.length; k++) {
      expect(levels[k]).toBeLessThanOrEqual(levels[k - 1] + 1e-9);
      expect(levels[k - 1] - levels[k]).toBeLessThanOrEqual(perWindowBudget);
    }
    // the session ends fully silent
    expect(post[post.length - 1].displayed_mA).toBe(0);

    // burst structure is visible on the chart: dose-phase frames carry
    // both ON and OFF samples
    const doseFrames = collected.frames.filter((f) => f.state === "dose");
    expect(doseFrames.some((f) => f.displayed_mA > 0)).toBe(true);
    expect(doseFrames.some((f) => f.displayed_mA === 0)).toBe(true);
    const model = chartModel(collected.view);
    expect(model.phases.map((p) => p.state)).toContain("cooldown");

    // live blinding audit: raw payload bytes never mention the secrets
    expect(collected.rawLines.length).toBeGreaterThan(5);
    for (const line of collected.rawLines) {
      expect(line).not.toMatch(/sham/);
      expect(line).not.toMatch(/actual/);
      expect(line).not.toMatch(/v_body/);
    }
  }, 60_000);

  it("surfaces single-output-stage conflicts as API errors", async () => {
    const api = new ConsoleApi(BASE);
    const a = await api.createSession(BURST_PRESCRIPTION);
    const b = await api.createSession(BURST_PRESCRIPTION);
    await api.start(a.id);
    try {
      await expect(api.start(b.id)).rejects.toMatchObject({ status: 409 });
    } finally {
      await api.abort(a.id);
      for (let tries = 0; tries < 200; tries++) {
        if ((await api.getSession(a.id)).state === "aborted") break;
        await new Promise((resolve) => setTimeout(resolve, 50));
      }
    }
  }, 20_000);

  it("returns the full violation list for a bad prescription", async () => {
    const api = new ConsoleApi(BASE);
    const bad = {
      stim: { ...BURST_PRESCRIPTION.stim, chain_count: 1, intensity_mA: 9.0 },
    };
    try {
      await api.createSession(bad);
      expect.unreachable("create should have failed");
    } catch (error) {
      const apiError = error as ApiError;
      expect(apiError.status).toBe(422);
      const fields = apiError.violations.map((v) => v.field);
      expect(fields).toContain("burst.chain_count");
      expect(fields).toContain("intensity_mA");
    }
  }, 20_000);
});
