/**
 * Session view state: a pure reducer over resources and blinded frames.
 *
 * The console never computes stimulation values; everything rendered
 * comes verbatim from service payloads held here. The frame ring keeps
 * the last 60 s at the 10 frames/s publish rate.
 */

import { BlindedFrame, SessionResource, SessionStateName } from "./protocol.js";
import { FrameRing } from "./ring.js";

export type ConnectionState = "idle" | "live" | "reconnecting" | "closed";

export const WINDOW_S = 60;
export const PUBLISH_HZ = 10;

const FINISHED: readonly SessionStateName[] = ["done", "aborted"];

export class ConsoleSessionView {
  resource: SessionResource | null = null;
  readonly frames = new FrameRing<BlindedFrame>(WINDOW_S * PUBLISH_HZ);
  connection: ConnectionState = "idle";
  droppedTotal = 0;

  applyResource(resource: SessionResource): void {
    this.resource = resource;
  }

  applyFrame(frame: BlindedFrame): void {
    if (this.frames.push(frame)) {
      this.droppedTotal = frame.dropped;
      if (this.resource && this.resource.state !== frame.state) {
        this.resource = { ...this.resource, state: frame.state };
      }
    }
  }

  setConnection(state: ConnectionState): void {
    this.connection = state;
  }

  currentState(): SessionStateName {
    const last = this.frames.last();
    if (last) return last.state;
    return this.resource?.state ?? "idle";
  }

  lastDisplayed_mA(): number {
    return this.frames.last()?.displayed_mA ?? 0;
  }

  isFinished(): boolean {
    return FINISHED.includes(this.currentState());
  }

  canStart(): boolean {
    return this.currentState() === "armed";
  }

  canAbort(): boolean {
    return ["armed", "warmup", "dose", "cooldown"].includes(this.currentState());
  }

  /** Intensity stepper is live only during the dose phase. */
  canAdjustIntensity(): boolean {
    return this.currentState() === "dose";
  }
}

/** Every string the session card shows, derived purely from the view. */
export function sessionCardStrings(view: ConsoleSessionView): Record<string, string> {
  return {
    id: view.resource?.id ?? "",
    state: view.currentState(),
    displayed: `${view.lastDisplayed_mA().toFixed(2)} mA`,
    connection: view.connection,
    dropped: String(view.droppedTotal),
  };
}

export interface PhaseSpan {
  state: SessionStateName;
  t0_ms: number;
  t1_ms: number;
}

export interface ChartModel {
  points: readonly BlindedFrame[];
  phases: PhaseSpan[];
  complianceMarks_ms: number[];
  t0_ms: number;
  t1_ms: number;
  yMax_mA: number;
}

/** Everything the strip chart draws, derived purely from buffered frames. */
export function chartModel(view: ConsoleSessionView): ChartModel {
  const points = view.frames.toArray();
  if (points.length === 0) {
    return { points, phases: [], complianceMarks_ms: [],
             t0_ms: 0, t1_ms: WINDOW_S * 1000, yMax_mA: 1 };
  }
  const phases: PhaseSpan[] = [];
  for (const frame of points) {
    const last = phases[phases.length - 1];
    if (!last || last.state !== frame.state) {
      if (last) last.t1_ms = frame.t_ms;
      phases.push({ state: frame.state, t0_ms: frame.t_ms, t1_ms: frame.t_ms });
    }
  }
  const tail = points[points.length - 1];
  phases[phases.length - 1].t1_ms = tail.t_ms;
  const marks = points.filter((f) => !f.compliant).map((f) => f.t_ms);
  const yMax = Math.max(0.5, ...points.map((f) => f.displayed_mA)) * 1.15;
  return {
    points,
    phases,
    complianceMarks_ms: marks,
    t0_ms: Math.max(points[0].t_ms, tail.t_ms - WINDOW_S * 1000),
    t1_ms: tail.t_ms,
    yMax_mA: yMax,
  };
}
