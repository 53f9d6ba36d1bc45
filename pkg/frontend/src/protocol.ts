/**
 * Wire types for the control service (see docs/protocol.md).
 *
 * The console is blinded by construction: the frame type it consumes has
 * no field for the delivered current or the sham flag, and the parser
 * below copies only the known blinded keys, so nothing else can reach
 * view or chart state regardless of what arrives on the wire.
 */

export type SessionStateName =
  | "idle"
  | "armed"
  | "warmup"
  | "dose"
  | "cooldown"
  | "done"
  | "aborted";

export const RUNNING_STATES: readonly SessionStateName[] = [
  "warmup",
  "dose",
  "cooldown",
];

export interface BlindedFrame {
  t_ms: number;
  state: SessionStateName;
  displayed_mA: number;
  compliant: boolean;
  dropped: number;
}

export interface BurstParams {
  burst_freq_Hz: number;
  chain_count: number;
}

export interface SessionParams {
  mode: string;
  intensity_mA: number;
  dose_s: number;
  ramp_rate_mA_per_min: number;
  freq_lo_Hz: number;
  freq_hi_Hz: number;
  duty_pct: number;
  pattern: string;
  seed: number;
  burst?: BurstParams;
}

export interface SessionResource {
  id: string;
  state: SessionStateName;
  created_at: string;
  params: SessionParams;
}

export interface Violation {
  field: string;
  value: unknown;
  message: string;
}

const STATE_NAMES: readonly string[] = [
  "idle", "armed", "warmup", "dose", "cooldown", "done", "aborted",
];

function asNumber(value: unknown, name: string): number {
  if (typeof value !== "number" || !Number.isFinite(value)) {
    throw new Error(`frame field ${name} is not a finite number`);
  }
  return value;
}

/** Strict projection onto the blinded frame shape; extra keys are dropped. */
export function parseBlindedFrame(raw: unknown): BlindedFrame {
  if (typeof raw !== "object" || raw === null) {
    throw new Error("frame is not an object");
  }
  const record = raw as Record<string, unknown>;
  const state = record["state"];
  if (typeof state !== "string" || !STATE_NAMES.includes(state)) {
    throw new Error(`unknown session state ${String(state)}`);
  }
  return {
    t_ms: asNumber(record["t_ms"], "t_ms"),
    state: state as SessionStateName,
    displayed_mA: asNumber(record["displayed_mA"], "displayed_mA"),
    compliant: record["compliant"] === true,
    dropped: typeof record["dropped"] === "number" ? record["dropped"] : 0,
  };
}

/** Resource projection; params are copied field by field (no sham). */
export function parseResource(raw: unknown): SessionResource {
  if (typeof raw !== "object" || raw === null) {
    throw new Error("resource is not an object");
  }
  const record = raw as Record<string, unknown>;
  const params = (record["params"] ?? {}) as Record<string, unknown>;
  const resource: SessionResource = {
    id: String(record["id"] ?? ""),
    state: record["state"] as SessionStateName,
    created_at: String(record["created_at"] ?? ""),
    params: {
      mode: String(params["mode"] ?? ""),
      intensity_mA: asNumber(params["intensity_mA"], "intensity_mA"),
      dose_s: asNumber(params["dose_s"], "dose_s"),
      ramp_rate_mA_per_min: asNumber(
        params["ramp_rate_mA_per_min"], "ramp_rate_mA_per_min"),
      freq_lo_Hz: asNumber(params["freq_lo_Hz"], "freq_lo_Hz"),
      freq_hi_Hz: asNumber(params["freq_hi_Hz"], "freq_hi_Hz"),
      duty_pct: asNumber(params["duty_pct"], "duty_pct"),
      pattern: String(params["pattern"] ?? ""),
      seed: asNumber(params["seed"] ?? 0, "seed"),
    },
  };
  const burst = params["burst"] as Record<string, unknown> | undefined;
  if (burst) {
    resource.params.burst = {
      burst_freq_Hz: asNumber(burst["burst_freq_Hz"], "burst_freq_Hz"),
      chain_count: asNumber(burst["chain_count"], "chain_count"),
    };
  }
  return resource;
}
