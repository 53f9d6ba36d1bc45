/**
 * Client-side mirror of the service's prescription limits.
 *
 * Same rules, same messages in spirit: intensity on the 0.1 mA lattice
 * between 0.1 and 4.0, frequency range inside 0.5..1000 Hz, duty
 * 10..90 %, burst frequency 1..20 Hz with 2..15 chained pulses, a burst
 * period at least twice the longest pulse period and long enough to hold
 * the chain. The server remains the authority; this just catches typos
 * before a round trip.
 */

export interface FieldIssue {
  field: string;
  message: string;
}

export interface PrescriptionDraft {
  mode: string;
  intensity_mA: number;
  dose_s: number;
  ramp_rate_mA_per_min: number;
  freq_lo_Hz: number;
  freq_hi_Hz: number;
  duty_pct: number;
  pattern: string;
  burst_freq_Hz: number;
  chain_count: number;
  sham: boolean;
  seed: number;
}

export const INTENSITY_MIN = 0.1;
export const INTENSITY_MAX = 4.0;
export const INTENSITY_STEP = 0.1;
export const FREQ_MIN = 0.5;
export const FREQ_MAX = 1000;
export const DUTY_MIN = 10;
export const DUTY_MAX = 90;
export const BURST_FREQ_MIN = 1;
export const BURST_FREQ_MAX = 20;
export const CHAIN_MIN = 2;
export const CHAIN_MAX = 15;

/** Snap a slider/stepper value onto the 0.1 mA lattice, clamped in range. */
export function snapIntensity(value: number): number {
  const snapped = Math.round(value / INTENSITY_STEP) * INTENSITY_STEP;
  const clamped = Math.min(INTENSITY_MAX, Math.max(INTENSITY_MIN, snapped));
  return Math.round(clamped * 10) / 10;
}

export function onIntensityLattice(value: number): boolean {
  return (
    value >= INTENSITY_MIN - 1e-9 &&
    value <= INTENSITY_MAX + 1e-9 &&
    Math.abs(value - Math.round(value * 10) / 10) <= 1e-9
  );
}

export function validateDraft(p: PrescriptionDraft): FieldIssue[] {
  const issues: FieldIssue[] = [];
  const bad = (field: string, message: string) => issues.push({ field, message });

  if (!onIntensityLattice(p.intensity_mA)) {
    bad("intensity_mA",
        `must be ${INTENSITY_MIN} to ${INTENSITY_MAX} mA in ${INTENSITY_STEP} mA steps`);
  }
  if (!(p.dose_s > 0)) bad("dose_s", "dose duration must be positive");
  if (!(p.ramp_rate_mA_per_min > 0)) {
    bad("ramp_rate_mA_per_min", "ramp rate must be positive");
  }
  if (!(p.seed >= 0 && Number.isInteger(p.seed))) {
    bad("seed", "seed must be a non-negative integer");
  }

  if (p.mode === "met" || p.mode === "trns") return issues; // fixed internals

  if (!(p.freq_lo_Hz >= FREQ_MIN && p.freq_lo_Hz <= FREQ_MAX)) {
    bad("freq_lo_Hz", `must be within ${FREQ_MIN} to ${FREQ_MAX} Hz`);
  }
  if (!(p.freq_hi_Hz >= FREQ_MIN && p.freq_hi_Hz <= FREQ_MAX)) {
    bad("freq_hi_Hz", `must be within ${FREQ_MIN} to ${FREQ_MAX} Hz`);
  }
  if (p.freq_lo_Hz > p.freq_hi_Hz) {
    bad("freq_lo_Hz", "lower bound exceeds upper bound");
  }
  if (!(p.duty_pct >= DUTY_MIN && p.duty_pct <= DUTY_MAX)) {
    bad("duty_pct", `must be within ${DUTY_MIN} to ${DUTY_MAX} %`);
  }

  if (p.mode === "ces" && p.pattern === "burst") {
    if (!(p.burst_freq_Hz >= BURST_FREQ_MIN && p.burst_freq_Hz <= BURST_FREQ_MAX)) {
      bad("burst_freq_Hz",
          `must be within ${BURST_FREQ_MIN} to ${BURST_FREQ_MAX} Hz`);
    }
    if (!(Number.isInteger(p.chain_count) &&
          p.chain_count >= CHAIN_MIN && p.chain_count <= CHAIN_MAX)) {
      bad("chain_count",
          `pulse chain count must be greater than unity, at most ${CHAIN_MAX}`);
    }
    if (p.burst_freq_Hz > 0 && p.freq_lo_Hz >= FREQ_MIN) {
      const burstPeriod = 1 / p.burst_freq_Hz;
      const maxPulsePeriod = 1 / p.freq_lo_Hz;
      if (burstPeriod < 2 * maxPulsePeriod) {
        bad("burst_freq_Hz",
            "burst period must be at least twice the longest pulse period");
      }
      if (p.chain_count >= CHAIN_MIN && p.chain_count * maxPulsePeriod > burstPeriod) {
        bad("chain_count", "pulse chain does not fit inside the burst period");
      }
    }
  }
  return issues;
}

/** Create-session request body for a valid draft. */
export function toCreateBody(p: PrescriptionDraft): { stim: Record<string, unknown> } {
  const stim: Record<string, unknown> = {
    mode: p.mode,
    intensity_mA: p.intensity_mA,
    dose_s: p.dose_s,
    ramp_rate_mA_per_min: p.ramp_rate_mA_per_min,
    sham: p.sham,
    seed: p.seed,
  };
  if (p.mode !== "met" && p.mode !== "trns") {
    stim["freq_lo_Hz"] = p.freq_lo_Hz;
    stim["freq_hi_Hz"] = p.freq_hi_Hz;
    stim["duty_pct"] = p.duty_pct;
  }
  if (p.mode === "ces") {
    stim["pattern"] = p.pattern;
    if (p.pattern === "burst") {
      stim["burst_freq_Hz"] = p.burst_freq_Hz;
      stim["chain_count"] = p.chain_count;
    }
  }
  return { stim };
}
