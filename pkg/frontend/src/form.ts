/** Prescription form model: raw inputs -> draft -> issues / request body. */

import {
  FieldIssue,
  PrescriptionDraft,
  snapIntensity,
  validateDraft,
} from "./validate.js";
import { Violation } from "./protocol.js";

export interface RawFormValues {
  mode: string;
  intensity_mA: string;
  dose_s: string;
  ramp_rate_mA_per_min: string;
  freq_lo_Hz: string;
  freq_hi_Hz: string;
  duty_pct: string;
  pattern: string;
  burst_freq_Hz: string;
  chain_count: string;
  sham: boolean;
  seed: string;
}

export const FORM_DEFAULTS: RawFormValues = {
  mode: "tdcs",
  intensity_mA: "1.0",
  dose_s: "600",
  ramp_rate_mA_per_min: "1.0",
  freq_lo_Hz: "100",
  freq_hi_Hz: "100",
  duty_pct: "50",
  pattern: "continuous",
  burst_freq_Hz: "2",
  chain_count: "3",
  sham: false,
  seed: "0",
};

function parseNumber(text: string, field: string, issues: FieldIssue[]): number {
  const value = Number(text);
  if (text.trim() === "" || !Number.isFinite(value)) {
    issues.push({ field, message: "not a number" });
    return NaN;
  }
  return value;
}

export function draftFromRaw(
  raw: RawFormValues,
): { draft: PrescriptionDraft; issues: FieldIssue[] } {
  const issues: FieldIssue[] = [];
  const draft: PrescriptionDraft = {
    mode: raw.mode,
    intensity_mA: parseNumber(raw.intensity_mA, "intensity_mA", issues),
    dose_s: parseNumber(raw.dose_s, "dose_s", issues),
    ramp_rate_mA_per_min: parseNumber(
      raw.ramp_rate_mA_per_min, "ramp_rate_mA_per_min", issues),
    freq_lo_Hz: parseNumber(raw.freq_lo_Hz, "freq_lo_Hz", issues),
    freq_hi_Hz: parseNumber(raw.freq_hi_Hz, "freq_hi_Hz", issues),
    duty_pct: parseNumber(raw.duty_pct, "duty_pct", issues),
    pattern: raw.pattern,
    burst_freq_Hz: parseNumber(raw.burst_freq_Hz, "burst_freq_Hz", issues),
    chain_count: parseNumber(raw.chain_count, "chain_count", issues),
    sham: raw.sham,
    seed: parseNumber(raw.seed, "seed", issues),
  };
  if (issues.length === 0) issues.push(...validateDraft(draft));
  return { draft, issues };
}

/** Server violation fields map onto form fields ("burst.x" -> "x"). */
export function violationsToIssues(violations: Violation[]): FieldIssue[] {
  return violations.map((violation) => ({
    field: violation.field.replace(/^burst\./, ""),
    message: violation.message,
  }));
}

/** Snap helper for the intensity input's change handler. */
export function snappedIntensityText(text: string): string {
  const value = Number(text);
  if (!Number.isFinite(value)) return text;
  return snapIntensity(value).toFixed(1);
}
