// Target-form logic. Slider groups are constrained to total exactly 100%:
// editing one slider renormalizes the rest proportionally, so the form can
// never submit an invalid distribution.

import { Metrics } from "./types.js";

export const LAND_USE_LABELS = [
  "Residential", "Commercial", "Industrial", "Park", "Mixed use",
] as const;

export const HEIGHT_LABELS = [
  "Low-story", "Medium-story", "High-story", "Open space",
] as const;

function roundTo(value: number, decimals: number): number {
  const f = 10 ** decimals;
  return Math.round(value * f) / f;
}

/**
 * Set `values[index] = newValue` (percent) and scale the other entries so the
 * group still totals 100. Returns a new array; inputs are not mutated.
 */
export function renormalize(values: number[], index: number, newValue: number,
                            decimals = 1): number[] {
  if (newValue < 0) throw new RangeError("percentages cannot be negative");
  const clamped = Math.min(100, newValue);
  const others = values.reduce((sum, v, i) => (i === index ? sum : sum + v), 0);
  const remaining = 100 - clamped;
  const out = values.map((v, i) => {
    if (i === index) return clamped;
    if (others <= 0) return remaining / (values.length - 1);
    return (v / others) * remaining;
  });
  // Round, then push the rounding residue into the largest "other" slot so
  // the printed total is exactly 100.
  const rounded = out.map((v) => roundTo(v, decimals));
  const total = rounded.reduce((a, b) => a + b, 0);
  const residue = roundTo(100 - total, decimals);
  if (residue !== 0) {
    let target = -1;
    let best = -1;
    for (let i = 0; i < rounded.length; i++) {
      if (i !== index && rounded[i] + residue >= 0 && rounded[i] > best) {
        best = rounded[i];
        target = i;
      }
    }
    if (target < 0) target = index;
    rounded[target] = roundTo(rounded[target] + residue, decimals);
  }
  return rounded;
}

export function groupTotal(values: number[]): number {
  return roundTo(values.reduce((a, b) => a + b, 0), 6);
}

export interface ValidationResult {
  ok: boolean;
  message?: string;
}

export function validatePercentGroup(values: number[]): ValidationResult {
  for (const v of values) {
    if (Number.isNaN(v)) return { ok: false, message: "not a number" };
    if (v < 0) return { ok: false, message: "negative percentage" };
    if (v > 100) return { ok: false, message: "over 100%" };
  }
  const total = groupTotal(values);
  if (Math.abs(total - 100) > 0.05) {
    return { ok: false, message: `group totals ${total}%, expected 100%` };
  }
  return { ok: true };
}

export function validateRoadDensity(percent: number): ValidationResult {
  if (Number.isNaN(percent)) return { ok: false, message: "not a number" };
  if (percent < 0) return { ok: false, message: "negative percentage" };
  if (percent > 100) return { ok: false, message: "over 100%" };
  return { ok: true };
}

/** Stage-1 form state (percent) -> service metrics (fractions). */
export function stage1Metrics(landUsePct: number[], roadPct: number): Metrics {
  return {
    road_density: roadPct / 100,
    land_use: landUsePct.map((v) => v / 100),
    height_coverage: [0, 0, 0],
    open_space: 1,
  };
}

/** Stage-2 form state [low, mid, high, open] (percent) -> service metrics. */
export function stage2Metrics(groupsPct: number[]): Metrics {
  const fractions = groupsPct.map((v) => v / 100);
  return {
    road_density: 0,
    land_use: [0, 0, 0, 0, 0],
    height_coverage: fractions.slice(0, 3),
    open_space: fractions[3],
  };
}

export function defaultStage1Form(): { landUse: number[]; road: number } {
  return { landUse: [60, 15, 5, 15, 5], road: 15 };
}

export function defaultStage2Form(): number[] {
  return [15, 10, 5, 70];
}
