/**
 * Preprocessing shared by the trainable baseline: rates are floored at
 * 1e-6, log-transformed, then min-max scaled with statistics computed
 * once over the whole training pool. The statistics ship with the
 * trained artifact so the inverse transform survives restarts.
 */

export const LOG_FLOOR = 1e-6;

export interface ScalingStats {
  /** Minimum of the pooled log rates. */
  min: number;
  /** Maximum of the pooled log rates. */
  max: number;
}

export function logRate(value: number): number {
  return Math.log(Math.max(value, LOG_FLOOR));
}

/** Fit min-max statistics over raw rates (log applied internally). */
export function fitScaling(values: Iterable<number>): ScalingStats {
  let min = Infinity;
  let max = -Infinity;
  for (const v of values) {
    const lv = logRate(v);
    if (lv < min) min = lv;
    if (lv > max) max = lv;
  }
  if (!Number.isFinite(min) || !Number.isFinite(max)) {
    throw new Error("cannot fit scaling on an empty value set");
  }
  return { min, max };
}

function span(stats: ScalingStats): number {
  // A constant pool has zero spread; map everything to 0 and back.
  return stats.max > stats.min ? stats.max - stats.min : 1;
}

/** Raw rate -> scaled log rate, roughly [0, 1] on pool-like data. */
export function scaleRate(value: number, stats: ScalingStats): number {
  return (logRate(value) - stats.min) / span(stats);
}

/** Scaled log rate -> raw rate; positive by construction. */
export function unscaleRate(scaled: number, stats: ScalingStats): number {
  return Math.exp(scaled * span(stats) + stats.min);
}
