/**
 * Adapters for the CHRONOS family served from a model endpoint. The
 * endpoint returns sampled trajectories; the point forecast reported
 * on the wire is the elementwise median across samples. The fine-tuned
 * variant additionally accepts train requests, uploading the exported
 * pool CSV and tagging later forecasts with the returned model tag.
 */
import * as fs from "node:fs/promises";

import { EndpointClient, EndpointForecast } from "./endpoint.js";
import type { ForecastOutcome, ForecastRequest, Forecaster } from "./protocol.js";

export const CHRONOS_SIZES = ["tiny", "small", "large"] as const;
export type ChronosSize = (typeof CHRONOS_SIZES)[number];

// Public checkpoint names for the 8M/46M/710M models.
export const CHRONOS_MODEL_IDS: Record<ChronosSize, string> = {
  tiny: "chronos-t5-tiny",
  small: "chronos-t5-small",
  large: "chronos-t5-large",
};

export const DEFAULT_NUM_SAMPLES = 20;
export const DEFAULT_CONTEXT = 512;

export interface ChronosConfig {
  endpoint: string;
  size: ChronosSize;
  /** Fine-tunable variant: advertises training and uploads the pool. */
  finetune: boolean;
  numSamples: number;
  /** Series are truncated to this many trailing observations. */
  context: number;
  /** Sampling seed forwarded to the endpoint; unset means stochastic. */
  seed?: number;
  timeoutMs: number;
}

/** Median of a non-empty array; even lengths average the middle pair. */
export function median(values: readonly number[]): number {
  const sorted = [...values].sort((a, b) => a - b);
  const mid = sorted.length >> 1;
  return sorted.length % 2 === 1
    ? sorted[mid]
    : (sorted[mid - 1] + sorted[mid]) / 2;
}

/** Elementwise median over sampled trajectories of equal length. */
export function medianTrajectory(samples: number[][], horizon: number): number[] {
  const out = new Array<number>(horizon);
  for (let t = 0; t < horizon; t++) {
    out[t] = median(samples.map((traj) => traj[t]));
  }
  return out;
}

function checkSamples(
  forecast: EndpointForecast,
  horizon: number
): number[][] | null {
  const samples = forecast.samples;
  if (!Array.isArray(samples) || samples.length === 0) {
    return null;
  }
  for (const traj of samples) {
    if (
      !Array.isArray(traj) ||
      traj.length !== horizon ||
      !traj.every((v) => typeof v === "number" && Number.isFinite(v))
    ) {
      return null;
    }
  }
  return samples;
}

export class ChronosForecaster implements Forecaster {
  readonly name: string;
  readonly supportsTraining: boolean;
  readonly deterministic: boolean;
  readonly model: string;
  private readonly client: EndpointClient;

  constructor(private readonly config: ChronosConfig) {
    this.model = CHRONOS_MODEL_IDS[config.size];
    this.name = `chronos-${config.size}${config.finetune ? "-ft" : ""}`;
    this.supportsTraining = config.finetune;
    // Sampling is reproducible only when the endpoint gets a seed.
    this.deterministic = config.seed !== undefined;
    this.client = new EndpointClient(config.endpoint, config.timeoutMs);
  }

  async load(): Promise<void> {
    await this.client.checkModel(this.model);
  }

  async forecastBatch(batch: ForecastRequest[]): Promise<ForecastOutcome[]> {
    // Frames keep their own tag; one upstream call per distinct tag.
    const groups = new Map<string | undefined, ForecastRequest[]>();
    for (const req of batch) {
      const group = groups.get(req.tag);
      if (group === undefined) {
        groups.set(req.tag, [req]);
      } else {
        group.push(req);
      }
    }
    const outcomes: ForecastOutcome[] = [];
    for (const [tag, group] of groups) {
      outcomes.push(...(await this.forecastGroup(group, tag)));
    }
    return outcomes;
  }

  private async forecastGroup(
    group: ForecastRequest[],
    tag: string | undefined
  ): Promise<ForecastOutcome[]> {
    let forecasts: EndpointForecast[];
    try {
      forecasts = await this.client.forecast({
        model: this.model,
        series: group.map((req) => ({
          values: req.values.slice(-this.config.context),
          horizon: req.horizon,
          start_year: req.startYear,
        })),
        num_samples: this.config.numSamples,
        seed: this.config.seed,
        tag,
      });
    } catch (err) {
      const message = err instanceof Error ? err.message : String(err);
      return group.map((req) => ({ id: req.id, error: message }));
    }
    return group.map((req, i) => {
      const samples = checkSamples(forecasts[i], req.horizon);
      if (samples === null) {
        return {
          id: req.id,
          error: `endpoint returned malformed samples for horizon ${req.horizon}`,
        };
      }
      return { id: req.id, values: medianTrajectory(samples, req.horizon) };
    });
  }

  async train(path: string, params: Record<string, unknown>): Promise<string> {
    const dataset = await fs.readFile(path, "utf8");
    return this.client.finetune(this.model, dataset, params);
  }
}
