/**
 * Adapter for a TimesFM model served from a model endpoint. TimesFM
 * produces point forecasts directly, so no sample aggregation happens
 * here. The context length and the low-frequency indicator below are
 * this adapter's own documented defaults for annual data, forwarded
 * verbatim to the endpoint.
 */
import { EndpointClient, EndpointForecast } from "./endpoint.js";
import type { ForecastOutcome, ForecastRequest, Forecaster } from "./protocol.js";

export const DEFAULT_TIMESFM_MODEL = "timesfm-1.0-200m";
// Annual series in this corpus are at most ~120 points.
export const DEFAULT_TIMESFM_CONTEXT = 64;
// Frequency category 2 = low frequency (yearly and below).
export const DEFAULT_TIMESFM_FREQ = 2;

export interface TimesFmConfig {
  endpoint: string;
  model: string;
  context: number;
  freq: number;
  timeoutMs: number;
}

function checkValues(
  forecast: EndpointForecast,
  horizon: number
): number[] | null {
  const values = forecast.values;
  if (
    !Array.isArray(values) ||
    values.length !== horizon ||
    !values.every((v) => typeof v === "number" && Number.isFinite(v))
  ) {
    return null;
  }
  return values;
}

export class TimesFmForecaster implements Forecaster {
  readonly name = "timesfm";
  readonly supportsTraining = false;
  // Point forecasts from fixed weights; no sampling involved.
  readonly deterministic = true;
  private readonly client: EndpointClient;

  constructor(private readonly config: TimesFmConfig) {
    this.client = new EndpointClient(config.endpoint, config.timeoutMs);
  }

  async load(): Promise<void> {
    await this.client.checkModel(this.config.model);
  }

  async forecastBatch(batch: ForecastRequest[]): Promise<ForecastOutcome[]> {
    let forecasts: EndpointForecast[];
    try {
      forecasts = await this.client.forecast({
        model: this.config.model,
        series: batch.map((req) => ({
          values: req.values.slice(-this.config.context),
          horizon: req.horizon,
          start_year: req.startYear,
        })),
        freq: this.config.freq,
      });
    } catch (err) {
      const message = err instanceof Error ? err.message : String(err);
      return batch.map((req) => ({ id: req.id, error: message }));
    }
    return batch.map((req, i) => {
      const values = checkValues(forecasts[i], req.horizon);
      if (values === null) {
        return {
          id: req.id,
          error: `endpoint returned malformed values for horizon ${req.horizon}`,
        };
      }
      return { id: req.id, values };
    });
  }
}
