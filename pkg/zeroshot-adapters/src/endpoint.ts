/**
 * Client for the model-serving endpoint that hosts the foundation
 * models. The endpoint contract, shared by every remote adapter:
 *
 *   GET  /v1/models/{model}
 *     200 once the model is loaded and ready; anything else is a load
 *     failure.
 *   POST /v1/forecast
 *     {model, series: [{values, horizon, start_year}, ...],
 *      num_samples?, seed?, freq?, tag?}
 *     -> {forecasts: [{samples: [[...], ...]} or {values: [...]}, ...]}
 *     one entry per series in order; sampling models return `samples`
 *     (num_samples trajectories of length horizon), point-forecast
 *     models return `values` (length horizon).
 *   POST /v1/finetune
 *     {model, dataset, params} -> {tag}
 *     `dataset` is the raw text of the exported training-pool CSV; the
 *     returned tag selects the tuned weights in later forecasts.
 */

export interface SeriesRequest {
  values: number[];
  horizon: number;
  start_year: number;
}

export interface ForecastRequestBody {
  model: string;
  series: SeriesRequest[];
  num_samples?: number;
  seed?: number;
  freq?: number;
  tag?: string;
}

export interface EndpointForecast {
  samples?: number[][];
  values?: number[];
}

export class EndpointError extends Error {}

export class EndpointClient {
  constructor(
    private readonly base: string,
    private readonly timeoutMs: number
  ) {}

  private async request(path: string, init?: RequestInit): Promise<unknown> {
    const url = `${this.base.replace(/\/+$/, "")}${path}`;
    let response: Response;
    try {
      response = await fetch(url, {
        ...init,
        signal: AbortSignal.timeout(this.timeoutMs),
      });
    } catch (err) {
      throw new EndpointError(
        `endpoint unreachable at ${url}: ${err instanceof Error ? err.message : err}`
      );
    }
    if (!response.ok) {
      const body = (await response.text()).slice(0, 200);
      throw new EndpointError(`HTTP ${response.status} from ${url}: ${body}`);
    }
    try {
      return await response.json();
    } catch (err) {
      throw new EndpointError(`non-JSON response from ${url}`);
    }
  }

  /** Resolves once the model is loaded; throws on any failure. */
  async checkModel(model: string): Promise<void> {
    await this.request(`/v1/models/${encodeURIComponent(model)}`);
  }

  async forecast(body: ForecastRequestBody): Promise<EndpointForecast[]> {
    const raw = (await this.request("/v1/forecast", {
      method: "POST",
      headers: { "content-type": "application/json" },
      body: JSON.stringify(body),
    })) as { forecasts?: unknown };
    if (!Array.isArray(raw.forecasts) || raw.forecasts.length !== body.series.length) {
      throw new EndpointError(
        `endpoint returned ${Array.isArray(raw.forecasts) ? raw.forecasts.length : "no"} forecasts for ${body.series.length} series`
      );
    }
    return raw.forecasts as EndpointForecast[];
  }

  async finetune(
    model: string,
    dataset: string,
    params: Record<string, unknown>
  ): Promise<string> {
    const raw = (await this.request("/v1/finetune", {
      method: "POST",
      headers: { "content-type": "application/json" },
      body: JSON.stringify({ model, dataset, params }),
    })) as { tag?: unknown };
    if (typeof raw.tag !== "string" || raw.tag === "") {
      throw new EndpointError("fine-tune response carries no model tag");
    }
    return raw.tag;
  }
}
