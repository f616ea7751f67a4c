/**
 * Trainable recurrent baseline: one 50-unit LSTM layer with a 1-unit
 * dense head, trained on min-max-scaled log rates from the exported
 * global pool (16-step input windows, next rate as target). Forecasts
 * are recursive: each one-step prediction re-enters the input window.
 *
 * Training is deterministic: initializers are seeded, fitting does not
 * shuffle, and the CPU backend is single-threaded, so equal pool and
 * parameters reproduce the same weights and the same model tag.
 */
import * as crypto from "node:crypto";
import * as fs from "node:fs/promises";

import * as tf from "@tensorflow/tfjs";

import type { ForecastOutcome, ForecastRequest, Forecaster } from "./protocol.js";
import { TrainingPool, readPool } from "./pool.js";
import { ScalingStats, fitScaling, scaleRate, unscaleRate } from "./scaling.js";

export const LSTM_UNITS = 50;
export const DEFAULT_EPOCHS = 100;
export const DEFAULT_BATCH_SIZE = 512;
export const DEFAULT_SEED = 0;

export interface LstmConfig {
  epochs: number;
  batchSize: number;
  seed: number;
  /** Weight cache: loaded at startup when present, saved after training. */
  artifactPath?: string;
}

export interface TrainedLstm {
  model: tf.LayersModel;
  stats: ScalingStats;
  window: number;
  tag: string;
}

export function buildModel(window: number, seed: number): tf.LayersModel {
  const model = tf.sequential();
  model.add(
    tf.layers.lstm({
      units: LSTM_UNITS,
      inputShape: [window, 1],
      kernelInitializer: tf.initializers.glorotUniform({ seed }),
      recurrentInitializer: tf.initializers.orthogonal({ gain: 1, seed: seed + 1 }),
    })
  );
  model.add(
    tf.layers.dense({
      units: 1,
      kernelInitializer: tf.initializers.glorotUniform({ seed: seed + 2 }),
    })
  );
  model.compile({ optimizer: tf.train.adam(), loss: "meanSquaredError" });
  return model;
}

function* poolValues(pool: TrainingPool): Generator<number> {
  for (const w of pool.windows) {
    yield* w.inputs;
    yield w.target;
  }
}

async function captureArtifacts(model: tf.LayersModel): Promise<tf.io.ModelArtifacts> {
  let captured: tf.io.ModelArtifacts | undefined;
  await model.save(
    tf.io.withSaveHandler(async (artifacts) => {
      captured = artifacts;
      return {
        modelArtifactsInfo: {
          dateSaved: new Date(),
          modelTopologyType: "JSON",
        },
      };
    })
  );
  if (captured === undefined) {
    throw new Error("model save produced no artifacts");
  }
  return captured;
}

function weightBuffer(data: tf.io.ModelArtifacts["weightData"]): Buffer {
  if (data === undefined) {
    throw new Error("model artifacts carry no weight data");
  }
  const parts = Array.isArray(data) ? data : [data];
  return Buffer.concat(parts.map((p) => Buffer.from(p)));
}

function artifactTag(weights: Buffer, stats: ScalingStats, window: number): string {
  const digest = crypto
    .createHash("sha256")
    .update(weights)
    .update(JSON.stringify({ window, ...stats }))
    .digest("hex");
  return `lstm-${digest.slice(0, 16)}`;
}

interface ArtifactFile {
  window: number;
  scaling: ScalingStats;
  tag: string;
  topology: unknown;
  weightSpecs: unknown;
  weightsB64: string;
}

export async function saveArtifact(state: TrainedLstm, path: string): Promise<void> {
  const artifacts = await captureArtifacts(state.model);
  const weights = weightBuffer(artifacts.weightData);
  const file: ArtifactFile = {
    window: state.window,
    scaling: state.stats,
    tag: state.tag,
    topology: artifacts.modelTopology,
    weightSpecs: artifacts.weightSpecs,
    weightsB64: weights.toString("base64"),
  };
  await fs.writeFile(path, JSON.stringify(file));
}

export async function loadArtifact(path: string): Promise<TrainedLstm> {
  const raw = JSON.parse(await fs.readFile(path, "utf8")) as ArtifactFile;
  const weights = Buffer.from(raw.weightsB64, "base64");
  const weightData = weights.buffer.slice(
    weights.byteOffset,
    weights.byteOffset + weights.byteLength
  );
  const model = await tf.loadLayersModel(
    tf.io.fromMemory({
      modelTopology: raw.topology as object,
      weightSpecs: raw.weightSpecs as tf.io.WeightsManifestEntry[],
      weightData,
    })
  );
  return {
    model,
    stats: raw.scaling,
    window: raw.window,
    tag: artifactTag(weights, raw.scaling, raw.window),
  };
}

export interface TrainParams {
  epochs: number;
  batchSize: number;
  seed: number;
}

export async function trainLstm(
  pool: TrainingPool,
  params: TrainParams
): Promise<TrainedLstm> {
  const stats = fitScaling(poolValues(pool));
  const n = pool.windows.length;
  const window = pool.windowLength;
  const x = new Float32Array(n * window);
  const y = new Float32Array(n);
  pool.windows.forEach((w, i) => {
    w.inputs.forEach((v, j) => {
      x[i * window + j] = scaleRate(v, stats);
    });
    y[i] = scaleRate(w.target, stats);
  });
  const xs = tf.tensor3d(x, [n, window, 1]);
  const ys = tf.tensor2d(y, [n, 1]);
  const model = buildModel(window, params.seed);
  try {
    await model.fit(xs, ys, {
      epochs: params.epochs,
      batchSize: params.batchSize,
      shuffle: false,
      verbose: 0,
      callbacks: {
        onEpochEnd: async (epoch, logs) => {
          if ((epoch + 1) % 10 === 0 || epoch + 1 === params.epochs) {
            process.stderr.write(
              `lstm: epoch ${epoch + 1}/${params.epochs} loss=${logs?.loss}\n`
            );
          }
        },
      },
    });
  } finally {
    xs.dispose();
    ys.dispose();
  }
  const artifacts = await captureArtifacts(model);
  const weights = weightBuffer(artifacts.weightData);
  return { model, stats, window, tag: artifactTag(weights, stats, window) };
}

function intParam(
  params: Record<string, unknown>,
  key: string,
  fallback: number,
  min: number
): number {
  const raw = params[key];
  if (raw === undefined || raw === null) {
    return fallback;
  }
  if (typeof raw !== "number" || !Number.isInteger(raw) || raw < min) {
    throw new Error(`train parameter ${key} must be an integer >= ${min}`);
  }
  return raw;
}

export class LstmForecaster implements Forecaster {
  readonly name = "lstm";
  readonly supportsTraining = true;
  readonly deterministic = true;
  private state: TrainedLstm | null = null;

  constructor(private readonly config: LstmConfig) {}

  async load(): Promise<void> {
    const path = this.config.artifactPath;
    if (path === undefined) {
      return;
    }
    try {
      await fs.access(path);
    } catch {
      return; // no cache yet; training will create it
    }
    this.state = await loadArtifact(path);
    process.stderr.write(`lstm: loaded artifact ${this.state.tag} from ${path}\n`);
  }

  async forecastBatch(batch: ForecastRequest[]): Promise<ForecastOutcome[]> {
    const state = this.state;
    if (state === null) {
      return batch.map((req) => ({
        id: req.id,
        error: "model not trained; send a train request or provide an artifact",
      }));
    }
    const outcomes: ForecastOutcome[] = [];
    const jobs: { req: ForecastRequest; context: number[] }[] = [];
    for (const req of batch) {
      if (req.tag !== undefined && req.tag !== state.tag) {
        outcomes.push({
          id: req.id,
          error: `unknown model tag ${req.tag}; current is ${state.tag}`,
        });
        continue;
      }
      if (req.values.length < state.window) {
        outcomes.push({
          id: req.id,
          error: `series of ${req.values.length} is shorter than the ${state.window}-step input window`,
        });
        continue;
      }
      const context = req.values
        .slice(-state.window)
        .map((v) => scaleRate(v, state.stats));
      jobs.push({ req, context });
    }
    if (jobs.length > 0) {
      outcomes.push(...this.recurse(state, jobs));
    }
    return outcomes;
  }

  /** Batched recursive decoding: one predict call per step for all jobs. */
  private recurse(
    state: TrainedLstm,
    jobs: { req: ForecastRequest; context: number[] }[]
  ): ForecastOutcome[] {
    const window = state.window;
    const k = jobs.length;
    const preds: number[][] = jobs.map(() => []);
    const maxHorizon = Math.max(...jobs.map((j) => j.req.horizon));
    for (let step = 0; step < maxHorizon; step++) {
      const flat = new Float32Array(k * window);
      jobs.forEach((job, i) => {
        job.context.forEach((v, j) => {
          flat[i * window + j] = v;
        });
      });
      const out = tf.tidy(() => {
        const x = tf.tensor3d(flat, [k, window, 1]);
        return (state.model.predict(x) as tf.Tensor).dataSync();
      });
      jobs.forEach((job, i) => {
        if (preds[i].length < job.req.horizon) {
          preds[i].push(out[i]);
          job.context.shift();
          job.context.push(out[i]);
        }
      });
    }
    return jobs.map((job, i) => ({
      id: job.req.id,
      values: preds[i].map((u) => unscaleRate(u, state.stats)),
    }));
  }

  async train(path: string, params: Record<string, unknown>): Promise<string> {
    const pool = await readPool(path);
    this.state?.model.dispose();
    this.state = await trainLstm(pool, {
      epochs: intParam(params, "epochs", this.config.epochs, 1),
      batchSize: intParam(params, "batch_size", this.config.batchSize, 1),
      seed: intParam(params, "seed", this.config.seed, 0),
    });
    if (this.config.artifactPath !== undefined) {
      await saveArtifact(this.state, this.config.artifactPath);
    }
    return this.state.tag;
  }

  async close(): Promise<void> {
    this.state?.model.dispose();
    this.state = null;
  }
}
