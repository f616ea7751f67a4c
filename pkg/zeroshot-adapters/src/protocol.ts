/**
 * Adapter-side protocol loop over stdin/stdout.
 *
 * The adapter speaks first with a hello frame, the host replies with a
 * capabilities request, and afterwards forecast and train requests
 * arrive pipelined; responses match requests by id and may be written
 * in any order. Every line written to the output is a well-formed wire
 * frame; stderr carries free-form logging only.
 *
 * Forecast frames that arrive in one stdin burst are handed to the
 * forecaster as a single batch, so endpoint-backed models can answer a
 * pipelined batch with one upstream call.
 */
import * as readline from "node:readline";
import type { Readable, Writable } from "node:stream";

import {
  PROTOCOL_VERSION,
  WireFormatError,
  WireMessage,
  parseMessage,
  serializeMessage,
} from "./wire.js";

export interface ForecastRequest {
  id: string;
  startYear: number;
  values: number[];
  horizon: number;
  tag?: string;
}

export type ForecastOutcome =
  | { id: string; values: number[] }
  | { id: string; error: string };

export interface Forecaster {
  /** Self-identification sent in the hello frame. */
  name: string;
  supportsTraining: boolean;
  /** Declare only when repeated identical requests return identical values. */
  deterministic: boolean;
  /** Acquire model resources; a throw here aborts with exit code 1. */
  load?(): Promise<void>;
  /** One outcome per request; ids must match, order is free. */
  forecastBatch(batch: ForecastRequest[]): Promise<ForecastOutcome[]>;
  /** Train on an exported pool CSV; resolves to the model tag. */
  train?(path: string, params: Record<string, unknown>): Promise<string>;
  close?(): Promise<void>;
}

export interface ServeOptions {
  input?: Readable;
  output?: Writable;
}

function errorText(err: unknown): string {
  return err instanceof Error ? err.message : String(err);
}

class LineWriter {
  private last: Promise<void> = Promise.resolve();

  constructor(private readonly out: Writable) {}

  /** Serialize writes; resolves when the frame reaches the stream. */
  write(msg: WireMessage): Promise<void> {
    const line = serializeMessage(msg) + "\n";
    this.last = this.last.then(
      () =>
        new Promise<void>((resolve, reject) => {
          this.out.write(line, (err) => (err ? reject(err) : resolve()));
        })
    );
    return this.last;
  }
}

/**
 * Run the protocol loop until stdin closes; resolves to the process
 * exit code. A model-load failure emits one error frame and exits 1.
 */
export async function serve(
  forecaster: Forecaster,
  options: ServeOptions = {}
): Promise<number> {
  const input = options.input ?? process.stdin;
  const output = options.output ?? process.stdout;
  const writer = new LineWriter(output);

  if (forecaster.load) {
    try {
      await forecaster.load();
    } catch (err) {
      await writer.write({
        type: "error",
        message: `model load failed: ${errorText(err)}`,
      });
      return 1;
    }
  }

  await writer.write({
    type: "hello",
    name: forecaster.name,
    protocol: PROTOCOL_VERSION,
  });

  const rl = readline.createInterface({ input, crlfDelay: Infinity });

  let pending: ForecastRequest[] = [];
  let flushScheduled = false;
  const inflight = new Set<Promise<void>>();

  const flush = (): void => {
    flushScheduled = false;
    if (pending.length === 0) {
      return;
    }
    const batch = pending;
    pending = [];
    const job = forecaster
      .forecastBatch(batch)
      .then(async (outcomes) => {
        const byId = new Map(outcomes.map((o) => [o.id, o]));
        for (const req of batch) {
          const outcome = byId.get(req.id);
          if (outcome === undefined) {
            await writer.write({
              type: "error",
              id: req.id,
              message: "forecaster returned no outcome for this id",
            });
          } else if ("error" in outcome) {
            await writer.write({
              type: "error",
              id: req.id,
              message: outcome.error,
            });
          } else if (
            outcome.values.length !== req.horizon ||
            !outcome.values.every(Number.isFinite)
          ) {
            await writer.write({
              type: "error",
              id: req.id,
              message: `forecaster returned ${outcome.values.length} values, expected ${req.horizon} finite`,
            });
          } else {
            await writer.write({
              type: "forecast_result",
              id: req.id,
              values: outcome.values,
            });
          }
        }
      })
      .catch(async (err) => {
        for (const req of batch) {
          await writer.write({
            type: "error",
            id: req.id,
            message: errorText(err),
          });
        }
      });
    const tracked: Promise<void> = job.finally(() => inflight.delete(tracked));
    inflight.add(tracked);
  };

  const handleForecast = (msg: WireMessage): Promise<void> | void => {
    if (msg.id === undefined || msg.values === undefined || msg.horizon === undefined) {
      return writer.write({
        type: "error",
        id: msg.id,
        message: "forecast request needs id, values and horizon",
      });
    }
    if (msg.horizon < 1) {
      return writer.write({
        type: "error",
        id: msg.id,
        message: `horizon must be positive, got ${msg.horizon}`,
      });
    }
    pending.push({
      id: msg.id,
      startYear: msg.start_year ?? 0,
      values: msg.values,
      horizon: msg.horizon,
      tag: msg.tag,
    });
    if (!flushScheduled) {
      flushScheduled = true;
      setImmediate(flush);
    }
  };

  const handleTrain = async (msg: WireMessage): Promise<void> => {
    if (msg.id === undefined) {
      await writer.write({ type: "error", message: "train request needs id" });
      return;
    }
    if (!forecaster.supportsTraining || forecaster.train === undefined) {
      await writer.write({
        type: "error",
        id: msg.id,
        message: `${forecaster.name} does not support training`,
      });
      return;
    }
    if (msg.path === undefined) {
      await writer.write({
        type: "error",
        id: msg.id,
        message: "train request needs path",
      });
      return;
    }
    try {
      const tag = await forecaster.train(msg.path, msg.params ?? {});
      await writer.write({ type: "train_result", id: msg.id, tag });
    } catch (err) {
      await writer.write({
        type: "error",
        id: msg.id,
        message: `training failed: ${errorText(err)}`,
      });
    }
  };

  for await (const line of rl) {
    if (line.trim() === "") {
      continue;
    }
    let msg: WireMessage;
    try {
      msg = parseMessage(line);
    } catch (err) {
      const detail = err instanceof WireFormatError ? err.message : String(err);
      process.stderr.write(`${forecaster.name}: bad request line: ${detail}\n`);
      await writer.write({
        type: "error",
        message: `bad request line: ${detail}`,
      });
      continue;
    }
    switch (msg.type) {
      case "capabilities":
        await writer.write({
          type: "capabilities",
          supports_training: forecaster.supportsTraining,
          deterministic: forecaster.deterministic,
        });
        break;
      case "forecast":
        await handleForecast(msg);
        break;
      case "train":
        // Training blocks the read loop; the host pipelines forecasts
        // only after the train result, so nothing queues behind it.
        await handleTrain(msg);
        break;
      default:
        process.stderr.write(
          `${forecaster.name}: ignoring unexpected ${msg.type} frame\n`
        );
        break;
    }
  }

  while (inflight.size > 0) {
    await Promise.all([...inflight]);
  }
  await forecaster.close?.();
  return 0;
}
