#!/usr/bin/env node
/**
 * Adapter launcher: pick a forecaster, then run the stdio protocol
 * loop. stdout carries protocol frames only, so console output is
 * rerouted to stderr before any model library gets a chance to print
 * (the pure-JS TensorFlow build greets via console.log on import,
 * which would corrupt the frame stream).
 */
import { parseArgs } from "node:util";

import type { Forecaster } from "./protocol.js";

/* eslint-disable no-console */
console.log = (...args: unknown[]) => console.error(...args);
console.info = (...args: unknown[]) => console.error(...args);
console.warn = (...args: unknown[]) => console.error(...args);

const USAGE = `usage: zeroshot-adapters <command> [options]

Forecaster adapters speaking newline-delimited JSON on stdin/stdout.

commands:
  chronos   sampled-trajectory foundation-model client (median point forecast)
  timesfm   point-forecast foundation-model client
  lstm      trainable recurrent baseline (50-unit LSTM + dense head)

chronos options:
  --size SIZE          tiny, small or large (required)
  --finetune           advertise training; train requests upload the pool CSV
  --endpoint URL       model endpoint (default $MODEL_ENDPOINT)
  --num-samples N      sampled trajectories per forecast (default 20)
  --context N          trailing observations sent upstream (default 512)
  --seed N             sampling seed; omit for stochastic decoding
  --http-timeout SEC   per-request endpoint timeout (default 60)

timesfm options:
  --endpoint URL       model endpoint (default $MODEL_ENDPOINT)
  --model ID           served model id (default timesfm-1.0-200m)
  --context N          trailing observations sent upstream (default 64)
  --freq N             frequency category, 2 = yearly and below (default 2)
  --http-timeout SEC   per-request endpoint timeout (default 60)

lstm options:
  --artifact PATH      weight cache: loaded at startup, saved after training
  --epochs N           training epochs (default 100)
  --batch-size N       training batch size (default 512)
  --seed N             initializer seed (default 0)
`;

export class UsageError extends Error {}

function intOption(value: string | undefined, name: string, fallback: number): number {
  if (value === undefined) {
    return fallback;
  }
  const parsed = Number(value);
  if (!Number.isInteger(parsed) || parsed < 0) {
    throw new UsageError(`${name} must be a non-negative integer, got ${value}`);
  }
  return parsed;
}

function endpointOption(value: string | undefined): string {
  const endpoint = value ?? process.env.MODEL_ENDPOINT;
  if (endpoint === undefined || endpoint === "") {
    throw new UsageError("an endpoint is required: pass --endpoint or set MODEL_ENDPOINT");
  }
  return endpoint;
}

async function makeChronos(argv: string[]): Promise<Forecaster> {
  const { values } = parseArgs({
    args: argv,
    options: {
      size: { type: "string" },
      finetune: { type: "boolean", default: false },
      endpoint: { type: "string" },
      "num-samples": { type: "string" },
      context: { type: "string" },
      seed: { type: "string" },
      "http-timeout": { type: "string" },
    },
  });
  const { ChronosForecaster, CHRONOS_SIZES, DEFAULT_NUM_SAMPLES, DEFAULT_CONTEXT } =
    await import("./chronos.js");
  const size = values.size;
  if (size !== "tiny" && size !== "small" && size !== "large") {
    throw new UsageError(
      `--size must be one of ${CHRONOS_SIZES.join(", ")}, got ${size ?? "nothing"}`
    );
  }
  return new ChronosForecaster({
    endpoint: endpointOption(values.endpoint),
    size,
    finetune: values.finetune ?? false,
    numSamples: intOption(values["num-samples"], "--num-samples", DEFAULT_NUM_SAMPLES),
    context: intOption(values.context, "--context", DEFAULT_CONTEXT),
    seed: values.seed === undefined ? undefined : intOption(values.seed, "--seed", 0),
    timeoutMs: intOption(values["http-timeout"], "--http-timeout", 60) * 1000,
  });
}

async function makeTimesFm(argv: string[]): Promise<Forecaster> {
  const { values } = parseArgs({
    args: argv,
    options: {
      endpoint: { type: "string" },
      model: { type: "string" },
      context: { type: "string" },
      freq: { type: "string" },
      "http-timeout": { type: "string" },
    },
  });
  const {
    TimesFmForecaster,
    DEFAULT_TIMESFM_MODEL,
    DEFAULT_TIMESFM_CONTEXT,
    DEFAULT_TIMESFM_FREQ,
  } = await import("./timesfm.js");
  return new TimesFmForecaster({
    endpoint: endpointOption(values.endpoint),
    model: values.model ?? DEFAULT_TIMESFM_MODEL,
    context: intOption(values.context, "--context", DEFAULT_TIMESFM_CONTEXT),
    freq: intOption(values.freq, "--freq", DEFAULT_TIMESFM_FREQ),
    timeoutMs: intOption(values["http-timeout"], "--http-timeout", 60) * 1000,
  });
}

async function makeLstm(argv: string[]): Promise<Forecaster> {
  const { values } = parseArgs({
    args: argv,
    options: {
      artifact: { type: "string" },
      epochs: { type: "string" },
      "batch-size": { type: "string" },
      seed: { type: "string" },
    },
  });
  // Imported lazily: pulling in TensorFlow only when the command needs it.
  const { LstmForecaster, DEFAULT_EPOCHS, DEFAULT_BATCH_SIZE, DEFAULT_SEED } =
    await import("./lstm.js");
  return new LstmForecaster({
    artifactPath: values.artifact,
    epochs: intOption(values.epochs, "--epochs", DEFAULT_EPOCHS),
    batchSize: intOption(values["batch-size"], "--batch-size", DEFAULT_BATCH_SIZE),
    seed: intOption(values.seed, "--seed", DEFAULT_SEED),
  });
}

export async function makeForecaster(args: string[]): Promise<Forecaster> {
  const [command, ...rest] = args;
  switch (command) {
    case "chronos":
      return makeChronos(rest);
    case "timesfm":
      return makeTimesFm(rest);
    case "lstm":
      return makeLstm(rest);
    case undefined:
    case "--help":
    case "-h":
      throw new UsageError(USAGE);
    default:
      throw new UsageError(`unknown command ${command}; try --help`);
  }
}

async function main(): Promise<number> {
  let forecaster: Forecaster;
  try {
    forecaster = await makeForecaster(process.argv.slice(2));
  } catch (err) {
    if (err instanceof UsageError) {
      process.stderr.write(err.message.endsWith("\n") ? err.message : `${err.message}\n`);
      return 2;
    }
    process.stderr.write(`error: ${err instanceof Error ? err.message : err}\n`);
    return 2;
  }
  const { serve } = await import("./protocol.js");
  return serve(forecaster);
}

main().then(
  (code) => process.exit(code),
  (err) => {
    process.stderr.write(`fatal: ${err instanceof Error ? (err.stack ?? err.message) : err}\n`);
    process.exit(1);
  }
);
