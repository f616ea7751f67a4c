/**
 * Shared test plumbing: a deterministic mock model endpoint
 * implementing the documented serving contract, a child-process driver
 * that speaks the wire protocol like the benchmark bridge does, and a
 * tiny seeded RNG for fuzzing.
 */
import { ChildProcessWithoutNullStreams, spawn } from "node:child_process";
import * as crypto from "node:crypto";
import * as fs from "node:fs/promises";
import * as http from "node:http";
import * as os from "node:os";
import * as path from "node:path";
import * as readline from "node:readline";
import type { Readable } from "node:stream";
import { fileURLToPath } from "node:url";

import { WireMessage, parseMessage, serializeMessage } from "../dist/wire.js";

export const CLI_PATH = fileURLToPath(new URL("../dist/cli.js", import.meta.url));
export const FIXTURE_POOL = fileURLToPath(
  new URL("./fixtures/training_pool.csv", import.meta.url)
);

/** mulberry32: tiny deterministic PRNG for fuzz inputs. */
export function makeRng(seed: number): () => number {
  let a = seed >>> 0;
  return () => {
    a = (a + 0x6d2b79f5) >>> 0;
    let t = a;
    t = Math.imul(t ^ (t >>> 15), t | 1);
    t ^= t + Math.imul(t ^ (t >>> 7), t | 61);
    return ((t ^ (t >>> 14)) >>> 0) / 4294967296;
  };
}

/** First `rows` data rows of the fixture pool, written to a tmp file. */
export async function writeMiniPool(rows: number): Promise<string> {
  const text = await fs.readFile(FIXTURE_POOL, "utf8");
  const lines = text.split("\n").filter((ln) => ln.trim() !== "");
  const dir = await fs.mkdtemp(path.join(os.tmpdir(), "pool-"));
  const out = path.join(dir, "training_pool.csv");
  await fs.writeFile(out, lines.slice(0, rows + 1).join("\n") + "\n");
  return out;
}

/** Reads protocol frames off a stream; every line must be well-formed. */
export class FrameReader {
  private readonly queue: WireMessage[] = [];
  private readonly waiters: {
    resolve: (msg: WireMessage) => void;
    reject: (err: Error) => void;
  }[] = [];
  private readError: Error | null = null;
  private context: () => string;

  constructor(stream: Readable, context: () => string = () => "") {
    this.context = context;
    const rl = readline.createInterface({ input: stream });
    rl.on("line", (line) => {
      let msg: WireMessage;
      try {
        msg = parseMessage(line);
      } catch (err) {
        this.readError = new Error(`malformed adapter line: ${line} (${err})`);
        this.waiters.shift()?.reject(this.readError);
        return;
      }
      const waiter = this.waiters.shift();
      if (waiter) {
        waiter.resolve(msg);
      } else {
        this.queue.push(msg);
      }
    });
  }

  next(timeoutMs = 30_000): Promise<WireMessage> {
    if (this.readError) {
      return Promise.reject(this.readError);
    }
    const queued = this.queue.shift();
    if (queued !== undefined) {
      return Promise.resolve(queued);
    }
    return new Promise((resolve, reject) => {
      const timer = setTimeout(() => {
        const idx = this.waiters.indexOf(wrapped);
        if (idx >= 0) {
          this.waiters.splice(idx, 1);
        }
        reject(new Error(`no frame within ${timeoutMs}ms${this.context()}`));
      }, timeoutMs);
      timer.unref?.();
      const wrapped = {
        resolve: (msg: WireMessage) => {
          clearTimeout(timer);
          resolve(msg);
        },
        reject: (err: Error) => {
          clearTimeout(timer);
          reject(err);
        },
      };
      this.waiters.push(wrapped);
    });
  }

  async collect(n: number, timeoutMs = 30_000): Promise<WireMessage[]> {
    const out: WireMessage[] = [];
    for (let i = 0; i < n; i++) {
      out.push(await this.next(timeoutMs));
    }
    return out;
  }
}

export interface RecordedRequest {
  path: string;
  body: Record<string, unknown>;
}

export interface MockEndpointOptions {
  /** Model ids the endpoint claims to host. */
  models: string[];
  /** Respond 500 to every forecast call. */
  failForecast?: boolean;
  /** Delay forecast responses by this many milliseconds. */
  forecastDelayMs?: number;
}

export interface MockEndpoint {
  url: string;
  requests: RecordedRequest[];
  close(): Promise<void>;
}

interface SeriesBody {
  values: number[];
  horizon: number;
  start_year: number;
}

/**
 * Deterministic stand-in for the GPU model server. Sampling models get
 * sample i at step t equal to base*(t+1) + i with base the last
 * observation, so the median has the closed form base*(t+1) + (n-1)/2;
 * a fine-tune tag shifts every sample by 1000. Point models get
 * base + (t+1)/2.
 */
export async function startMockEndpoint(
  options: MockEndpointOptions
): Promise<MockEndpoint> {
  const requests: RecordedRequest[] = [];
  const hosted = new Set(options.models);

  const server = http.createServer((req, res) => {
    const chunks: Buffer[] = [];
    req.on("data", (c: Buffer) => chunks.push(c));
    req.on("end", () => {
      const url = req.url ?? "";
      const send = (status: number, payload: unknown) => {
        res.writeHead(status, { "content-type": "application/json" });
        res.end(JSON.stringify(payload));
      };
      if (req.method === "GET" && url.startsWith("/v1/models/")) {
        const model = decodeURIComponent(url.slice("/v1/models/".length));
        if (hosted.has(model)) {
          send(200, { model, ready: true });
        } else {
          send(404, { error: `model ${model} is not hosted` });
        }
        return;
      }
      const body = JSON.parse(Buffer.concat(chunks).toString() || "{}") as Record<
        string,
        unknown
      >;
      requests.push({ path: url, body });
      if (req.method === "POST" && url === "/v1/forecast") {
        if (options.failForecast) {
          send(500, { error: "forecast backend unavailable" });
          return;
        }
        const series = body.series as SeriesBody[];
        const numSamples = body.num_samples as number | undefined;
        const shift = typeof body.tag === "string" ? 1000 : 0;
        const forecasts = series.map((s) => {
          const base = s.values[s.values.length - 1];
          if (numSamples !== undefined) {
            const samples = Array.from({ length: numSamples }, (_, i) =>
              Array.from({ length: s.horizon }, (_, t) => base * (t + 1) + i + shift)
            );
            return { samples };
          }
          const values = Array.from(
            { length: s.horizon },
            (_, t) => base + (t + 1) / 2
          );
          return { values };
        });
        const reply = () => send(200, { forecasts });
        if (options.forecastDelayMs) {
          setTimeout(reply, options.forecastDelayMs).unref?.();
        } else {
          reply();
        }
        return;
      }
      if (req.method === "POST" && url === "/v1/finetune") {
        const digest = crypto
          .createHash("sha256")
          .update(String(body.dataset ?? ""))
          .digest("hex");
        send(200, { tag: `ft-${digest.slice(0, 12)}` });
        return;
      }
      send(404, { error: `no route for ${req.method} ${url}` });
    });
  });

  await new Promise<void>((resolve) => server.listen(0, "127.0.0.1", resolve));
  const address = server.address();
  if (address === null || typeof address === "string") {
    throw new Error("mock endpoint failed to bind");
  }
  return {
    url: `http://127.0.0.1:${address.port}`,
    requests,
    close: () =>
      new Promise<void>((resolve, reject) =>
        server.close((err) => (err ? reject(err) : resolve()))
      ),
  };
}

/**
 * Drives one adapter child process the way the benchmark bridge does:
 * frames down stdin, replies off stdout.
 */
export class AdapterProcess {
  private readonly child: ChildProcessWithoutNullStreams;
  private readonly reader: FrameReader;
  private readonly exited: Promise<number | null>;
  readonly stderr: string[] = [];

  constructor(args: string[], env: Record<string, string> = {}) {
    this.child = spawn(process.execPath, [CLI_PATH, ...args], {
      env: { ...process.env, ...env },
      stdio: ["pipe", "pipe", "pipe"],
    });
    this.reader = new FrameReader(
      this.child.stdout,
      () => `; stderr:\n${this.stderr.join("\n")}`
    );
    const errRl = readline.createInterface({ input: this.child.stderr });
    errRl.on("line", (line) => this.stderr.push(line));
    this.exited = new Promise((resolve) => {
      this.child.on("exit", (code) => resolve(code));
    });
  }

  send(msg: WireMessage): void {
    this.child.stdin.write(serializeMessage(msg) + "\n");
  }

  sendRaw(line: string): void {
    this.child.stdin.write(line + "\n");
  }

  next(timeoutMs = 30_000): Promise<WireMessage> {
    return this.reader.next(timeoutMs);
  }

  collect(n: number, timeoutMs = 30_000): Promise<WireMessage[]> {
    return this.reader.collect(n, timeoutMs);
  }

  /** Complete the hello/capabilities handshake; returns both frames. */
  async handshake(): Promise<{ hello: WireMessage; capabilities: WireMessage }> {
    const hello = await this.next();
    this.send({ type: "capabilities" });
    const capabilities = await this.next();
    return { hello, capabilities };
  }

  endInput(): void {
    this.child.stdin.end();
  }

  kill(): void {
    this.child.kill("SIGKILL");
  }

  async waitExit(timeoutMs = 30_000): Promise<number | null> {
    let timer: NodeJS.Timeout;
    const timeout = new Promise<never>((_, reject) => {
      timer = setTimeout(
        () => reject(new Error(`adapter did not exit within ${timeoutMs}ms`)),
        timeoutMs
      );
      timer.unref?.();
    });
    try {
      return await Promise.race([this.exited, timeout]);
    } finally {
      clearTimeout(timer!);
    }
  }
}
