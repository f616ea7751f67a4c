/**
 * Wire format for the forecaster plugin protocol: one compact JSON
 * object per line, UTF-8, '\n' terminated. The field vocabulary is
 * closed; unknown keys are a format error on both sides of the pipe.
 */
import { z } from "zod";

export const PROTOCOL_VERSION = 1;

export const MESSAGE_TYPES = [
  "hello",
  "capabilities",
  "forecast",
  "forecast_result",
  "train",
  "train_result",
  "error",
] as const;

export type MessageType = (typeof MESSAGE_TYPES)[number];

// Numbers on the wire must be plain JSON numbers; NaN/Infinity have no
// JSON encoding and are rejected before serialization.
const finiteNumber = z.number().refine(Number.isFinite, "must be finite");
const wireInt = z.number().int();

export const wireMessageSchema = z.strictObject({
  type: z.enum(MESSAGE_TYPES),
  id: z.string().optional(),
  name: z.string().optional(),
  protocol: wireInt.optional(),
  start_year: wireInt.optional(),
  values: z.array(finiteNumber).optional(),
  horizon: wireInt.optional(),
  tag: z.string().optional(),
  message: z.string().optional(),
  path: z.string().optional(),
  params: z.record(z.string(), z.unknown()).optional(),
  supports_training: z.boolean().optional(),
  deterministic: z.boolean().optional(),
});

export type WireMessage = z.infer<typeof wireMessageSchema>;

export class WireFormatError extends Error {}

/** Parse one protocol line; throws WireFormatError on any violation. */
export function parseMessage(line: string): WireMessage {
  let raw: unknown;
  try {
    raw = JSON.parse(line);
  } catch (err) {
    throw new WireFormatError(`not JSON: ${String(err)}`);
  }
  const result = wireMessageSchema.safeParse(raw);
  if (!result.success) {
    throw new WireFormatError(result.error.issues[0]?.message ?? "bad message");
  }
  return result.data;
}

/** Serialize to one compact line (no trailing newline). */
export function serializeMessage(msg: WireMessage): string {
  const checked = wireMessageSchema.safeParse(msg);
  if (!checked.success) {
    throw new WireFormatError(
      checked.error.issues[0]?.message ?? "bad message"
    );
  }
  return JSON.stringify(checked.data);
}
