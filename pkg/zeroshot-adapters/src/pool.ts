/**
 * Reader for the exported global training pool: a comma-delimited file
 * with header country,age,end_year,v1..vW,target where v1..vW are W
 * consecutive raw mortality rates and target is the next one. The file
 * is machine-written with no quoting, so a plain split suffices.
 */
import * as fs from "node:fs/promises";

export interface TrainingWindow {
  country: string;
  age: number;
  endYear: number;
  inputs: number[];
  target: number;
}

export interface TrainingPool {
  windows: TrainingWindow[];
  windowLength: number;
}

export function parsePool(text: string): TrainingPool {
  const lines = text.split("\n").filter((ln) => ln.trim() !== "");
  if (lines.length === 0) {
    throw new Error("empty training-pool CSV");
  }
  const header = lines[0].split(",");
  const windowLength = header.length - 4;
  if (
    windowLength < 1 ||
    header[0] !== "country" ||
    header[1] !== "age" ||
    header[2] !== "end_year" ||
    header[header.length - 1] !== "target"
  ) {
    throw new Error(`unrecognized training-pool header: ${lines[0]}`);
  }
  const windows: TrainingWindow[] = [];
  for (const ln of lines.slice(1)) {
    const parts = ln.split(",");
    if (parts.length !== header.length) {
      throw new Error(
        `training-pool row has ${parts.length} fields, expected ${header.length}`
      );
    }
    const inputs = parts.slice(3, -1).map(Number);
    const target = Number(parts[parts.length - 1]);
    if (inputs.some((v) => !Number.isFinite(v)) || !Number.isFinite(target)) {
      throw new Error(`non-numeric rate in training-pool row: ${ln}`);
    }
    windows.push({
      country: parts[0],
      age: Number(parts[1]),
      endYear: Number(parts[2]),
      inputs,
      target,
    });
  }
  if (windows.length === 0) {
    throw new Error("training-pool CSV has a header but no rows");
  }
  return { windows, windowLength };
}

export async function readPool(path: string): Promise<TrainingPool> {
  return parsePool(await fs.readFile(path, "utf8"));
}
