/** Label files: a JSON array of non-negative integers. */

import * as fs from "node:fs";

export function writeLabels(path: string, labels: number[]): void {
  for (const v of labels) {
    if (!Number.isInteger(v) || v < 0) {
      throw new Error(`labels must be non-negative integers, got ${v}`);
    }
  }
  fs.writeFileSync(path, JSON.stringify(labels) + "\n", "utf-8");
}

export function readLabels(path: string): number[] {
  const data = JSON.parse(fs.readFileSync(path, "utf-8"));
  if (!Array.isArray(data) || !data.every((v) => Number.isInteger(v) && v >= 0)) {
    throw new Error(`${path}: expected a JSON array of non-negative integers`);
  }
  return data;
}
