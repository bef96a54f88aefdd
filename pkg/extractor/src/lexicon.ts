/**
 * Noun lexicon sidecar: UTF-8 JSON-lines, one JSON string per line, line
 * order matching the rows of the companion EMB1 file.
 */

import * as fs from "node:fs";

export function writeLexicon(path: string, nouns: string[]): void {
  const seen = new Set<string>();
  for (const w of nouns) {
    if (!w) throw new Error("empty noun string");
    if (seen.has(w)) throw new Error(`duplicate noun: ${w}`);
    seen.add(w);
  }
  const body = nouns.map((w) => JSON.stringify(w)).join("\n") + "\n";
  fs.writeFileSync(path, body, "utf-8");
}

export function readLexicon(path: string): string[] {
  const lines = fs
    .readFileSync(path, "utf-8")
    .split("\n")
    .filter((ln) => ln.trim().length > 0);
  return lines.map((ln, i) => {
    const value = JSON.parse(ln);
    if (typeof value !== "string") {
      throw new Error(`${path}:${i + 1}: expected a JSON string`);
    }
    return value;
  });
}
