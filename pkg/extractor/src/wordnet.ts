/**
 * Noun sources. A WordNet database directory yields the unique lemma
 * names of all noun synsets (parsed from index.noun, underscores turned
 * into spaces); a plain text file yields one noun per line.
 */

import * as fs from "node:fs";
import * as path from "node:path";

/** Parse index.noun from a WordNet database directory (WNdb layout). */
export function wordnetNouns(dbDir: string): string[] {
  const indexPath = path.join(dbDir, "index.noun");
  if (!fs.existsSync(indexPath)) {
    throw new Error(
      `no index.noun in ${dbDir}; point --nouns at a WordNet database ` +
        "directory (the WNdb 'dict' folder) or at a plain noun list file",
    );
  }
  const seen = new Set<string>();
  const nouns: string[] = [];
  for (const line of fs.readFileSync(indexPath, "utf-8").split("\n")) {
    if (!line || line.startsWith("  ")) continue; // license header
    const lemma = line.split(" ", 2)[0];
    if (!lemma) continue;
    const word = lemma.replace(/_/g, " ");
    if (!seen.has(word)) {
      seen.add(word);
      nouns.push(word);
    }
  }
  if (nouns.length === 0) {
    throw new Error(`${indexPath}: no lemmas found`);
  }
  return nouns;
}

/** One noun per line; blank lines ignored; duplicates rejected later. */
export function nounsFromFile(filePath: string): string[] {
  const lines = fs
    .readFileSync(filePath, "utf-8")
    .split("\n")
    .map((ln) => ln.trim())
    .filter((ln) => ln.length > 0);
  if (lines.length === 0) {
    throw new Error(`${filePath}: empty noun list`);
  }
  return lines;
}

/** Dispatch on whether the source is a WordNet directory or a list file. */
export function loadNouns(source: string): string[] {
  const stat = fs.statSync(source, { throwIfNoEntry: false });
  if (stat === undefined) {
    throw new Error(`noun source not found: ${source}`);
  }
  return stat.isDirectory() ? wordnetNouns(source) : nounsFromFile(source);
}
