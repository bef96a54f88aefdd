/**
 * Extraction manifest: records what produced each output file and a
 * sha256 checksum so downstream runs can verify integrity.
 */

import * as crypto from "node:crypto";
import * as fs from "node:fs";
import * as path from "node:path";

export interface ManifestFile {
  path: string;
  sha256: string;
  bytes: number;
}

export interface ExtractionManifest {
  model: string;
  promptTemplate: string | null;
  dataset: string | null;
  split: string | null;
  counts: Record<string, number>;
  files: ManifestFile[];
}

export function sha256File(filePath: string): string {
  return crypto.createHash("sha256").update(fs.readFileSync(filePath)).digest("hex");
}

export function describeFile(filePath: string): ManifestFile {
  return {
    path: path.basename(filePath),
    sha256: sha256File(filePath),
    bytes: fs.statSync(filePath).size,
  };
}

export function writeManifest(outDir: string, manifest: ExtractionManifest): string {
  const target = path.join(outDir, "manifest.json");
  fs.writeFileSync(target, JSON.stringify(manifest, null, 2) + "\n", "utf-8");
  return target;
}

/** Every referenced file must exist and match its recorded checksum. */
export function verifyManifest(outDir: string, manifest: ExtractionManifest): void {
  for (const entry of manifest.files) {
    const full = path.join(outDir, entry.path);
    if (!fs.existsSync(full)) {
      throw new Error(`manifest refers to a missing file: ${entry.path}`);
    }
    const digest = sha256File(full);
    if (digest !== entry.sha256) {
      throw new Error(
        `checksum mismatch for ${entry.path}: ${digest} != ${entry.sha256}`,
      );
    }
  }
}
