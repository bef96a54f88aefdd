/**
 * The three extraction operations. All of them emit exactly the
 * clustering engine's file formats (EMB1, JSON-lines lexicon, JSON
 * labels) plus a checksummed manifest, and all preserve input order
 * regardless of the inference batch size.
 */

import * as fs from "node:fs";
import * as path from "node:path";

import { EmbeddingBackend } from "./backend.js";
import { fromRows, normalizeRows, readEmb1, writeEmb1 } from "./emb1.js";
import { readLabels, writeLabels } from "./labels.js";
import { writeLexicon } from "./lexicon.js";
import { DEFAULT_TEMPLATE, buildPrompts } from "./prompts.js";
import { ExtractionManifest, describeFile, writeManifest } from "./manifest.js";
import { loadNouns } from "./wordnet.js";

const IMAGE_EXTENSIONS = new Set([".png", ".jpg", ".jpeg", ".bmp", ".gif", ".webp"]);

async function embedTextsBatched(
  backend: EmbeddingBackend,
  texts: string[],
  batchSize: number,
): Promise<Float32Array[]> {
  const rows: Float32Array[] = [];
  for (let start = 0; start < texts.length; start += batchSize) {
    rows.push(...(await backend.embedTexts(texts.slice(start, start + batchSize))));
  }
  return rows;
}

async function embedImagesBatched(
  backend: EmbeddingBackend,
  paths: string[],
  batchSize: number,
): Promise<Float32Array[]> {
  const rows: Float32Array[] = [];
  for (let start = 0; start < paths.length; start += batchSize) {
    rows.push(...(await backend.embedImages(paths.slice(start, start + batchSize))));
  }
  return rows;
}

export interface NounExtractionResult {
  count: number;
  embPath: string;
  nounsPath: string;
  manifestPath: string;
}

export async function extractNounEmbeddings(
  nounSource: string,
  outDir: string,
  backend: EmbeddingBackend,
  opts: { template?: string; batchSize?: number } = {},
): Promise<NounExtractionResult> {
  const template = opts.template ?? DEFAULT_TEMPLATE;
  const batchSize = opts.batchSize ?? 256;
  const raw = loadNouns(nounSource);
  const nouns = [...new Set(raw)];
  const prompts = buildPrompts(nouns, template);
  const rows = await embedTextsBatched(backend, prompts, batchSize);
  const matrix = normalizeRows(fromRows(rows, false));

  fs.mkdirSync(outDir, { recursive: true });
  const embPath = path.join(outDir, "lexicon.emb");
  const nounsPath = path.join(outDir, "lexicon.jsonl");
  writeEmb1(embPath, matrix);
  writeLexicon(nounsPath, nouns);
  const manifest: ExtractionManifest = {
    model: backend.modelId,
    promptTemplate: template,
    dataset: nounSource,
    split: null,
    counts: { nouns: nouns.length, raw: raw.length, dim: matrix.d },
    files: [describeFile(embPath), describeFile(nounsPath)],
  };
  const manifestPath = writeManifest(outDir, manifest);
  return { count: nouns.length, embPath, nounsPath, manifestPath };
}

export interface DatasetListing {
  classes: string[];
  /** absolute image paths, grouped by the sorted class order */
  paths: string[];
  labels: number[];
}

/**
 * Dataset layout: <root>[/<split>]/<class>/<image files>. Classes and
 * files are visited in sorted order so the output ordering is a pure
 * function of the directory contents.
 */
export function listImageDataset(root: string, split?: string): DatasetListing {
  const base = split ? path.join(root, split) : root;
  if (!fs.existsSync(base)) {
    throw new Error(`dataset directory not found: ${base}`);
  }
  const classes = fs
    .readdirSync(base, { withFileTypes: true })
    .filter((e) => e.isDirectory())
    .map((e) => e.name)
    .sort();
  if (classes.length === 0) {
    throw new Error(`no class subdirectories under ${base}`);
  }
  const paths: string[] = [];
  const labels: number[] = [];
  classes.forEach((cls, label) => {
    const files = fs
      .readdirSync(path.join(base, cls))
      .filter((f) => IMAGE_EXTENSIONS.has(path.extname(f).toLowerCase()))
      .sort();
    for (const f of files) {
      paths.push(path.join(base, cls, f));
      labels.push(label);
    }
  });
  if (paths.length === 0) {
    throw new Error(`no image files under ${base}`);
  }
  return { classes, paths, labels };
}

export interface ImageExtractionResult {
  count: number;
  classes: string[];
  embPath: string;
  labelsPath: string;
  manifestPath: string;
}

export async function extractImageEmbeddings(
  datasetDir: string,
  split: string | undefined,
  outDir: string,
  backend: EmbeddingBackend,
  opts: { batchSize?: number } = {},
): Promise<ImageExtractionResult> {
  const batchSize = opts.batchSize ?? 64;
  // validate the dataset fully before writing anything
  const listing = listImageDataset(datasetDir, split);
  const rows = await embedImagesBatched(backend, listing.paths, batchSize);
  const matrix = normalizeRows(fromRows(rows, false));

  fs.mkdirSync(outDir, { recursive: true });
  const embPath = path.join(outDir, "images.emb");
  const labelsPath = path.join(outDir, "labels.json");
  const classesPath = path.join(outDir, "classes.json");
  writeEmb1(embPath, matrix);
  writeLabels(labelsPath, listing.labels);
  fs.writeFileSync(classesPath, JSON.stringify(listing.classes, null, 2) + "\n");
  const manifest: ExtractionManifest = {
    model: backend.modelId,
    promptTemplate: null,
    dataset: datasetDir,
    split: split ?? null,
    counts: {
      images: matrix.n,
      classes: listing.classes.length,
      dim: matrix.d,
    },
    files: [describeFile(embPath), describeFile(labelsPath), describeFile(classesPath)],
  };
  const manifestPath = writeManifest(outDir, manifest);
  return {
    count: matrix.n,
    classes: listing.classes,
    embPath,
    labelsPath,
    manifestPath,
  };
}

export interface ZeroShotResult {
  acc: number;
  n: number;
  c: number;
}

/**
 * Nearest-prompt classification: embed one prompt per class name and
 * assign every image row to its highest-dot-product prompt.
 */
export async function zeroShotReference(
  imagesEmbPath: string,
  labelsPath: string,
  classNames: string[],
  backend: EmbeddingBackend,
  opts: { template?: string; outPath?: string } = {},
): Promise<ZeroShotResult> {
  const images = readEmb1(imagesEmbPath);
  const labels = readLabels(labelsPath);
  if (labels.length !== images.n) {
    throw new Error(`${labels.length} labels for ${images.n} image rows`);
  }
  const prompts = buildPrompts(classNames, opts.template ?? DEFAULT_TEMPLATE);
  const protoRows = await backend.embedTexts(prompts);
  const prototypes = normalizeRows(fromRows(protoRows, false));
  if (prototypes.d !== images.d) {
    throw new Error(
      `prompt embedding dim ${prototypes.d} != image embedding dim ${images.d}`,
    );
  }
  let correct = 0;
  for (let i = 0; i < images.n; i++) {
    let best = -Infinity;
    let arg = 0;
    for (let l = 0; l < prototypes.n; l++) {
      let dot = 0;
      for (let j = 0; j < images.d; j++) {
        dot += images.data[i * images.d + j] * prototypes.data[l * prototypes.d + j];
      }
      if (dot > best) {
        best = dot;
        arg = l;
      }
    }
    if (arg === labels[i]) correct++;
  }
  const result: ZeroShotResult = {
    acc: correct / images.n,
    n: images.n,
    c: classNames.length,
  };
  if (opts.outPath) {
    fs.writeFileSync(opts.outPath, JSON.stringify(result, null, 2) + "\n");
  }
  return result;
}
