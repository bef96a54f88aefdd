#!/usr/bin/env node
/**
 * semclust-extract <command>
 *
 *   nouns  --nouns <wordnet-dir|list-file> --out <dir>
 *          [--backend clip|deterministic] [--dim N] [--template "A photo of a {}"]
 *   images --dataset <dir> [--split <name>] --out <dir>
 *          [--backend clip|deterministic] [--dim N] [--batch-size N]
 *   zero-shot --images <emb1> --labels <json> --classes <file-or-csv>
 *          --out <json> [--backend clip|deterministic] [--dim N]
 */

import * as fs from "node:fs";
import { parseArgs } from "node:util";

import { makeBackend } from "./backend.js";
import {
  extractImageEmbeddings,
  extractNounEmbeddings,
  zeroShotReference,
} from "./extract.js";

function usage(): never {
  console.error(
    "usage: semclust-extract <nouns|images|zero-shot> [options]\n" +
      "run with a command to see its required options",
  );
  process.exit(2);
}

async function run(): Promise<number> {
  const [command, ...rest] = process.argv.slice(2);
  if (!command) usage();
  const { values } = parseArgs({
    args: rest,
    options: {
      nouns: { type: "string" },
      dataset: { type: "string" },
      split: { type: "string" },
      images: { type: "string" },
      labels: { type: "string" },
      classes: { type: "string" },
      out: { type: "string" },
      backend: { type: "string", default: "clip" },
      dim: { type: "string" },
      template: { type: "string" },
      "batch-size": { type: "string" },
    },
  });
  const backend = makeBackend(
    values.backend as string,
    values.dim ? Number(values.dim) : undefined,
  );
  const batchSize = values["batch-size"] ? Number(values["batch-size"]) : undefined;

  switch (command) {
    case "nouns": {
      if (!values.nouns || !values.out) {
        console.error("nouns: --nouns and --out are required");
        return 2;
      }
      const res = await extractNounEmbeddings(values.nouns, values.out, backend, {
        template: values.template,
        batchSize,
      });
      console.log(`wrote ${res.count} noun embeddings to ${res.embPath}`);
      return 0;
    }
    case "images": {
      if (!values.dataset || !values.out) {
        console.error("images: --dataset and --out are required");
        return 2;
      }
      const res = await extractImageEmbeddings(
        values.dataset,
        values.split,
        values.out,
        backend,
        { batchSize },
      );
      console.log(
        `wrote ${res.count} image embeddings (${res.classes.length} classes) ` +
          `to ${res.embPath}`,
      );
      return 0;
    }
    case "zero-shot": {
      if (!values.images || !values.labels || !values.classes || !values.out) {
        console.error("zero-shot: --images, --labels, --classes and --out are required");
        return 2;
      }
      const classNames = fs.existsSync(values.classes)
        ? JSON.parse(fs.readFileSync(values.classes, "utf-8"))
        : values.classes.split(",");
      const res = await zeroShotReference(
        values.images,
        values.labels,
        classNames,
        backend,
        { template: values.template, outPath: values.out },
      );
      console.log(`zero-shot acc=${res.acc.toFixed(4)} over ${res.n} images`);
      return 0;
    }
    default:
      usage();
  }
}

run()
  .then((code) => process.exit(code))
  .catch((err) => {
    console.error(`error: ${err.message}`);
    process.exit(1);
  });
