/**
 * Embedding backends. The real backend runs a CLIP checkpoint (ViT-B/32)
 * through transformers.js; the deterministic backend is an offline
 * stand-in that exercises every file format and ordering contract when
 * model assets are unavailable.
 */

import * as crypto from "node:crypto";
import * as fs from "node:fs";

export interface EmbeddingBackend {
  readonly modelId: string;
  readonly dim: number;
  /** One unit-norm row per input text, in input order. */
  embedTexts(texts: string[]): Promise<Float32Array[]>;
  /** One unit-norm row per image file, in input order. */
  embedImages(paths: string[]): Promise<Float32Array[]>;
}

function hashToUnitVector(seedBytes: Buffer, dim: number): Float32Array {
  // expand the digest into N(0,1)-ish coordinates via Box-Muller on
  // successive hash blocks, then normalize
  const out = new Float32Array(dim);
  let block = seedBytes;
  let offset = 0;
  for (let i = 0; i < dim; i += 2) {
    if (offset + 8 > block.length) {
      block = crypto.createHash("sha256").update(block).digest();
      offset = 0;
    }
    const u1 = (block.readUInt32LE(offset) + 1) / 4294967297;
    const u2 = (block.readUInt32LE(offset + 4) + 1) / 4294967297;
    offset += 8;
    const r = Math.sqrt(-2 * Math.log(u1));
    out[i] = r * Math.cos(2 * Math.PI * u2);
    if (i + 1 < dim) out[i + 1] = r * Math.sin(2 * Math.PI * u2);
  }
  let sq = 0;
  for (let i = 0; i < dim; i++) sq += out[i] * out[i];
  const inv = 1 / Math.sqrt(sq);
  for (let i = 0; i < dim; i++) out[i] *= inv;
  return out;
}

/**
 * Deterministic content-hash embeddings: the same text or file bytes
 * always map to the same unit vector, independent of batching.
 */
export class DeterministicBackend implements EmbeddingBackend {
  readonly modelId = "deterministic-hash-v1";
  readonly dim: number;

  constructor(dim = 64) {
    this.dim = dim;
  }

  async embedTexts(texts: string[]): Promise<Float32Array[]> {
    return texts.map((t) =>
      hashToUnitVector(
        crypto.createHash("sha256").update("text:").update(t, "utf-8").digest(),
        this.dim,
      ),
    );
  }

  async embedImages(paths: string[]): Promise<Float32Array[]> {
    return paths.map((p) =>
      hashToUnitVector(
        crypto.createHash("sha256").update("image:").update(fs.readFileSync(p)).digest(),
        this.dim,
      ),
    );
  }
}

export const CLIP_MODEL_ID = "Xenova/clip-vit-base-patch32";

/**
 * Real CLIP backend via transformers.js. Loaded lazily: the dependency
 * and its model weights are only required when this backend is chosen.
 */
export class ClipBackend implements EmbeddingBackend {
  readonly modelId: string;
  readonly dim = 512;
  private mod: any = null;
  private tokenizer: any = null;
  private textModel: any = null;
  private processor: any = null;
  private visionModel: any = null;

  constructor(modelId: string = CLIP_MODEL_ID) {
    this.modelId = modelId;
  }

  private async load(): Promise<void> {
    if (this.mod !== null) return;
    try {
      this.mod = await import("@xenova/transformers" as string);
    } catch (err) {
      throw new Error(
        "the CLIP backend needs the '@xenova/transformers' package and its " +
          `model weights for ${this.modelId}; install the package and ensure ` +
          "the model cache is reachable, or use --backend deterministic " +
          `(underlying error: ${(err as Error).message})`,
      );
    }
  }

  private normalizedRows(tensor: any, count: number): Float32Array[] {
    const flat: Float32Array = Float32Array.from(tensor.data);
    const d = flat.length / count;
    const rows: Float32Array[] = [];
    for (let i = 0; i < count; i++) {
      const row = flat.slice(i * d, (i + 1) * d);
      let sq = 0;
      for (const v of row) sq += v * v;
      const inv = 1 / Math.sqrt(sq);
      rows.push(row.map((v) => v * inv));
    }
    return rows;
  }

  async embedTexts(texts: string[]): Promise<Float32Array[]> {
    await this.load();
    if (this.tokenizer === null) {
      this.tokenizer = await this.mod.AutoTokenizer.from_pretrained(this.modelId);
      this.textModel = await this.mod.CLIPTextModelWithProjection.from_pretrained(
        this.modelId,
      );
    }
    const inputs = this.tokenizer(texts, { padding: true, truncation: true });
    const { text_embeds } = await this.textModel(inputs);
    return this.normalizedRows(text_embeds, texts.length);
  }

  async embedImages(paths: string[]): Promise<Float32Array[]> {
    await this.load();
    if (this.processor === null) {
      this.processor = await this.mod.AutoProcessor.from_pretrained(this.modelId);
      this.visionModel = await this.mod.CLIPVisionModelWithProjection.from_pretrained(
        this.modelId,
      );
    }
    const images = await Promise.all(
      paths.map((p) => this.mod.RawImage.read(p)),
    );
    const inputs = await this.processor(images);
    const { image_embeds } = await this.visionModel(inputs);
    return this.normalizedRows(image_embeds, paths.length);
  }
}

export function makeBackend(kind: string, dim?: number): EmbeddingBackend {
  switch (kind) {
    case "deterministic":
      return new DeterministicBackend(dim ?? 64);
    case "clip":
      return new ClipBackend();
    default:
      throw new Error(`unknown backend '${kind}' (choose clip or deterministic)`);
  }
}
