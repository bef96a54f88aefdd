export {
  EmbeddingMatrix,
  fromRows,
  normalizeRows,
  readEmb1,
  writeEmb1,
} from "./emb1.js";
export { readLexicon, writeLexicon } from "./lexicon.js";
export { readLabels, writeLabels } from "./labels.js";
export { DEFAULT_TEMPLATE, buildPrompts } from "./prompts.js";
export {
  ExtractionManifest,
  ManifestFile,
  describeFile,
  sha256File,
  verifyManifest,
  writeManifest,
} from "./manifest.js";
export {
  CLIP_MODEL_ID,
  ClipBackend,
  DeterministicBackend,
  EmbeddingBackend,
  makeBackend,
} from "./backend.js";
export { loadNouns, nounsFromFile, wordnetNouns } from "./wordnet.js";
export {
  DatasetListing,
  ImageExtractionResult,
  NounExtractionResult,
  ZeroShotResult,
  extractImageEmbeddings,
  extractNounEmbeddings,
  listImageDataset,
  zeroShotReference,
} from "./extract.js";
