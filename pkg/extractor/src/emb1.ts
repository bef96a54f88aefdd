/**
 * EMB1 binary format: 4-byte ASCII magic "EMB1", u32 LE row count, u32 LE
 * dimension, u8 normalized flag, 3 zero pad bytes, then n*d IEEE-754
 * float32 LE values in row-major order. Matches the clustering engine's
 * reader bit for bit.
 */

import * as fs from "node:fs";

const MAGIC = "EMB1";
const HEADER_SIZE = 16;

export interface EmbeddingMatrix {
  n: number;
  d: number;
  normalized: boolean;
  /** row-major, length n*d */
  data: Float32Array;
}

export function writeEmb1(path: string, m: EmbeddingMatrix): void {
  if (m.n < 1 || m.d < 1 || m.data.length !== m.n * m.d) {
    throw new Error(`inconsistent matrix: n=${m.n} d=${m.d} len=${m.data.length}`);
  }
  for (let i = 0; i < m.data.length; i++) {
    if (!Number.isFinite(m.data[i])) {
      throw new Error(`non-finite value at flat index ${i}`);
    }
  }
  const buf = Buffer.alloc(HEADER_SIZE + m.n * m.d * 4);
  buf.write(MAGIC, 0, "ascii");
  buf.writeUInt32LE(m.n, 4);
  buf.writeUInt32LE(m.d, 8);
  buf.writeUInt8(m.normalized ? 1 : 0, 12);
  for (let i = 0; i < m.data.length; i++) {
    buf.writeFloatLE(m.data[i], HEADER_SIZE + i * 4);
  }
  fs.writeFileSync(path, buf);
}

export function readEmb1(path: string): EmbeddingMatrix {
  const buf = fs.readFileSync(path);
  if (buf.length < HEADER_SIZE) {
    throw new Error(`${path}: truncated header (${buf.length} bytes)`);
  }
  if (buf.toString("ascii", 0, 4) !== MAGIC) {
    throw new Error(`${path}: bad magic`);
  }
  const n = buf.readUInt32LE(4);
  const d = buf.readUInt32LE(8);
  const normalized = buf.readUInt8(12) !== 0;
  const expected = HEADER_SIZE + n * d * 4;
  if (buf.length !== expected) {
    throw new Error(`${path}: expected ${expected} bytes, found ${buf.length}`);
  }
  const data = new Float32Array(n * d);
  for (let i = 0; i < data.length; i++) {
    data[i] = buf.readFloatLE(HEADER_SIZE + i * 4);
    if (!Number.isFinite(data[i])) {
      throw new Error(`${path}: non-finite value at flat index ${i}`);
    }
  }
  return { n, d, normalized, data };
}

/** L2-normalize every row in place; throws on a zero row. */
export function normalizeRows(m: EmbeddingMatrix): EmbeddingMatrix {
  for (let i = 0; i < m.n; i++) {
    let sq = 0;
    for (let j = 0; j < m.d; j++) {
      const v = m.data[i * m.d + j];
      sq += v * v;
    }
    if (sq === 0) {
      throw new Error(`row ${i} has zero norm`);
    }
    const inv = 1 / Math.sqrt(sq);
    for (let j = 0; j < m.d; j++) {
      m.data[i * m.d + j] *= inv;
    }
  }
  m.normalized = true;
  return m;
}

/** Stack unit-length rows into a matrix, verifying a common dimension. */
export function fromRows(rows: Float32Array[], normalized: boolean): EmbeddingMatrix {
  if (rows.length === 0) {
    throw new Error("cannot build an empty matrix");
  }
  const d = rows[0].length;
  const data = new Float32Array(rows.length * d);
  rows.forEach((row, i) => {
    if (row.length !== d) {
      throw new Error(`row ${i} has dimension ${row.length}, expected ${d}`);
    }
    data.set(row, i * d);
  });
  return { n: rows.length, d, normalized, data };
}
