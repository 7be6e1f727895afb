/**
 * GCEB embedding-file codec (little-endian).
 *
 * Layout:
 *   header (16 bytes): magic "GCEB" | version u32 | dim u32 | record_count u32
 *   per record: id u64 | label u8 | flags u8 (bit0: flipped image present)
 *               | image f32[dim] | text f32[dim]
 *               | flipped image f32[dim] when flags bit0
 *               | meta_tag u8 when version == 2
 *
 * The extractor writes version 1 (real data, no provenance byte); the reader
 * accepts both versions so `verify` also works on synthetic files.
 */

import { readFileSync, writeFileSync } from "node:fs";

export const MAGIC = "GCEB";
export const UNLABELED = 255;
export const NORM_TOL = 1e-3;

const HEADER_SIZE = 16;
const FLAG_FLIPPED = 0x01;

export class GcebError extends Error {}

export interface GcebRecord {
  id: bigint;
  label: number; // 0 | 1 | 255
  image: Float32Array;
  text: Float32Array;
  flippedImage?: Float32Array;
  metaTag?: number; // version 2 only; 0 none, 1 image_signal, 2 text_signal
}

export interface GcebFile {
  version: number;
  dim: number;
  records: GcebRecord[];
}

export function norm(vec: Float32Array): number {
  let sum = 0;
  for (let i = 0; i < vec.length; i++) sum += vec[i] * vec[i];
  return Math.sqrt(sum);
}

export function l2normalize(vec: Float32Array): Float32Array {
  const n = norm(vec);
  if (n < 1e-12) throw new GcebError("cannot normalize a zero vector");
  const out = new Float32Array(vec.length);
  for (let i = 0; i < vec.length; i++) out[i] = vec[i] / n;
  return out;
}

function checkRecord(rec: GcebRecord, dim: number, index: number): void {
  if (rec.label !== 0 && rec.label !== 1 && rec.label !== UNLABELED) {
    throw new GcebError(`record ${index}: label ${rec.label} not in {0, 1, 255}`);
  }
  const vectors: Array<[string, Float32Array | undefined]> = [
    ["image", rec.image],
    ["text", rec.text],
    ["flipped image", rec.flippedImage],
  ];
  for (const [name, vec] of vectors) {
    if (vec === undefined) continue;
    if (vec.length !== dim) {
      throw new GcebError(`record ${index}: ${name} has length ${vec.length}, expected ${dim}`);
    }
    const n = norm(vec);
    if (Math.abs(n - 1) > NORM_TOL) {
      throw new GcebError(`record ${index}: ${name} norm ${n.toFixed(6)} outside 1 +/- ${NORM_TOL}`);
    }
  }
}

function writeF32(buf: Buffer, offset: number, vec: Float32Array): number {
  for (let i = 0; i < vec.length; i++) {
    buf.writeFloatLE(vec[i], offset + 4 * i);
  }
  return offset + 4 * vec.length;
}

export function encodeGceb(dim: number, records: GcebRecord[], version = 1): Buffer {
  if (version !== 1 && version !== 2) throw new GcebError(`cannot write version ${version}`);
  const seen = new Set<bigint>();
  let size = HEADER_SIZE;
  records.forEach((rec, i) => {
    checkRecord(rec, dim, i);
    if (seen.has(rec.id)) throw new GcebError(`duplicate record id ${rec.id}`);
    seen.add(rec.id);
    size += 8 + 1 + 1 + 4 * dim * (rec.flippedImage ? 3 : 2) + (version === 2 ? 1 : 0);
  });

  const buf = Buffer.alloc(size);
  buf.write(MAGIC, 0, "ascii");
  buf.writeUInt32LE(version, 4);
  buf.writeUInt32LE(dim, 8);
  buf.writeUInt32LE(records.length, 12);

  let offset = HEADER_SIZE;
  for (const rec of records) {
    buf.writeBigUInt64LE(rec.id, offset);
    offset += 8;
    buf.writeUInt8(rec.label, offset++);
    buf.writeUInt8(rec.flippedImage ? FLAG_FLIPPED : 0, offset++);
    offset = writeF32(buf, offset, rec.image);
    offset = writeF32(buf, offset, rec.text);
    if (rec.flippedImage) offset = writeF32(buf, offset, rec.flippedImage);
    if (version === 2) buf.writeUInt8(rec.metaTag ?? 0, offset++);
  }
  return buf;
}

export function writeGceb(path: string, dim: number, records: GcebRecord[], version = 1): void {
  writeFileSync(path, encodeGceb(dim, records, version));
}

export function decodeGceb(buf: Buffer): GcebFile {
  if (buf.length < HEADER_SIZE) {
    throw new GcebError(`file has ${buf.length} bytes, header needs ${HEADER_SIZE}`);
  }
  const magic = buf.toString("ascii", 0, 4);
  if (magic !== MAGIC) throw new GcebError(`bad magic ${JSON.stringify(magic)}, expected "GCEB"`);
  const version = buf.readUInt32LE(4);
  if (version !== 1 && version !== 2) throw new GcebError(`unsupported version ${version}`);
  const dim = buf.readUInt32LE(8);
  const count = buf.readUInt32LE(12);

  const records: GcebRecord[] = [];
  let offset = HEADER_SIZE;
  const takeF32 = (index: number): Float32Array => {
    if (offset + 4 * dim > buf.length) throw new GcebError(`truncated in record ${index}`);
    const vec = new Float32Array(dim);
    for (let i = 0; i < dim; i++) vec[i] = buf.readFloatLE(offset + 4 * i);
    offset += 4 * dim;
    return vec;
  };

  for (let i = 0; i < count; i++) {
    if (offset + 10 > buf.length) throw new GcebError(`truncated in record ${i}`);
    const id = buf.readBigUInt64LE(offset);
    offset += 8;
    const label = buf.readUInt8(offset++);
    const flags = buf.readUInt8(offset++);
    const image = takeF32(i);
    const text = takeF32(i);
    const flippedImage = flags & FLAG_FLIPPED ? takeF32(i) : undefined;
    let metaTag: number | undefined;
    if (version === 2) {
      if (offset + 1 > buf.length) throw new GcebError(`truncated in record ${i}`);
      metaTag = buf.readUInt8(offset++);
    }
    const rec: GcebRecord = { id, label, image, text, flippedImage, metaTag };
    checkRecord(rec, dim, i);
    records.push(rec);
  }
  return { version, dim, records };
}

export function readGceb(path: string): GcebFile {
  return decodeGceb(readFileSync(path));
}
