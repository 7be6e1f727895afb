/**
 * Manifest -> GCEB v1 extraction pipeline: resolve image paths, batch the
 * encoder calls, optionally compute flipped-image variants, and write the
 * embedding file the training package consumes.
 */

import { existsSync } from "node:fs";
import { join } from "node:path";

import { ClipEncoder } from "./encoder.js";
import { GcebRecord, writeGceb } from "./gceb.js";
import { ManifestEntry, readManifest } from "./manifest.js";

export interface ExtractOptions {
  manifestPath: string;
  imageRoot: string;
  outPath: string;
  withFlip: boolean;
  batchSize: number;
  onWarn?: (message: string) => void;
}

export interface ExtractReport {
  written: number;
  skippedMissing: number;
  dim: number;
}

export async function extract(encoder: ClipEncoder, options: ExtractOptions): Promise<ExtractReport> {
  if (options.batchSize < 1) throw new Error(`batch size must be >= 1, got ${options.batchSize}`);
  const warn = options.onWarn ?? ((msg) => console.warn(msg));

  const entries = readManifest(options.manifestPath);
  const usable: Array<ManifestEntry & { path: string }> = [];
  let skippedMissing = 0;
  for (const entry of entries) {
    const path = join(options.imageRoot, entry.img);
    if (!existsSync(path)) {
      skippedMissing++;
      warn(`skipping id ${entry.id}: missing image ${path}`);
      continue;
    }
    usable.push({ ...entry, path });
  }

  const records: GcebRecord[] = [];
  for (let start = 0; start < usable.length; start += options.batchSize) {
    const batch = usable.slice(start, start + options.batchSize);
    const paths = batch.map((e) => e.path);
    const [texts, images, flipped] = await Promise.all([
      encoder.encodeTexts(batch.map((e) => e.text)),
      encoder.encodeImages(paths, false),
      options.withFlip ? encoder.encodeImages(paths, true) : Promise.resolve(undefined),
    ]);
    batch.forEach((entry, i) => {
      records.push({
        id: entry.id,
        label: entry.label,
        image: images[i],
        text: texts[i],
        flippedImage: flipped?.[i],
      });
    });
  }

  writeGceb(options.outPath, encoder.dim, records, 1);
  return { written: records.length, skippedMissing, dim: encoder.dim };
}
