/**
 * Hateful-Memes-style JSONL manifest parsing. One JSON object per line with
 * fields {id, img, text, label?}; label is absent for unlabeled splits.
 */

import { readFileSync } from "node:fs";
import { z } from "zod";

import { UNLABELED } from "./gceb.js";

const entrySchema = z.object({
  id: z.union([z.number().int().nonnegative(), z.string().regex(/^\d+$/)]),
  img: z.string().min(1),
  text: z.string(),
  label: z.union([z.literal(0), z.literal(1)]).optional(),
});

export interface ManifestEntry {
  id: bigint;
  img: string;
  text: string;
  label: number; // 0 | 1 | 255 when absent
}

export class ManifestError extends Error {}

export function parseManifest(content: string): ManifestEntry[] {
  const entries: ManifestEntry[] = [];
  const seen = new Set<bigint>();
  const lines = content.split("\n");
  for (let lineNo = 0; lineNo < lines.length; lineNo++) {
    const line = lines[lineNo].trim();
    if (!line) continue;
    let raw: unknown;
    try {
      raw = JSON.parse(line);
    } catch (err) {
      throw new ManifestError(`line ${lineNo + 1}: invalid JSON (${(err as Error).message})`);
    }
    const parsed = entrySchema.safeParse(raw);
    if (!parsed.success) {
      throw new ManifestError(`line ${lineNo + 1}: ${parsed.error.issues[0]?.message ?? "invalid entry"}`);
    }
    const id = BigInt(parsed.data.id);
    if (seen.has(id)) throw new ManifestError(`line ${lineNo + 1}: duplicate id ${id}`);
    seen.add(id);
    entries.push({
      id,
      img: parsed.data.img,
      text: parsed.data.text,
      label: parsed.data.label ?? UNLABELED,
    });
  }
  return entries;
}

export function readManifest(path: string): ManifestEntry[] {
  return parseManifest(readFileSync(path, "utf-8"));
}
