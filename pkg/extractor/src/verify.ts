/**
 * Structural verification of a GCEB file: header, payload completeness, and
 * unit-norm embeddings (all enforced by the codec), summarized with record
 * count and label balance.
 */

import { GcebError, readGceb, UNLABELED } from "./gceb.js";

export interface VerifyReport {
  ok: boolean;
  problem?: string;
  records: number;
  dim: number;
  version: number;
  withFlip: number;
  labelCounts: { benign: number; hateful: number; unlabeled: number };
}

export function verifyFile(path: string): VerifyReport {
  const empty = { benign: 0, hateful: 0, unlabeled: 0 };
  try {
    const file = readGceb(path);
    const counts = { ...empty };
    let withFlip = 0;
    for (const rec of file.records) {
      if (rec.label === 0) counts.benign++;
      else if (rec.label === 1) counts.hateful++;
      else if (rec.label === UNLABELED) counts.unlabeled++;
      if (rec.flippedImage) withFlip++;
    }
    return {
      ok: true,
      records: file.records.length,
      dim: file.dim,
      version: file.version,
      withFlip,
      labelCounts: counts,
    };
  } catch (err) {
    if (err instanceof GcebError || err instanceof Error) {
      return {
        ok: false,
        problem: (err as Error).message,
        records: 0,
        dim: 0,
        version: 0,
        withFlip: 0,
        labelCounts: empty,
      };
    }
    throw err;
  }
}

export function formatReport(path: string, report: VerifyReport): string {
  if (!report.ok) return `${path}: FAIL - ${report.problem}`;
  const { benign, hateful, unlabeled } = report.labelCounts;
  return [
    `${path}: OK`,
    `records: ${report.records}`,
    `dim: ${report.dim}`,
    `version: ${report.version}`,
    `flipped variants: ${report.withFlip}`,
    `labels: benign ${benign}, hateful ${hateful}, unlabeled ${unlabeled}`,
  ].join("\n");
}
