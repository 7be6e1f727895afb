#!/usr/bin/env node
/**
 * CLI: `extract` encodes an image+caption JSONL manifest into a GCEB v1
 * embedding file with a frozen pretrained CLIP ViT-B/32; `verify` checks a
 * GCEB file and prints a summary. Exit codes: 0 ok, 1 usage error or failed
 * verification, 2 runtime failure.
 */

import { pathToFileURL } from "node:url";
import { parseArgs } from "node:util";

import { DEFAULT_MODEL, TransformersClipEncoder } from "./clip.js";
import { extract } from "./extract.js";
import { formatReport, verifyFile } from "./verify.js";

const USAGE = `usage:
  gceb-extract extract --manifest PATH --image-root PATH --out PATH
                       [--with-flip] [--batch N=16] [--model ID]
  gceb-extract verify --data PATH

Text longer than the encoder's context window is truncated by the
tokenizer's default policy (77 tokens for CLIP).`;

async function runExtract(argv: string[]): Promise<number> {
  const { values } = parseArgs({
    args: argv,
    options: {
      manifest: { type: "string" },
      "image-root": { type: "string" },
      out: { type: "string" },
      "with-flip": { type: "boolean", default: false },
      batch: { type: "string", default: "16" },
      model: { type: "string", default: DEFAULT_MODEL },
    },
  });
  if (!values.manifest || !values["image-root"] || !values.out) {
    console.error("extract requires --manifest, --image-root and --out");
    console.error(USAGE);
    return 1;
  }
  const batchSize = Number.parseInt(values.batch!, 10);
  if (!Number.isFinite(batchSize) || batchSize < 1) {
    console.error(`invalid --batch value ${values.batch}`);
    return 1;
  }

  console.error(`loading ${values.model} (frozen weights, CPU)...`);
  let encoder;
  try {
    encoder = await TransformersClipEncoder.load(values.model);
  } catch (err) {
    console.error(
      `failed to load ${values.model}: ${err instanceof Error ? err.message : err}\n` +
        "the checkpoint is fetched from the Hugging Face hub on first use; " +
        "offline machines need the transformers.js cache pre-seeded",
    );
    return 2;
  }
  const report = await extract(encoder, {
    manifestPath: values.manifest,
    imageRoot: values["image-root"],
    outPath: values.out,
    withFlip: values["with-flip"]!,
    batchSize,
  });
  console.log(
    `wrote ${report.written} records (dim ${report.dim}) to ${values.out}` +
      (report.skippedMissing ? `; skipped ${report.skippedMissing} with missing images` : ""),
  );
  return 0;
}

function runVerify(argv: string[]): number {
  const { values } = parseArgs({
    args: argv,
    options: { data: { type: "string" } },
  });
  if (!values.data) {
    console.error("verify requires --data");
    console.error(USAGE);
    return 1;
  }
  const report = verifyFile(values.data);
  console.log(formatReport(values.data, report));
  return report.ok ? 0 : 1;
}

export async function main(argv: string[]): Promise<number> {
  const [command, ...rest] = argv;
  try {
    switch (command) {
      case "extract":
        return await runExtract(rest);
      case "verify":
        return runVerify(rest);
      case "--help":
      case "-h":
        console.log(USAGE);
        return 0;
      default:
        console.error(USAGE);
        return 1;
    }
  } catch (err) {
    const code = (err as NodeJS.ErrnoException).code ?? "";
    if (typeof code === "string" && code.startsWith("ERR_PARSE_ARGS")) {
      console.error(String((err as Error).message));
      console.error(USAGE);
      return 1;
    }
    console.error(`error: ${err instanceof Error ? err.message : String(err)}`);
    return 2;
  }
}

if (process.argv[1] && import.meta.url === pathToFileURL(process.argv[1]).href) {
  main(process.argv.slice(2)).then((code) => {
    process.exitCode = code;
  });
}
