#!/usr/bin/env node
/**
 * dsu-export: run a manifest of audio files through a frontend model and
 * write a feature archive plus transcript/duration sidecars.
 *
 * Usage:
 *   dsu-export --model xlsr-300m --manifest data.tsv --mode pretrained --out features.dsua
 *   dsu-export --list-models
 */

import { listModels } from "./frontend";
import { exportFeatures } from "./export";

function parseArgs(argv: string[]): Map<string, string | boolean> {
  const args = new Map<string, string | boolean>();
  for (let i = 0; i < argv.length; i++) {
    const token = argv[i];
    if (!token.startsWith("--")) {
      throw new Error(`unexpected argument ${JSON.stringify(token)}`);
    }
    const key = token.slice(2);
    if (key === "list-models" || key === "help") {
      args.set(key, true);
      continue;
    }
    const value = argv[i + 1];
    if (value === undefined || value.startsWith("--")) {
      throw new Error(`missing value for --${key}`);
    }
    args.set(key, value);
    i++;
  }
  return args;
}

function usage(): string {
  return [
    "usage: dsu-export --model NAME --manifest PATH --mode pretrained|finetuned --out PATH",
    "                  [--capture post-residual|pre-residual]",
    "       dsu-export --list-models",
    "",
    "manifest: UTF-8 lines of utt_id<TAB>audio_path<TAB>transcript",
    `models: ${listModels().join(", ")}`,
  ].join("\n");
}

export function main(argv: string[]): number {
  let args: Map<string, string | boolean>;
  try {
    args = parseArgs(argv);
  } catch (error) {
    console.error(`error: ${(error as Error).message}`);
    console.error(usage());
    return 2;
  }
  if (args.get("help")) {
    console.log(usage());
    return 0;
  }
  if (args.get("list-models")) {
    for (const model of listModels()) {
      console.log(model);
    }
    return 0;
  }
  for (const required of ["model", "manifest", "mode", "out"]) {
    if (!args.has(required)) {
      console.error(`error: --${required} is required`);
      console.error(usage());
      return 2;
    }
  }
  const capture = (args.get("capture") as string | undefined) ?? "post-residual";
  if (capture !== "post-residual" && capture !== "pre-residual") {
    console.error(`error: bad --capture ${JSON.stringify(capture)}`);
    return 2;
  }
  try {
    const result = exportFeatures({
      model: args.get("model") as string,
      manifestPath: args.get("manifest") as string,
      mode: args.get("mode") as "pretrained" | "finetuned",
      outPath: args.get("out") as string,
      capture,
    });
    console.log(
      `wrote ${result.utterances} utterances (${result.layers} layers x dim ${result.dim}, ` +
        `${result.totalFrames} frames) to ${result.archivePath}`
    );
    console.log(`transcripts: ${result.transcriptsPath}`);
    console.log(`durations: ${result.durationsPath}`);
    console.log(`meta: ${result.metaPath}`);
    return 0;
  } catch (error) {
    console.error(`error: ${(error as Error).message}`);
    return 1;
  }
}

if (require.main === module) {
  process.exit(main(process.argv.slice(2)));
}
