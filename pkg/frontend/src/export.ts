/**
 * Feature export: run every manifest utterance through a frontend and write
 * the archive plus transcript, duration, and metadata sidecars.
 */

import * as fs from "fs";
import * as path from "path";

import { ArchiveUtterance, buildArchive } from "./archive";
import { BuiltinFrontend, CapturePoint } from "./frontend";
import { readManifest, writeTsv } from "./manifest";
import { readWav, resample } from "./wav";

export interface ExportOptions {
  model: string;
  manifestPath: string;
  mode: "pretrained" | "finetuned";
  outPath: string;
  capture?: CapturePoint;
}

export interface ExportResult {
  archivePath: string;
  transcriptsPath: string;
  durationsPath: string;
  metaPath: string;
  layers: number;
  dim: number;
  utterances: number;
  totalFrames: number;
}

function sidecar(outPath: string, suffix: string): string {
  const parsed = path.parse(outPath);
  return path.join(parsed.dir, `${parsed.name}${suffix}`);
}

export function exportFeatures(options: ExportOptions): ExportResult {
  if (options.mode !== "pretrained" && options.mode !== "finetuned") {
    throw new Error(`mode must be pretrained or finetuned, got ${JSON.stringify(options.mode)}`);
  }
  const frontend = new BuiltinFrontend(options.model, options.capture ?? "post-residual");
  const spec = frontend.spec;
  const entries = readManifest(options.manifestPath);

  const utterances: ArchiveUtterance[] = [];
  const transcripts: [string, string][] = [];
  const durations: [string, string][] = [];
  let totalFrames = 0;
  for (const entry of entries) {
    const audio = resample(readWav(entry.audioPath), spec.sampleRate);
    const { frames, numFrames } = frontend.encode(audio.samples);
    if (numFrames < 1) {
      throw new Error(
        `${entry.uttId}: audio shorter than one analysis window (${spec.windowSamples} samples)`
      );
    }
    utterances.push({ uttId: entry.uttId, numFrames, frames });
    transcripts.push([entry.uttId, entry.transcript]);
    durations.push([entry.uttId, String(audio.samples.length / spec.sampleRate)]);
    totalFrames += numFrames;
  }

  const archive = buildArchive(spec.layers, spec.dim, utterances);
  fs.mkdirSync(path.dirname(path.resolve(options.outPath)), { recursive: true });
  fs.writeFileSync(options.outPath, archive);

  const transcriptsPath = sidecar(options.outPath, ".transcripts.tsv");
  const durationsPath = sidecar(options.outPath, ".durations.tsv");
  writeTsv(transcriptsPath, transcripts);
  writeTsv(durationsPath, durations);

  const metaPath = sidecar(options.outPath, ".meta.json");
  const meta = {
    model: spec.id,
    mode: options.mode,
    capture: frontend.capture,
    backend: "builtin-deterministic",
    layers: spec.layers,
    dim: spec.dim,
    sample_rate: spec.sampleRate,
    stride_samples: spec.strideSamples,
    window_samples: spec.windowSamples,
    frame_seconds: spec.strideSamples / spec.sampleRate,
    // pretrained-mode aggregation recomputes layer norm itself; the builtin
    // backend has no trained norm parameters to forward
    final_norm_params: null,
  };
  fs.writeFileSync(metaPath, JSON.stringify(meta, null, 2) + "\n", "utf-8");

  return {
    archivePath: options.outPath,
    transcriptsPath,
    durationsPath,
    metaPath,
    layers: spec.layers,
    dim: spec.dim,
    utterances: utterances.length,
    totalFrames,
  };
}
