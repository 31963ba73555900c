/** Manifest and sidecar I/O: tab-separated UTF-8 lines keyed by utt_id. */

import * as fs from "fs";

export interface ManifestEntry {
  uttId: string;
  audioPath: string;
  transcript: string;
}

export function readManifest(path: string): ManifestEntry[] {
  const text = fs.readFileSync(path, "utf-8");
  const entries: ManifestEntry[] = [];
  const seen = new Set<string>();
  text.split("\n").forEach((line, index) => {
    if (!line) {
      return;
    }
    const parts = line.split("\t");
    if (parts.length !== 3) {
      throw new Error(`manifest line ${index + 1}: expected utt_id<TAB>audio_path<TAB>transcript`);
    }
    const [uttId, audioPath, transcript] = parts;
    if (!uttId) {
      throw new Error(`manifest line ${index + 1}: empty utt_id`);
    }
    if (seen.has(uttId)) {
      throw new Error(`manifest line ${index + 1}: duplicate utt_id ${JSON.stringify(uttId)}`);
    }
    seen.add(uttId);
    entries.push({ uttId, audioPath, transcript });
  });
  return entries;
}

export function writeTsv(path: string, rows: [string, string][]): void {
  fs.writeFileSync(path, rows.map(([key, value]) => `${key}\t${value}\n`).join(""), "utf-8");
}
