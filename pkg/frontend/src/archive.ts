/**
 * Writer for the binary feature-archive format the pipeline consumes.
 *
 * Layout (little-endian):
 *   magic "DSUA" | version u32=1 | layers u32 | dim u32 | count u32
 *   index per utterance: id_len u16 | id UTF-8 | frames u32 | offset u64
 *   payload per utterance: layers*frames*dim float32, layer-major
 * Offsets are absolute file positions.
 */

export const MAGIC = "DSUA";
export const VERSION = 1;

export interface ArchiveUtterance {
  uttId: string;
  numFrames: number;
  frames: Float32Array; // layers * numFrames * dim, layer-major
}

export function buildArchive(layers: number, dim: number, utterances: ArchiveUtterance[]): Buffer {
  if (layers < 1 || dim < 1) {
    throw new Error("layers and dim must be >= 1");
  }
  const seen = new Set<string>();
  const ids: Buffer[] = [];
  for (const utt of utterances) {
    if (!utt.uttId || /[\t\n\r]/.test(utt.uttId)) {
      throw new Error(`bad utt_id ${JSON.stringify(utt.uttId)}`);
    }
    if (seen.has(utt.uttId)) {
      throw new Error(`duplicate utt_id ${JSON.stringify(utt.uttId)}`);
    }
    seen.add(utt.uttId);
    if (utt.numFrames < 1) {
      throw new Error(`${utt.uttId}: utterances need at least one frame`);
    }
    if (utt.frames.length !== layers * utt.numFrames * dim) {
      throw new Error(
        `${utt.uttId}: expected ${layers * utt.numFrames * dim} values, got ${utt.frames.length}`
      );
    }
    for (let i = 0; i < utt.frames.length; i++) {
      if (!Number.isFinite(utt.frames[i])) {
        throw new Error(`${utt.uttId}: non-finite feature value at index ${i}`);
      }
    }
    ids.push(Buffer.from(utt.uttId, "utf-8"));
  }

  const headerSize = 4 + 16;
  let indexSize = 0;
  for (const id of ids) {
    indexSize += 2 + id.length + 4 + 8;
  }
  let payloadSize = 0;
  for (const utt of utterances) {
    payloadSize += utt.frames.length * 4;
  }

  const out = Buffer.alloc(headerSize + indexSize + payloadSize);
  out.write(MAGIC, 0, "ascii");
  out.writeUInt32LE(VERSION, 4);
  out.writeUInt32LE(layers, 8);
  out.writeUInt32LE(dim, 12);
  out.writeUInt32LE(utterances.length, 16);

  let at = headerSize;
  let offset = headerSize + indexSize;
  utterances.forEach((utt, i) => {
    out.writeUInt16LE(ids[i].length, at);
    at += 2;
    ids[i].copy(out, at);
    at += ids[i].length;
    out.writeUInt32LE(utt.numFrames, at);
    at += 4;
    out.writeBigUInt64LE(BigInt(offset), at);
    at += 8;
    offset += utt.frames.length * 4;
  });

  for (const utt of utterances) {
    for (let i = 0; i < utt.frames.length; i++) {
      out.writeFloatLE(utt.frames[i], at);
      at += 4;
    }
  }
  return out;
}

export interface ArchiveHeader {
  layers: number;
  dim: number;
  utterances: { uttId: string; numFrames: number; offset: bigint }[];
}

/** Parse just the header and index; enough for geometry checks. */
export function readArchiveHeader(data: Buffer): ArchiveHeader {
  if (data.length < 20 || data.toString("ascii", 0, 4) !== MAGIC) {
    throw new Error("bad archive magic");
  }
  const version = data.readUInt32LE(4);
  if (version !== VERSION) {
    throw new Error(`unsupported archive version ${version}`);
  }
  const layers = data.readUInt32LE(8);
  const dim = data.readUInt32LE(12);
  const count = data.readUInt32LE(16);
  const utterances: ArchiveHeader["utterances"] = [];
  let at = 20;
  for (let i = 0; i < count; i++) {
    const idLen = data.readUInt16LE(at);
    at += 2;
    const uttId = data.toString("utf-8", at, at + idLen);
    at += idLen;
    const numFrames = data.readUInt32LE(at);
    at += 4;
    const offset = data.readBigUInt64LE(at);
    at += 8;
    utterances.push({ uttId, numFrames, offset });
  }
  return { layers, dim, utterances };
}
