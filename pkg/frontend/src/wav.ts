/**
 * Minimal RIFF/WAVE reading: PCM16 and IEEE float32, any channel count
 * (averaged to mono), plus a linear resampler so any input rate can feed a
 * fixed-rate frontend.
 */

import * as fs from "fs";

export interface MonoAudio {
  samples: Float64Array;
  sampleRate: number;
}

export function readWav(path: string): MonoAudio {
  return parseWav(fs.readFileSync(path));
}

export function parseWav(data: Buffer): MonoAudio {
  if (data.length < 12 || data.toString("ascii", 0, 4) !== "RIFF" || data.toString("ascii", 8, 12) !== "WAVE") {
    throw new Error("not a RIFF/WAVE file");
  }
  let format = 0;
  let channels = 0;
  let sampleRate = 0;
  let bitsPerSample = 0;
  let dataChunk: Buffer | null = null;

  let at = 12;
  while (at + 8 <= data.length) {
    const chunkId = data.toString("ascii", at, at + 4);
    const chunkSize = data.readUInt32LE(at + 4);
    const body = at + 8;
    if (body + chunkSize > data.length) {
      throw new Error(`truncated ${chunkId.trim()} chunk`);
    }
    if (chunkId === "fmt ") {
      format = data.readUInt16LE(body);
      channels = data.readUInt16LE(body + 2);
      sampleRate = data.readUInt32LE(body + 4);
      bitsPerSample = data.readUInt16LE(body + 14);
    } else if (chunkId === "data") {
      dataChunk = data.subarray(body, body + chunkSize);
    }
    at = body + chunkSize + (chunkSize % 2); // chunks are word-aligned
  }
  if (!channels || !sampleRate || !dataChunk) {
    throw new Error("missing fmt or data chunk");
  }

  let interleaved: Float64Array;
  if (format === 1 && bitsPerSample === 16) {
    const count = Math.floor(dataChunk.length / 2);
    interleaved = new Float64Array(count);
    for (let i = 0; i < count; i++) {
      interleaved[i] = dataChunk.readInt16LE(i * 2) / 32768;
    }
  } else if (format === 3 && bitsPerSample === 32) {
    const count = Math.floor(dataChunk.length / 4);
    interleaved = new Float64Array(count);
    for (let i = 0; i < count; i++) {
      interleaved[i] = dataChunk.readFloatLE(i * 4);
    }
  } else {
    throw new Error(`unsupported WAV encoding: format ${format}, ${bitsPerSample} bits`);
  }

  const frames = Math.floor(interleaved.length / channels);
  const mono = new Float64Array(frames);
  for (let t = 0; t < frames; t++) {
    let sum = 0;
    for (let c = 0; c < channels; c++) {
      sum += interleaved[t * channels + c];
    }
    mono[t] = sum / channels;
  }
  return { samples: mono, sampleRate };
}

/** Linear-interpolation resampling; identity when rates already match. */
export function resample(audio: MonoAudio, targetRate: number): MonoAudio {
  if (audio.sampleRate === targetRate) {
    return audio;
  }
  if (audio.sampleRate <= 0 || targetRate <= 0) {
    throw new Error("sample rates must be positive");
  }
  const ratio = audio.sampleRate / targetRate;
  const outLength = Math.max(1, Math.floor(audio.samples.length / ratio));
  const out = new Float64Array(outLength);
  for (let i = 0; i < outLength; i++) {
    const position = i * ratio;
    const left = Math.floor(position);
    const right = Math.min(left + 1, audio.samples.length - 1);
    const frac = position - left;
    out[i] = audio.samples[left] * (1 - frac) + audio.samples[right] * frac;
  }
  return { samples: out, sampleRate: targetRate };
}

/** PCM16 writer, used by the tests to fabricate inputs. */
export function writeWavPcm16(path: string, samples: Float64Array | number[], sampleRate: number): void {
  const count = samples.length;
  const data = Buffer.alloc(44 + count * 2);
  data.write("RIFF", 0, "ascii");
  data.writeUInt32LE(36 + count * 2, 4);
  data.write("WAVE", 8, "ascii");
  data.write("fmt ", 12, "ascii");
  data.writeUInt32LE(16, 16);
  data.writeUInt16LE(1, 20); // PCM
  data.writeUInt16LE(1, 22); // mono
  data.writeUInt32LE(sampleRate, 24);
  data.writeUInt32LE(sampleRate * 2, 28);
  data.writeUInt16LE(2, 32);
  data.writeUInt16LE(16, 34);
  data.write("data", 36, "ascii");
  data.writeUInt32LE(count * 2, 40);
  for (let i = 0; i < count; i++) {
    const clamped = Math.max(-1, Math.min(1, samples[i]));
    data.writeInt16LE(Math.round(clamped * 32767), 44 + i * 2);
  }
  fs.writeFileSync(path, data);
}
