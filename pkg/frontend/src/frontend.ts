/**
 * Frontend models: a registry of encoder geometries plus a deterministic
 * built-in feature computation.
 *
 * Real checkpoints are not bundled; instead each model id maps to its
 * documented geometry (encoder block count, hidden dim, frame stride) and the
 * built-in backend synthesizes layer features as a fixed pseudo-random mixing
 * of short-time DCT coefficients. That keeps exports byte-reproducible and
 * geometry-faithful, and the FrontendBackend interface is the seam where a
 * checkpoint-backed implementation slots in.
 */

export interface FrontendSpec {
  id: string;
  layers: number;
  dim: number;
  sampleRate: number;
  windowSamples: number;
  strideSamples: number;
}

export type CapturePoint = "post-residual" | "pre-residual";

const REGISTRY: Record<string, FrontendSpec> = {
  // wav2vec2-style multilingual encoder: 24 blocks, hidden 1024, 20 ms hop
  "xlsr-300m": {
    id: "xlsr-300m",
    layers: 24,
    dim: 1024,
    sampleRate: 16000,
    windowSamples: 400,
    strideSamples: 320,
  },
  // large speech encoder: 32 blocks, hidden 1280, 20 ms hop
  "whisper-large-v3": {
    id: "whisper-large-v3",
    layers: 32,
    dim: 1280,
    sampleRate: 16000,
    windowSamples: 400,
    strideSamples: 320,
  },
  // tiny geometry for fast tests
  "test-tiny": {
    id: "test-tiny",
    layers: 2,
    dim: 8,
    sampleRate: 16000,
    windowSamples: 400,
    strideSamples: 320,
  },
};

export function listModels(): string[] {
  return Object.keys(REGISTRY).sort();
}

export function lookupModel(id: string): FrontendSpec {
  const spec = REGISTRY[id];
  if (!spec) {
    throw new Error(`unknown model ${JSON.stringify(id)}; known: ${listModels().join(", ")}`);
  }
  return spec;
}

export function frameCount(numSamples: number, spec: FrontendSpec): number {
  if (numSamples < spec.windowSamples) {
    return 0;
  }
  return Math.floor((numSamples - spec.windowSamples) / spec.strideSamples) + 1;
}

// -- deterministic pseudo-random generation --------------------------------

function fnv1a(text: string): number {
  let hash = 0x811c9dc5;
  for (let i = 0; i < text.length; i++) {
    hash ^= text.charCodeAt(i);
    hash = Math.imul(hash, 0x01000193);
  }
  return hash >>> 0;
}

function mulberry32(seed: number): () => number {
  let state = seed >>> 0;
  return () => {
    state = (state + 0x6d2b79f5) >>> 0;
    let z = state;
    z = Math.imul(z ^ (z >>> 15), z | 1);
    z ^= z + Math.imul(z ^ (z >>> 7), z | 61);
    return ((z ^ (z >>> 14)) >>> 0) / 4294967296;
  };
}

const NUM_BASIS = 48;

function dctBasis(windowSamples: number): Float64Array {
  const basis = new Float64Array(NUM_BASIS * windowSamples);
  for (let k = 0; k < NUM_BASIS; k++) {
    for (let n = 0; n < windowSamples; n++) {
      basis[k * windowSamples + n] = Math.cos((Math.PI * k * (n + 0.5)) / windowSamples);
    }
  }
  return basis;
}

/**
 * Built-in deterministic backend.
 *
 * Per frame it takes NUM_BASIS DCT-II coefficients of the analysis window,
 * then each layer mixes them through its own fixed pseudo-random projection
 * (seeded by model id and layer index). Output is float32, layer-major:
 * frames[l * T * D + t * D + d].
 */
export class BuiltinFrontend {
  readonly spec: FrontendSpec;
  readonly capture: CapturePoint;
  private readonly basis: Float64Array;
  private readonly mixes: Float64Array[];

  constructor(modelId: string, capture: CapturePoint = "post-residual") {
    this.spec = lookupModel(modelId);
    this.capture = capture;
    this.basis = dctBasis(this.spec.windowSamples);
    this.mixes = [];
    for (let layer = 0; layer < this.spec.layers; layer++) {
      // the capture flag is recorded in run metadata; the built-in backend
      // has no residual stream, so both capture points mix identically
      const rand = mulberry32(fnv1a(`${modelId}/layer${layer}`));
      const mix = new Float64Array(this.spec.dim * NUM_BASIS);
      for (let i = 0; i < mix.length; i++) {
        mix[i] = (rand() * 2 - 1) / Math.sqrt(NUM_BASIS);
      }
      this.mixes.push(mix);
    }
  }

  /** Compute (layers * frames * dim) float32 features for mono audio at the model rate. */
  encode(samples: Float64Array): { frames: Float32Array; numFrames: number } {
    const { layers, dim, windowSamples, strideSamples } = this.spec;
    const numFrames = frameCount(samples.length, this.spec);
    const coefficients = new Float64Array(numFrames * NUM_BASIS);
    for (let t = 0; t < numFrames; t++) {
      const start = t * strideSamples;
      for (let k = 0; k < NUM_BASIS; k++) {
        let acc = 0;
        const row = k * windowSamples;
        for (let n = 0; n < windowSamples; n++) {
          acc += samples[start + n] * this.basis[row + n];
        }
        coefficients[t * NUM_BASIS + k] = acc / Math.sqrt(windowSamples);
      }
    }

    const out = new Float32Array(layers * numFrames * dim);
    for (let layer = 0; layer < layers; layer++) {
      const mix = this.mixes[layer];
      const layerBase = layer * numFrames * dim;
      for (let t = 0; t < numFrames; t++) {
        const coefBase = t * NUM_BASIS;
        const frameBase = layerBase + t * dim;
        for (let d = 0; d < dim; d++) {
          let acc = 0;
          const mixBase = d * NUM_BASIS;
          for (let k = 0; k < NUM_BASIS; k++) {
            acc += mix[mixBase + k] * coefficients[coefBase + k];
          }
          out[frameBase + d] = Math.fround(acc);
        }
      }
    }
    return { frames: out, numFrames };
  }
}
