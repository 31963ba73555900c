"""From continuous features to discrete units: quantize, de-duplicate, merge.

Runs k-means on aggregated features of a planted corpus, converts frames to
unit streams, and shows how de-duplication and pair merging trade vocabulary
size against stream length, measured as fixed-width bits per second.
"""

import numpy as np

from dsu import (
    KmeansConfig,
    LayerWeights,
    SynthSpec,
    assign,
    bitrate,
    bpe_encode,
    bpe_train,
    dedup,
    kmeans_train,
    synth_generate,
    weighted_sum,
)

spec = SynthSpec(
    num_classes=4,
    num_layers=2,
    planted_layer=1,
    feature_dim=8,
    frames_per_symbol=3,
    noise_sigma=0.1,
    num_utts=120,
    min_symbols=4,
    max_symbols=10,
    seed=9,
)
archive, texts = synth_generate(spec)
weights = LayerWeights(np.array([4.0, -4.0]), "finetuned")  # favor the planted layer
aggregated = {u.utt_id: weighted_sum(u.frames.astype(np.float64), weights) for u in archive}

print("=== k-means codebook (K=8) on aggregated frames ===")
frames = np.concatenate(list(aggregated.values()))
codebook, history = kmeans_train(frames, KmeansConfig(num_units=8, seed=1))
print(f"  {frames.shape[0]} frames, distortion {history[0]:.1f} -> {history[-1]:.1f} "
      f"in {len(history) - 1} iterations")

streams = {utt_id: [int(x) for x in assign(feats, codebook)] for utt_id, feats in aggregated.items()}
sample_id = archive.utterances[0].utt_id
print(f"\n  transcript : {texts[sample_id]}")
print(f"  raw units  : {streams[sample_id]}")
print(f"  de-duped   : {dedup(streams[sample_id])}")

print("\n=== pair merges over de-duplicated streams ===")
deduped = {utt_id: dedup(units) for utt_id, units in streams.items()}
model = bpe_train(list(deduped.values()), num_merges=8, base_vocab_size=8)
print(f"  merges learned: {model.merges}")
merged = {utt_id: bpe_encode(units, model) for utt_id, units in deduped.items()}
print(f"  merged sample: {merged[sample_id]}")

print("\n=== fixed-width bitrate (20 ms frames) ===")
total_seconds = sum(u.num_frames for u in archive) * 0.02
for name, corpus, vocab in (
    ("raw units ", streams, 8),
    ("de-duped  ", deduped, 8),
    ("merged    ", merged, model.vocab_size),
):
    tokens = sum(len(units) for units in corpus.values())
    rate = bitrate(list(corpus.values()), vocab, total_seconds)
    print(f"  {name}: {tokens:5d} tokens, vocab {vocab:2d} -> {rate:7.1f} bit/s")
