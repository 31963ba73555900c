"""Stage 1 on a planted-layer corpus: the trainer must discover which layer
carries the class information.

Only layer 2 of 4 encodes the symbols; the other layers are noise. After
training, the softmax weight of layer 2 should dominate and the continuous
probe should transcribe the held-out utterances.
"""

import numpy as np

from dsu import (
    SynthSpec,
    TrainConfig,
    evaluate_continuous,
    softmax_weights,
    synth_generate,
    train_stage1,
)

spec = SynthSpec(
    num_classes=4,
    num_layers=4,
    planted_layer=2,
    feature_dim=8,
    frames_per_symbol=3,
    noise_sigma=0.1,
    num_utts=220,
    min_symbols=4,
    max_symbols=10,
    seed=42,
)
archive, texts = synth_generate(spec)
ids = [u.utt_id for u in archive]
train_archive = archive.subset(ids[:180])
test_archive = archive.subset(ids[180:])
print(f"corpus: {len(archive)} utterances, planted layer {spec.planted_layer} of {spec.num_layers}")

config = TrainConfig(
    learning_rate=1e-2, weight_learning_rate=5e-2, epochs=40, batch_size=8, seed=0
)
weights, probe, history = train_stage1(train_archive, texts, "finetuned", config)

print("\nper-epoch loss (every 5th):")
for epoch in range(0, len(history), 5):
    print(f"  epoch {epoch:3d}: {history[epoch]:.4f}")

w = softmax_weights(weights.log_weights)
print("\nlearned layer weights:")
for i, value in enumerate(w, 1):
    marker = " <- planted" if i == spec.planted_layer else ""
    print(f"  layer {i}: {value:.4f} {'#' * int(60 * value)}{marker}")

cer = evaluate_continuous(weights, probe, test_archive, texts)
print(f"\nheld-out continuous CER: {cer:.3f}%")
sample = test_archive.utterances[0]
print(f"sample reference: {texts[sample.utt_id]}")
