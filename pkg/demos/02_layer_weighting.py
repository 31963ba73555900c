"""Softmax layer weighting: the aggregation that collapses a layer stack.

Shows the two modes (plain weighted sum vs the extra normalized-last-layer
term), the convexity of the output, and the analytic gradient against a
numerical check.
"""

import numpy as np

from dsu import LayerWeights, layer_norm, softmax_weights, weighted_sum, weighted_sum_grad

rng = np.random.default_rng(1)

print("=== softmax weighting ===")
logits = np.array([0.0, 1.0, -1.0])
w = softmax_weights(logits)
print(f"  logits {logits} -> weights {np.round(w, 4)} (sum {w.sum():.12f})")
print(f"  shift invariance: {np.allclose(w, softmax_weights(logits + 100.0))}")

print("\n=== layer norm of one frame ===")
frame = np.array([1.0, -1.0, 3.0, -3.0])
print(f"  {frame} -> {np.round(layer_norm(frame), 4)}")

print("\n=== aggregating a 3-layer stack (finetuned mode) ===")
layers = rng.standard_normal((3, 4, 5))
weights = LayerWeights(np.array([0.0, 2.0, 0.0]), "finetuned")
out = weighted_sum(layers, weights)
print(f"  output shape {out.shape}")
print(f"  within per-element layer bounds: "
      f"{bool((out <= layers.max(0)).all() and (out >= layers.min(0)).all())}")

print("\n=== pretrained mode adds a normalized copy of the last layer ===")
weights_pre = LayerWeights(np.zeros(4), "pretrained")
out_pre = weighted_sum(layers, weights_pre)
print(f"  weights: {np.round(softmax_weights(weights_pre.log_weights), 3)} "
      f"(last entry scales layer_norm(h_last))")
print(f"  output shape {out_pre.shape}")

print("\n=== analytic gradient vs central differences ===")
upstream = rng.standard_normal((4, 5))
analytic = weighted_sum_grad(layers, weights, upstream)
step = 1e-5
numeric = np.zeros(3)
for i in range(3):
    up = weights.log_weights.copy()
    up[i] += step
    down = weights.log_weights.copy()
    down[i] -= step
    numeric[i] = (
        (weighted_sum(layers, LayerWeights(up, "finetuned")) * upstream).sum()
        - (weighted_sum(layers, LayerWeights(down, "finetuned")) * upstream).sum()
    ) / (2 * step)
print(f"  analytic {np.round(analytic, 6)}")
print(f"  numeric  {np.round(numeric, 6)}")
print(f"  max abs difference {np.abs(analytic - numeric).max():.2e}")
