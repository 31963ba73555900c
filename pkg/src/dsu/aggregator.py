"""Softmax-weighted aggregation of layer features.

Collapses a stack of per-layer frame features into one sequence using
softmax-normalized trainable logits, one per layer. In "pretrained" mode a
layer-normalized copy of the last layer joins the sum as an extra term with
its own weight; in "finetuned" mode only the plain layers participate.
Gradients with respect to the logits are analytic (softmax Jacobian chained
with per-layer inner products); the normalization scale/shift are constants.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import FormatError, ValidationError

MODES = ("pretrained", "finetuned")
DEFAULT_NORM_EPS = 1e-5


def softmax_weights(log_weights) -> np.ndarray:
    """Softmax with max-subtraction; returns strictly positive weights summing to 1."""
    logits = np.asarray(log_weights, dtype=np.float64)
    if logits.ndim != 1 or logits.size == 0:
        raise ValueError("log_weights must be a non-empty 1-d vector")
    if not np.all(np.isfinite(logits)):
        raise ValueError("log_weights must be finite")
    shifted = np.exp(logits - logits.max())
    return shifted / shifted.sum()


def layer_norm(frames, scale=None, shift=None, eps: float = DEFAULT_NORM_EPS) -> np.ndarray:
    """Normalize each frame to zero mean / unit variance over its components.

    *frames* is (..., D); mean and population variance are taken over the last
    axis, then the affine scale/shift (defaults 1 and 0) is applied.
    """
    h = np.asarray(frames, dtype=np.float64)
    if h.shape[-1] < 1:
        raise ValueError("feature dimension must be >= 1")
    if eps <= 0:
        raise ValueError("eps must be positive")
    mean = h.mean(axis=-1, keepdims=True)
    var = h.var(axis=-1, keepdims=True)
    out = (h - mean) / np.sqrt(var + eps)
    if scale is not None:
        out = out * np.asarray(scale, dtype=np.float64)
    if shift is not None:
        out = out + np.asarray(shift, dtype=np.float64)
    return out


@dataclass(frozen=True)
class LayerWeights:
    """Trainable per-layer logits plus the mode flag and LN constants.

    ``log_weights`` has one entry per layer in finetuned mode and one extra
    trailing entry (for the normalized last layer) in pretrained mode.
    ``norm_scale``/``norm_shift`` default to 1/0 when None.
    """

    log_weights: np.ndarray
    mode: str
    norm_scale: np.ndarray | None = None
    norm_shift: np.ndarray | None = None
    norm_eps: float = DEFAULT_NORM_EPS

    def __post_init__(self):
        if self.mode not in MODES:
            raise ValidationError(f"mode must be one of {MODES}, got {self.mode!r}")
        logits = np.asarray(self.log_weights, dtype=np.float64).copy()
        if logits.ndim != 1 or logits.size == 0:
            raise ValidationError("log_weights must be a non-empty 1-d vector")
        if self.mode == "pretrained" and logits.size < 2:
            raise ValidationError("pretrained mode needs at least 2 weight entries")
        if not np.all(np.isfinite(logits)):
            raise ValidationError("log_weights must be finite")
        if self.norm_eps <= 0:
            raise ValidationError("norm_eps must be positive")
        logits.flags.writeable = False
        object.__setattr__(self, "log_weights", logits)
        for name in ("norm_scale", "norm_shift"):
            value = getattr(self, name)
            if value is not None:
                arr = np.asarray(value, dtype=np.float64).copy()
                arr.flags.writeable = False
                object.__setattr__(self, name, arr)

    @property
    def num_layers(self) -> int:
        return self.log_weights.size - 1 if self.mode == "pretrained" else self.log_weights.size

    def normalized(self) -> np.ndarray:
        return softmax_weights(self.log_weights)


def _effective_layers(layers, weights: LayerWeights) -> np.ndarray:
    """Stack the raw layers plus, in pretrained mode, the normalized last layer."""
    stack = np.asarray(layers, dtype=np.float64)
    if stack.ndim != 3:
        raise ValueError(f"layers must be (L, T, D), got shape {stack.shape}")
    if stack.shape[0] != weights.num_layers:
        raise ValueError(
            f"got {stack.shape[0]} layers but weights describe {weights.num_layers}"
        )
    if weights.mode == "pretrained":
        extra = layer_norm(stack[-1], weights.norm_scale, weights.norm_shift, weights.norm_eps)
        stack = np.concatenate([stack, extra[None]], axis=0)
    return stack


def weighted_sum(layers, weights: LayerWeights) -> np.ndarray:
    """Combine (L, T, D) layer features into a (T, D) sequence."""
    stack = _effective_layers(layers, weights)
    w = softmax_weights(weights.log_weights)
    return np.einsum("l,ltd->td", w, stack)


def weighted_sum_grad(layers, weights: LayerWeights, upstream_grad) -> np.ndarray:
    """Gradient of sum(upstream_grad * weighted_sum(layers)) wrt the logits."""
    stack = _effective_layers(layers, weights)
    up = np.asarray(upstream_grad, dtype=np.float64)
    if up.shape != stack.shape[1:]:
        raise ValueError(f"upstream_grad shape {up.shape} != output shape {stack.shape[1:]}")
    w = softmax_weights(weights.log_weights)
    inner = np.einsum("ltd,td->l", stack, up)
    return w * (inner - float(w @ inner))


def save_weights(weights: LayerWeights, dest) -> None:
    """Persist as three text lines: mode, eps, space-separated logits."""
    lines = [
        f"mode={weights.mode}",
        f"eps={float(weights.norm_eps)!r}",
        " ".join(repr(float(x)) for x in weights.log_weights),
    ]
    text = "\n".join(lines) + "\n"
    if isinstance(dest, (str, Path)):
        Path(dest).write_text(text, encoding="utf-8")
    else:
        dest.write(text)


def load_weights(source) -> LayerWeights:
    if isinstance(source, (str, Path)):
        text = Path(source).read_text(encoding="utf-8")
    else:
        text = source.read()
    lines = text.splitlines()
    if len(lines) < 3 or not lines[0].startswith("mode=") or not lines[1].startswith("eps="):
        raise FormatError("weights file must have mode=, eps=, and a logit line")
    mode = lines[0][len("mode="):]
    try:
        eps = float(lines[1][len("eps="):])
        logits = np.array([float(tok) for tok in lines[2].split()], dtype=np.float64)
    except ValueError as exc:
        raise FormatError(f"unparseable weights file: {exc}") from exc
    try:
        return LayerWeights(logits, mode, norm_eps=eps)
    except ValidationError as exc:
        raise FormatError(str(exc)) from exc
