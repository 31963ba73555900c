"""Alignment-free sequence loss over blank-augmented label paths.

The loss is the negative log probability of a label sequence under the
per-frame softmax, summed over every frame-level path that collapses to the
target (repeats merged, blanks dropped). The forward DP runs entirely in log
space; the gradient comes from forward-backward posteriors and is exact with
respect to the raw logits. Targets that need more frames than available are
an error, never an infinite loss.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .errors import InfeasibleTargetError, ValidationError

BLANK_ID = 0


@dataclass(frozen=True)
class LabelVocab:
    """Output alphabet: blank at index 0, then one character per symbol."""

    symbols: tuple[str, ...]

    def __post_init__(self):
        object.__setattr__(self, "symbols", tuple(self.symbols))
        if len(set(self.symbols)) != len(self.symbols):
            raise ValidationError("vocab symbols must be unique")
        for sym in self.symbols:
            if len(sym) != 1:
                raise ValidationError(f"vocab symbols must be single characters, got {sym!r}")

    @classmethod
    def from_transcripts(cls, texts: Iterable[str]) -> "LabelVocab":
        chars = sorted({ch for text in texts for ch in text})
        if not chars:
            raise ValueError("cannot build a vocab from empty transcripts")
        return cls(tuple(chars))

    @property
    def size(self) -> int:
        """Vocabulary size including the blank."""
        return len(self.symbols) + 1

    def encode(self, text: str) -> list[int]:
        try:
            index = {ch: i + 1 for i, ch in enumerate(self.symbols)}
            return [index[ch] for ch in text]
        except KeyError as exc:
            raise ValueError(f"character {exc.args[0]!r} not in vocab") from exc

    def decode(self, labels: Sequence[int]) -> str:
        out = []
        for label in labels:
            if not 1 <= label < self.size:
                raise ValueError(f"label {label} outside [1, {self.size - 1}]")
            out.append(self.symbols[label - 1])
        return "".join(out)


def min_frames(target: Sequence[int]) -> int:
    """Shortest frame count a target can align to: length plus repeated-pair blanks."""
    repeats = sum(1 for a, b in zip(target, target[1:]) if a == b)
    return len(target) + repeats


def _check_inputs(logits, target) -> tuple[np.ndarray, list[int]]:
    scores = np.asarray(logits, dtype=np.float64)
    if scores.ndim != 2 or scores.shape[0] < 1 or scores.shape[1] < 2:
        raise ValueError(f"logits must be (T>=1, V>=2), got shape {scores.shape}")
    if not np.all(np.isfinite(scores)):
        raise ValueError("logits must be finite")
    vocab_size = scores.shape[1]
    labels = [int(t) for t in target]
    for label in labels:
        if not 1 <= label < vocab_size:
            raise ValueError(f"target label {label} outside [1, {vocab_size - 1}]")
    if scores.shape[0] < min_frames(labels):
        raise InfeasibleTargetError(
            f"target needs >= {min_frames(labels)} frames, got {scores.shape[0]}"
        )
    return scores, labels


def _log_softmax(scores: np.ndarray) -> np.ndarray:
    shifted = scores - scores.max(axis=1, keepdims=True)
    return shifted - np.log(np.exp(shifted).sum(axis=1, keepdims=True))


def _extend(target: Sequence[int]) -> np.ndarray:
    ext = np.full(2 * len(target) + 1, BLANK_ID, dtype=np.int64)
    ext[1::2] = target
    return ext


def _skip_allowed(ext: np.ndarray) -> np.ndarray:
    allowed = np.zeros(ext.size, dtype=bool)
    if ext.size > 2:
        allowed[2:] = (ext[2:] != BLANK_ID) & (ext[2:] != ext[:-2])
    return allowed


def _forward(log_probs: np.ndarray, ext: np.ndarray, allowed: np.ndarray) -> np.ndarray:
    num_frames = log_probs.shape[0]
    num_states = ext.size
    emit = log_probs[:, ext]
    alpha = np.full((num_frames, num_states), -np.inf)
    alpha[0, 0] = emit[0, 0]
    if num_states > 1:
        alpha[0, 1] = emit[0, 1]
    for t in range(1, num_frames):
        acc = alpha[t - 1].copy()
        acc[1:] = np.logaddexp(acc[1:], alpha[t - 1, :-1])
        if num_states > 2:
            acc[2:] = np.where(
                allowed[2:], np.logaddexp(acc[2:], alpha[t - 1, :-2]), acc[2:]
            )
        alpha[t] = acc + emit[t]
    return alpha


def _backward(log_probs: np.ndarray, ext: np.ndarray, allowed: np.ndarray) -> np.ndarray:
    num_frames = log_probs.shape[0]
    num_states = ext.size
    emit = log_probs[:, ext]
    beta = np.full((num_frames, num_states), -np.inf)
    beta[-1, -1] = 0.0
    if num_states > 1:
        beta[-1, -2] = 0.0
    for t in range(num_frames - 2, -1, -1):
        incoming = beta[t + 1] + emit[t + 1]
        acc = incoming.copy()
        acc[:-1] = np.logaddexp(acc[:-1], incoming[1:])
        if num_states > 2:
            acc[:-2] = np.where(
                allowed[2:], np.logaddexp(acc[:-2], incoming[2:]), acc[:-2]
            )
        beta[t] = acc
    return beta


def _final_log_prob(alpha: np.ndarray) -> float:
    if alpha.shape[1] > 1:
        return float(np.logaddexp(alpha[-1, -1], alpha[-1, -2]))
    return float(alpha[-1, -1])


def ctc_loss(logits, target: Sequence[int]) -> float:
    """Negative log probability of *target* given raw per-frame scores."""
    scores, labels = _check_inputs(logits, target)
    log_probs = _log_softmax(scores)
    ext = _extend(labels)
    allowed = _skip_allowed(ext)
    alpha = _forward(log_probs, ext, allowed)
    return -_final_log_prob(alpha)


def ctc_grad(logits, target: Sequence[int]) -> np.ndarray:
    """Gradient of ctc_loss with respect to the raw logits, shape (T, V)."""
    scores, labels = _check_inputs(logits, target)
    log_probs = _log_softmax(scores)
    ext = _extend(labels)
    allowed = _skip_allowed(ext)
    alpha = _forward(log_probs, ext, allowed)
    beta = _backward(log_probs, ext, allowed)
    total = _final_log_prob(alpha)
    state_post = np.exp(alpha + beta - total)
    label_post = np.zeros_like(scores)
    # scatter-add state posteriors onto their emitting labels
    np.add.at(label_post, (slice(None), ext), state_post)
    return np.exp(log_probs) - label_post


def greedy_decode(logits) -> list[int]:
    """Per-frame argmax (lowest index on ties), collapse repeats, drop blanks."""
    scores = np.asarray(logits, dtype=np.float64)
    if scores.ndim != 2 or scores.shape[1] < 1:
        raise ValueError(f"logits must be 2-d, got shape {scores.shape}")
    if not np.all(np.isfinite(scores)):
        raise ValueError("logits must be finite")
    path = scores.argmax(axis=1)
    out = []
    previous = -1
    for label in path:
        if label != previous and label != BLANK_ID:
            out.append(int(label))
        previous = label
    return out
