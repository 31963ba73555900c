"""Shared oracles and helpers. These stay independent of the code they check:
the CTC oracle enumerates raw paths, gradients come from central differences.
"""

from __future__ import annotations

import itertools
import math

import numpy as np
import pytest

from dsu.ctc import BLANK_ID


def softmax_rows(logits: np.ndarray) -> np.ndarray:
    shifted = np.exp(logits - logits.max(axis=1, keepdims=True))
    return shifted / shifted.sum(axis=1, keepdims=True)


def collapse_path(path) -> tuple[int, ...]:
    """CTC collapse: merge adjacent repeats, then drop blanks."""
    out = []
    previous = None
    for label in path:
        if label != previous:
            out.append(label)
        previous = label
    return tuple(label for label in out if label != BLANK_ID)


def brute_force_ctc_loss(logits: np.ndarray, target) -> float:
    """-log sum of path probabilities over every frame labelling (V^T paths)."""
    probs = softmax_rows(np.asarray(logits, dtype=np.float64))
    num_frames, vocab_size = probs.shape
    wanted = tuple(target)
    total = 0.0
    for path in itertools.product(range(vocab_size), repeat=num_frames):
        if collapse_path(path) == wanted:
            p = 1.0
            for t, label in enumerate(path):
                p *= probs[t, label]
            total += p
    if total == 0.0:
        raise AssertionError("oracle found no path; target should be infeasible")
    return -math.log(total)


def central_difference_grad(fn, x: np.ndarray, step: float = 1e-5) -> np.ndarray:
    """Central finite differences of a scalar function, entry by entry."""
    x = np.asarray(x, dtype=np.float64)
    grad = np.zeros_like(x)
    flat = grad.reshape(-1)
    for i in range(x.size):
        bumped = x.copy().reshape(-1)
        bumped[i] += step
        upper = fn(bumped.reshape(x.shape))
        bumped[i] -= 2 * step
        lower = fn(bumped.reshape(x.shape))
        flat[i] = (upper - lower) / (2 * step)
    return grad


def relative_error(a: np.ndarray, b: np.ndarray) -> float:
    scale = max(np.linalg.norm(a), np.linalg.norm(b))
    if scale == 0.0:
        return 0.0
    return float(np.linalg.norm(np.asarray(a) - np.asarray(b)) / scale)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
