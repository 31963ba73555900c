"""Adam updates and deterministic batch construction for the probe trainers."""

from __future__ import annotations

import numpy as np


class Adam:
    """In-place Adam over a dict of named numpy parameters.

    ``lr`` may be a single float or a per-name dict, which lets the tiny
    layer-weight vector train faster than the projection.
    """

    def __init__(self, params: dict[str, np.ndarray], lr, beta1=0.9, beta2=0.999, eps=1e-8):
        if not 0.0 < beta1 < 1.0 or not 0.0 < beta2 < 1.0:
            raise ValueError("betas must be in (0, 1)")
        self.params = params
        self.lr = {name: float(lr[name] if isinstance(lr, dict) else lr) for name in params}
        if any(rate <= 0 for rate in self.lr.values()):
            raise ValueError("learning rates must be positive")
        self.beta1 = float(beta1)
        self.beta2 = float(beta2)
        self.eps = float(eps)
        self.steps = 0
        self._m = {name: np.zeros_like(p) for name, p in params.items()}
        self._v = {name: np.zeros_like(p) for name, p in params.items()}

    def step(self, grads: dict[str, np.ndarray]) -> None:
        self.steps += 1
        bias1 = 1.0 - self.beta1**self.steps
        bias2 = 1.0 - self.beta2**self.steps
        for name, grad in grads.items():
            m = self._m[name]
            v = self._v[name]
            m *= self.beta1
            m += (1.0 - self.beta1) * grad
            v *= self.beta2
            v += (1.0 - self.beta2) * grad**2
            update = (m / bias1) / (np.sqrt(v / bias2) + self.eps)
            self.params[name] -= self.lr[name] * update


def length_sorted_batches(lengths: list[int], keys: list[str], batch_size: int) -> list[list[int]]:
    """Chunk indices into batches after sorting by (length, key).

    Sorting by length keeps similarly-sized utterances together; the key
    breaks ties so the layout is reproducible. Per-epoch variation comes from
    shuffling the batch order, not the batch contents.
    """
    if batch_size < 1:
        raise ValueError("batch_size must be >= 1")
    order = sorted(range(len(lengths)), key=lambda i: (lengths[i], keys[i]))
    return [order[i : i + batch_size] for i in range(0, len(order), batch_size)]
