"""K-means codebook training and nearest-centroid unit assignment.

Lloyd iterations with k-means++ seeding over squared Euclidean distance.
Empty clusters are re-seeded to the currently worst-served point, which keeps
the recorded distortion history non-increasing. Centroids are stored as
float32 so codebook serialization roundtrips exactly; distance math runs in
float64.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import CorruptionError, FormatError, UnsupportedVersionError, ValidationError
from .feature_store import _as_binary_sink, _as_binary_source, _read_exact

CODEBOOK_MAGIC = b"DSUK"
CODEBOOK_VERSION = 1


@dataclass(frozen=True)
class Codebook:
    """K centroid vectors defining the discrete unit inventory."""

    centroids: np.ndarray  # (K, D) float32

    def __post_init__(self):
        arr = np.ascontiguousarray(np.asarray(self.centroids, dtype=np.float32))
        if arr.ndim != 2 or arr.shape[0] < 1 or arr.shape[1] < 1:
            raise ValidationError(f"centroids must be (K>=1, D>=1), got shape {arr.shape}")
        if not np.all(np.isfinite(arr)):
            raise ValidationError("centroids must be finite")
        arr.flags.writeable = False
        object.__setattr__(self, "centroids", arr)

    @property
    def num_units(self) -> int:
        return self.centroids.shape[0]

    @property
    def dim(self) -> int:
        return self.centroids.shape[1]


@dataclass(frozen=True)
class KmeansConfig:
    num_units: int
    max_iters: int = 100
    tolerance: float = 1e-6
    seed: int = 0
    sample_cap: int | None = None

    def __post_init__(self):
        if self.num_units < 1:
            raise ValidationError("num_units must be >= 1")
        if self.max_iters < 0:
            raise ValidationError("max_iters must be >= 0")
        if self.tolerance < 0:
            raise ValidationError("tolerance must be >= 0")
        if self.sample_cap is not None and self.sample_cap < 1:
            raise ValidationError("sample_cap must be >= 1 when set")


def _check_features(features, dim: int | None = None) -> np.ndarray:
    points = np.asarray(features, dtype=np.float64)
    if points.ndim != 2:
        raise ValueError(f"features must be (N, D), got shape {points.shape}")
    if dim is not None and points.shape[1] != dim:
        raise ValueError(f"feature dim {points.shape[1]} != codebook dim {dim}")
    return points


def _sq_distances(points: np.ndarray, centroids: np.ndarray) -> np.ndarray:
    # |x|^2 + |c|^2 - 2 x.c keeps memory at N*K instead of N*K*D
    d2 = (
        (points**2).sum(axis=1)[:, None]
        + (centroids**2).sum(axis=1)[None, :]
        - 2.0 * points @ centroids.T
    )
    return np.maximum(d2, 0.0)


def _plusplus_init(points: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    n = points.shape[0]
    centroids = np.empty((k, points.shape[1]), dtype=np.float64)
    centroids[0] = points[rng.integers(n)]
    closest = _sq_distances(points, centroids[:1]).min(axis=1)
    for i in range(1, k):
        total = closest.sum()
        if total > 0:
            idx = rng.choice(n, p=closest / total)
        else:
            idx = rng.integers(n)  # fewer distinct points than centroids
        centroids[i] = points[idx]
        closest = np.minimum(closest, _sq_distances(points, centroids[i : i + 1]).min(axis=1))
    return centroids


def kmeans_train(features, config: KmeansConfig) -> tuple[Codebook, list[float]]:
    """Train a codebook; returns it plus the per-iteration distortion history.

    The history starts at the seeding distortion and records one value per
    Lloyd iteration (after centroid update and empty-cluster repair); it is
    non-increasing. Iteration stops when the relative improvement drops below
    ``config.tolerance`` or ``config.max_iters`` is reached.
    """
    points = _check_features(features)
    if points.shape[0] == 0:
        raise ValueError("cannot train on zero frames")
    if not np.all(np.isfinite(points)):
        raise ValueError("features must be finite")
    rng = np.random.default_rng(config.seed)
    if config.sample_cap is not None and config.sample_cap < points.shape[0]:
        keep = np.sort(rng.choice(points.shape[0], size=config.sample_cap, replace=False))
        points = points[keep]

    k = config.num_units
    centroids = _plusplus_init(points, k, rng)
    d2 = _sq_distances(points, centroids)
    history = [float(d2.min(axis=1).sum())]
    for _ in range(config.max_iters):
        labels = d2.argmin(axis=1)
        counts = np.bincount(labels, minlength=k)
        sums = np.zeros_like(centroids)
        np.add.at(sums, labels, points)
        nonzero = counts > 0
        centroids[nonzero] = sums[nonzero] / counts[nonzero, None]
        empty = np.flatnonzero(~nonzero)
        if empty.size:
            # move each empty centroid onto a distinct worst-served point
            refreshed = _sq_distances(points, centroids).min(axis=1)
            order = np.argsort(-refreshed, kind="stable")
            for centroid_idx, point_idx in zip(empty, order):
                centroids[centroid_idx] = points[point_idx]
        d2 = _sq_distances(points, centroids)
        distortion_now = float(d2.min(axis=1).sum())
        previous = history[-1]
        history.append(distortion_now)
        if previous == 0.0 or previous - distortion_now <= config.tolerance * previous:
            break
    return Codebook(centroids.astype(np.float32)), history


def assign(features, codebook: Codebook) -> np.ndarray:
    """Map each frame to its nearest centroid index (lowest index on ties)."""
    points = _check_features(features, codebook.dim)
    if points.shape[0] == 0:
        return np.zeros(0, dtype=np.int64)
    d2 = _sq_distances(points, codebook.centroids.astype(np.float64))
    return d2.argmin(axis=1).astype(np.int64)


def distortion(features, codebook: Codebook) -> float:
    """Sum of squared distances from each frame to its nearest centroid."""
    points = _check_features(features, codebook.dim)
    if points.shape[0] == 0:
        return 0.0
    d2 = _sq_distances(points, codebook.centroids.astype(np.float64))
    return float(d2.min(axis=1).sum())


def save_codebook(codebook: Codebook, dest) -> None:
    stream, owned = _as_binary_sink(dest)
    try:
        stream.write(CODEBOOK_MAGIC)
        stream.write(struct.pack("<III", CODEBOOK_VERSION, codebook.num_units, codebook.dim))
        stream.write(codebook.centroids.astype("<f4", copy=False).tobytes())
    finally:
        if owned:
            stream.close()


def load_codebook(source) -> Codebook:
    stream, owned = _as_binary_source(source)
    try:
        magic = stream.read(len(CODEBOOK_MAGIC))
        if magic != CODEBOOK_MAGIC:
            raise FormatError(f"bad magic {magic!r}, expected {CODEBOOK_MAGIC!r}")
        version, k, dim = struct.unpack("<III", _read_exact(stream, 12, "codebook header"))
        if version != CODEBOOK_VERSION:
            raise UnsupportedVersionError(f"unsupported codebook version {version}")
        raw = _read_exact(stream, k * dim * 4, "codebook payload")
        if stream.read(1) != b"":
            raise CorruptionError("trailing bytes after codebook payload")
        centroids = np.frombuffer(raw, dtype="<f4").reshape(k, dim)
        return Codebook(centroids)
    finally:
        if owned:
            stream.close()
