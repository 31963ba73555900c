"""Build a tiny feature archive, serialize it, and read it back.

The archive is the container every later stage consumes: per utterance a
(layers, frames, dim) float32 tensor, plus transcript and duration sidecars.
"""

import io

import numpy as np

from dsu import FeatureArchive, Utterance, read_archive, write_archive

rng = np.random.default_rng(0)

print("=== building an archive with 3 utterances (2 layers, dim 4) ===")
utts = []
for i in range(3):
    frames = rng.standard_normal((2, rng.integers(2, 6), 4)).astype(np.float32)
    utts.append(Utterance(f"utt{i}", frames))
    print(f"  utt{i}: {frames.shape[1]} frames")
archive = FeatureArchive(num_layers=2, feature_dim=4, utterances=tuple(utts))

print("\n=== serializing ===")
buf = io.BytesIO()
nbytes = write_archive(archive, buf)
print(f"  {nbytes} bytes; header starts with {buf.getvalue()[:8]!r}")

print("\n=== reading back ===")
buf.seek(0)
loaded = read_archive(buf)
print(f"  equal to original: {loaded == archive}")
print(f"  layers={loaded.num_layers} dim={loaded.feature_dim} utterances={len(loaded)}")

print("\n=== corrupting the payload is detected ===")
data = bytearray(buf.getvalue())
truncated = bytes(data[:-5])
try:
    read_archive(io.BytesIO(truncated))
except Exception as exc:
    print(f"  {type(exc).__name__}: {exc}")
