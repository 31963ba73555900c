"""Binary archive of per-utterance, per-layer frame features.

File layout (little-endian):

    magic "DSUA" | version u32 | num_layers u32 | feature_dim u32 | num_utts u32
    index, one entry per utterance:
        id_len u16 | id bytes (UTF-8) | num_frames u32 | payload_offset u64
    payload, one block per utterance in index order:
        num_layers * num_frames * feature_dim float32, layer-major then frame-major

Payload offsets are absolute file positions. Transcripts live in a sidecar
"utt_id<TAB>text" file, durations in a "utt_id<TAB>seconds" file.

Also provides a synthetic corpus generator that plants class information in a
single chosen layer so downstream weight learning has a known right answer.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path
from typing import BinaryIO, Iterable, Mapping, TextIO

import numpy as np

from .errors import CorruptionError, FormatError, UnsupportedVersionError, ValidationError

MAGIC = b"DSUA"
VERSION = 1

# Characters used to render synthetic class ids as transcript symbols.
SYMBOL_ALPHABET = "abcdefghijklmnopqrstuvwxyzABCDEFGHIJKLMNOPQRSTUVWXYZ0123456789"

# Planted class means are rescaled until their minimum pairwise distance is at
# least this many noise standard deviations, keeping the planted layer
# linearly separable.
MEAN_SEPARATION_SIGMAS = 8.0


@dataclass(frozen=True, eq=False)
class Utterance:
    """One utterance: an id plus a (num_layers, num_frames, feature_dim) float32 tensor."""

    utt_id: str
    frames: np.ndarray

    def __post_init__(self):
        if not self.utt_id:
            raise ValidationError("utt_id must be non-empty")
        if "\t" in self.utt_id or "\n" in self.utt_id or "\r" in self.utt_id:
            raise ValidationError(f"utt_id {self.utt_id!r} contains tab or newline")
        if len(self.utt_id.encode("utf-8")) > 0xFFFF:
            raise ValidationError("utt_id longer than 65535 bytes")
        frames = np.asarray(self.frames, dtype=np.float32)
        if frames.ndim != 3:
            raise ValidationError(f"frames must be 3-d, got shape {frames.shape}")
        if frames.shape[1] < 1:
            raise ValidationError("utterance must have at least one frame")
        if not np.all(np.isfinite(frames)):
            raise ValidationError(f"non-finite feature values in {self.utt_id!r}")
        frames = np.ascontiguousarray(frames)
        frames.flags.writeable = False
        object.__setattr__(self, "frames", frames)

    @property
    def num_frames(self) -> int:
        return self.frames.shape[1]

    def __eq__(self, other) -> bool:
        if not isinstance(other, Utterance):
            return NotImplemented
        return self.utt_id == other.utt_id and np.array_equal(self.frames, other.frames)


@dataclass(frozen=True, eq=False)
class FeatureArchive:
    """Ordered collection of utterances sharing one layer count and feature dim."""

    num_layers: int
    feature_dim: int
    utterances: tuple[Utterance, ...]

    def __post_init__(self):
        if self.num_layers < 1 or self.feature_dim < 1:
            raise ValidationError("num_layers and feature_dim must be >= 1")
        object.__setattr__(self, "utterances", tuple(self.utterances))
        seen = set()
        for utt in self.utterances:
            if utt.frames.shape[0] != self.num_layers or utt.frames.shape[2] != self.feature_dim:
                raise ValidationError(
                    f"{utt.utt_id!r} has shape {utt.frames.shape}, expected "
                    f"({self.num_layers}, T, {self.feature_dim})"
                )
            if utt.utt_id in seen:
                raise ValidationError(f"duplicate utt_id {utt.utt_id!r}")
            seen.add(utt.utt_id)

    def __len__(self) -> int:
        return len(self.utterances)

    def __iter__(self):
        return iter(self.utterances)

    def __eq__(self, other) -> bool:
        if not isinstance(other, FeatureArchive):
            return NotImplemented
        return (
            self.num_layers == other.num_layers
            and self.feature_dim == other.feature_dim
            and self.utterances == other.utterances
        )

    def subset(self, utt_ids: Iterable[str]) -> "FeatureArchive":
        """New archive keeping only the given ids, in this archive's order."""
        keep = set(utt_ids)
        kept = tuple(u for u in self.utterances if u.utt_id in keep)
        missing = keep - {u.utt_id for u in kept}
        if missing:
            raise ValueError(f"unknown utt_ids: {sorted(missing)[:5]}")
        return FeatureArchive(self.num_layers, self.feature_dim, kept)


def _as_binary_sink(dest) -> tuple[BinaryIO, bool]:
    if isinstance(dest, (str, Path)):
        return open(dest, "wb"), True
    return dest, False


def _as_binary_source(source) -> tuple[BinaryIO, bool]:
    if isinstance(source, (str, Path)):
        return open(source, "rb"), True
    return source, False


def write_archive(archive: FeatureArchive, dest) -> int:
    """Serialize *archive* to a path or binary sink; returns bytes written."""
    stream, owned = _as_binary_sink(dest)
    try:
        header = MAGIC + struct.pack("<IIII", VERSION, archive.num_layers, archive.feature_dim, len(archive))
        index_parts = []
        payload_sizes = []
        for utt in archive:
            ident = utt.utt_id.encode("utf-8")
            index_parts.append((ident, utt.num_frames))
            payload_sizes.append(utt.frames.size * 4)
        index_len = sum(2 + len(ident) + 4 + 8 for ident, _ in index_parts)
        offset = len(header) + index_len
        written = 0
        written += stream.write(header)
        for (ident, num_frames), size in zip(index_parts, payload_sizes):
            written += stream.write(struct.pack("<H", len(ident)))
            written += stream.write(ident)
            written += stream.write(struct.pack("<IQ", num_frames, offset))
            offset += size
        for utt in archive:
            written += stream.write(utt.frames.astype("<f4", copy=False).tobytes())
        return written
    finally:
        if owned:
            stream.close()


def _read_exact(stream: BinaryIO, n: int, what: str) -> bytes:
    data = stream.read(n)
    if len(data) != n:
        raise CorruptionError(f"truncated archive while reading {what}")
    return data


def read_archive(source) -> FeatureArchive:
    """Parse an archive from a path or binary stream, validating all invariants."""
    stream, owned = _as_binary_source(source)
    try:
        magic = stream.read(len(MAGIC))
        if magic != MAGIC:
            raise FormatError(f"bad magic {magic!r}, expected {MAGIC!r}")
        version, num_layers, feature_dim, num_utts = struct.unpack(
            "<IIII", _read_exact(stream, 16, "header")
        )
        if version != VERSION:
            raise UnsupportedVersionError(f"unsupported archive version {version}")
        entries = []
        index_len = 0
        for _ in range(num_utts):
            (id_len,) = struct.unpack("<H", _read_exact(stream, 2, "index"))
            ident = _read_exact(stream, id_len, "index").decode("utf-8")
            num_frames, offset = struct.unpack("<IQ", _read_exact(stream, 12, "index"))
            entries.append((ident, num_frames, offset))
            index_len += 2 + id_len + 12
        expected_offset = len(MAGIC) + 16 + index_len
        utterances = []
        for ident, num_frames, offset in entries:
            if offset != expected_offset:
                raise CorruptionError(
                    f"payload offset for {ident!r} is {offset}, expected {expected_offset}"
                )
            count = num_layers * num_frames * feature_dim
            raw = _read_exact(stream, count * 4, f"payload of {ident!r}")
            frames = np.frombuffer(raw, dtype="<f4").reshape(num_layers, num_frames, feature_dim)
            try:
                utterances.append(Utterance(ident, frames))
            except ValidationError as exc:
                raise CorruptionError(str(exc)) from exc
            expected_offset += count * 4
        if stream.read(1) != b"":
            raise CorruptionError("trailing bytes after last payload")
        return FeatureArchive(num_layers, feature_dim, tuple(utterances))
    finally:
        if owned:
            stream.close()


@dataclass(frozen=True)
class SynthSpec:
    """Parameters for the planted-layer synthetic corpus."""

    num_classes: int
    num_layers: int
    planted_layer: int  # 1-based layer index carrying class information
    feature_dim: int
    frames_per_symbol: int = 1
    noise_sigma: float = 0.1
    num_utts: int = 100
    min_symbols: int = 2
    max_symbols: int = 10
    seed: int = 0

    def __post_init__(self):
        if not 2 <= self.num_classes <= len(SYMBOL_ALPHABET):
            raise ValidationError(f"num_classes must be in [2, {len(SYMBOL_ALPHABET)}]")
        if self.num_layers < 1 or self.feature_dim < 1:
            raise ValidationError("num_layers and feature_dim must be >= 1")
        if not 1 <= self.planted_layer <= self.num_layers:
            raise ValidationError(f"planted_layer must be in [1, {self.num_layers}]")
        if self.frames_per_symbol < 1:
            raise ValidationError("frames_per_symbol must be >= 1")
        if self.noise_sigma < 0:
            raise ValidationError("noise_sigma must be >= 0")
        if self.num_utts < 0:
            raise ValidationError("num_utts must be >= 0")
        if not 1 <= self.min_symbols <= self.max_symbols:
            raise ValidationError("need 1 <= min_symbols <= max_symbols")


def synth_generate(spec: SynthSpec) -> tuple[FeatureArchive, dict[str, str]]:
    """Generate a planted-layer corpus; returns (archive, transcripts by utt_id).

    Per utterance a symbol sequence is drawn with no adjacent repeats (each
    next symbol uniform over the other classes), and every symbol occupies
    ``frames_per_symbol`` consecutive frames. The planted layer carries the
    per-class mean plus noise of scale ``noise_sigma``; every other layer is
    pure unit-scale noise. Deterministic for a given spec.
    """
    rng = np.random.default_rng(spec.seed)
    means = rng.standard_normal((spec.num_classes, spec.feature_dim))
    diffs = means[:, None, :] - means[None, :, :]
    dists = np.sqrt((diffs**2).sum(axis=2))
    min_dist = dists[~np.eye(spec.num_classes, dtype=bool)].min()
    if min_dist <= 0.0:
        raise ValidationError("degenerate class means; choose another seed")
    required = MEAN_SEPARATION_SIGMAS * spec.noise_sigma
    if min_dist < required:
        means *= required / min_dist

    planted = spec.planted_layer - 1
    repeat = spec.frames_per_symbol
    utterances = []
    transcripts: dict[str, str] = {}
    for i in range(spec.num_utts):
        n_sym = int(rng.integers(spec.min_symbols, spec.max_symbols + 1))
        symbols = np.empty(n_sym, dtype=np.int64)
        symbols[0] = rng.integers(spec.num_classes)
        for k in range(1, n_sym):
            # uniform over classes other than the previous symbol
            symbols[k] = (symbols[k - 1] + 1 + rng.integers(spec.num_classes - 1)) % spec.num_classes
        num_frames = n_sym * repeat
        frames = rng.standard_normal((spec.num_layers, num_frames, spec.feature_dim))
        frames[planted] = np.repeat(means[symbols], repeat, axis=0) + spec.noise_sigma * rng.standard_normal(
            (num_frames, spec.feature_dim)
        )
        utt_id = f"utt{i:05d}"
        utterances.append(Utterance(utt_id, frames.astype(np.float32)))
        transcripts[utt_id] = "".join(SYMBOL_ALPHABET[s] for s in symbols)
    archive = FeatureArchive(spec.num_layers, spec.feature_dim, tuple(utterances))
    return archive, transcripts


def _as_text_sink(dest) -> tuple[TextIO, bool]:
    if isinstance(dest, (str, Path)):
        return open(dest, "w", encoding="utf-8", newline="\n"), True
    return dest, False


def _as_text_source(source) -> tuple[TextIO, bool]:
    if isinstance(source, (str, Path)):
        return open(source, "r", encoding="utf-8"), True
    return source, False


def _write_tsv(mapping: Mapping[str, object], dest) -> None:
    stream, owned = _as_text_sink(dest)
    try:
        for key, value in mapping.items():
            stream.write(f"{key}\t{value}\n")
    finally:
        if owned:
            stream.close()


def _read_tsv(source, what: str) -> dict[str, str]:
    stream, owned = _as_text_source(source)
    try:
        out: dict[str, str] = {}
        for lineno, line in enumerate(stream, 1):
            line = line.rstrip("\n")
            if not line:
                continue
            if "\t" not in line:
                raise FormatError(f"{what} line {lineno} has no tab: {line!r}")
            key, value = line.split("\t", 1)
            if key in out:
                raise FormatError(f"duplicate utt_id {key!r} in {what}")
            out[key] = value
        return out
    finally:
        if owned:
            stream.close()


def write_transcripts(transcripts: Mapping[str, str], dest) -> None:
    _write_tsv(transcripts, dest)


def read_transcripts(source) -> dict[str, str]:
    return _read_tsv(source, "transcripts")


def write_durations(durations: Mapping[str, float], dest) -> None:
    _write_tsv({k: repr(float(v)) for k, v in durations.items()}, dest)


def read_durations(source) -> dict[str, float]:
    return {k: float(v) for k, v in _read_tsv(source, "durations").items()}
