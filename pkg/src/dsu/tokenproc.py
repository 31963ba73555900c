"""Post-processing of discrete unit streams.

Run-length de-duplication discards durations; pair-merge subword training
builds an ordered merge list over the integer streams; bitrate assumes fixed
log2(vocab) bits per token. Merge training breaks frequency ties on the
lexicographically smallest pair and stops early once no pair repeats, so the
whole stage is deterministic.
"""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass
from math import log2
from pathlib import Path
from typing import Iterable, Sequence

from .errors import FormatError, ValidationError


@dataclass(frozen=True)
class UnitSequence:
    """One utterance's discrete units."""

    utt_id: str
    units: tuple[int, ...]

    def __post_init__(self):
        object.__setattr__(self, "units", tuple(int(u) for u in self.units))
        if not self.utt_id or "\t" in self.utt_id or "\n" in self.utt_id:
            raise ValidationError(f"bad utt_id {self.utt_id!r}")
        if any(u < 0 for u in self.units):
            raise ValidationError("units must be nonnegative")


@dataclass(frozen=True)
class BpeModel:
    """Ordered pair merges over integer token streams.

    ``merges[i]`` is (left, right); the merged token id is
    ``base_vocab_size + i``. Applying merges in order reproduces training.
    """

    base_vocab_size: int
    merges: tuple[tuple[int, int], ...]

    def __post_init__(self):
        object.__setattr__(self, "merges", tuple((int(a), int(b)) for a, b in self.merges))
        if self.base_vocab_size < 1:
            raise ValidationError("base_vocab_size must be >= 1")
        for i, (left, right) in enumerate(self.merges):
            limit = self.base_vocab_size + i
            if not (0 <= left < limit and 0 <= right < limit):
                raise ValidationError(
                    f"merge {i} references token outside [0, {limit}): ({left}, {right})"
                )

    @property
    def vocab_size(self) -> int:
        return self.base_vocab_size + len(self.merges)


def dedup(units: Sequence[int]) -> list[int]:
    """Collapse each maximal run of equal adjacent units to a single unit."""
    out: list[int] = []
    for unit in units:
        if not out or out[-1] != unit:
            out.append(int(unit))
    return out


def _merge_pass(tokens: list[int], left: int, right: int, new_id: int) -> list[int]:
    # single left-to-right pass over non-overlapping occurrences
    out: list[int] = []
    i = 0
    n = len(tokens)
    while i < n:
        if i + 1 < n and tokens[i] == left and tokens[i + 1] == right:
            out.append(new_id)
            i += 2
        else:
            out.append(tokens[i])
            i += 1
    return out


def bpe_train(
    corpus: Iterable[Sequence[int]], num_merges: int, base_vocab_size: int | None = None
) -> BpeModel:
    """Learn up to *num_merges* pair merges from unit sequences.

    Each round merges the most frequent adjacent pair (ties: smallest
    (left, right)), stopping early once no pair occurs at least twice. With
    ``base_vocab_size=None`` the base is inferred as max unit + 1.
    """
    work = [list(seq) for seq in corpus]
    if not work:
        raise ValueError("corpus must be non-empty")
    if num_merges < 0:
        raise ValueError("num_merges must be >= 0")
    highest = max((max(seq) for seq in work if seq), default=-1)
    if base_vocab_size is None:
        base_vocab_size = max(highest + 1, 1)
    elif highest >= base_vocab_size:
        raise ValueError(f"unit {highest} outside base vocab of size {base_vocab_size}")

    merges: list[tuple[int, int]] = []
    for _ in range(num_merges):
        counts: Counter[tuple[int, int]] = Counter()
        for seq in work:
            counts.update(zip(seq, seq[1:]))
        if not counts:
            break
        best = min(counts, key=lambda pair: (-counts[pair], pair))
        if counts[best] < 2:
            break
        new_id = base_vocab_size + len(merges)
        merges.append(best)
        work = [_merge_pass(seq, best[0], best[1], new_id) for seq in work]
    return BpeModel(base_vocab_size, tuple(merges))


def bpe_encode(units: Sequence[int], model: BpeModel) -> list[int]:
    """Apply the learned merges in order; one left-to-right pass per merge."""
    tokens = [int(u) for u in units]
    for unit in tokens:
        if not 0 <= unit < model.base_vocab_size:
            raise ValueError(f"unit {unit} outside base vocab of size {model.base_vocab_size}")
    for i, (left, right) in enumerate(model.merges):
        tokens = _merge_pass(tokens, left, right, model.base_vocab_size + i)
    return tokens


def bpe_decode(tokens: Sequence[int], model: BpeModel) -> list[int]:
    """Expand merged tokens back to base units; inverse of bpe_encode."""
    out: list[int] = []
    stack: list[int] = []
    for token in reversed([int(t) for t in tokens]):
        if not 0 <= token < model.vocab_size:
            raise ValueError(f"token {token} outside vocab of size {model.vocab_size}")
        stack.append(token)
    while stack:
        token = stack.pop()
        if token < model.base_vocab_size:
            out.append(token)
        else:
            left, right = model.merges[token - model.base_vocab_size]
            stack.append(right)
            stack.append(left)
    return out


def bitrate(
    corpus: Iterable[Sequence[int]], vocab_size: int, total_duration_seconds: float
) -> float:
    """Bits per second at fixed-width log2(vocab_size) coding."""
    if vocab_size < 2:
        raise ValueError("vocab_size must be >= 2")
    if total_duration_seconds <= 0:
        raise ValueError("total duration must be positive")
    total_tokens = sum(len(seq) for seq in corpus)
    return total_tokens * log2(vocab_size) / total_duration_seconds


def write_units(sequences: Iterable[UnitSequence], dest) -> None:
    """Write "utt_id<TAB>u1 u2 ..." lines."""
    if isinstance(dest, (str, Path)):
        with open(dest, "w", encoding="utf-8", newline="\n") as stream:
            write_units(sequences, stream)
        return
    for seq in sequences:
        dest.write(f"{seq.utt_id}\t{' '.join(str(u) for u in seq.units)}\n")


def read_units(source) -> list[UnitSequence]:
    if isinstance(source, (str, Path)):
        with open(source, "r", encoding="utf-8") as stream:
            return read_units(stream)
    out = []
    seen = set()
    for lineno, line in enumerate(source, 1):
        line = line.rstrip("\n")
        if not line:
            continue
        if "\t" not in line:
            raise FormatError(f"units line {lineno} has no tab: {line!r}")
        utt_id, payload = line.split("\t", 1)
        if utt_id in seen:
            raise FormatError(f"duplicate utt_id {utt_id!r} in units file")
        seen.add(utt_id)
        try:
            units = tuple(int(tok) for tok in payload.split())
        except ValueError as exc:
            raise FormatError(f"units line {lineno}: {exc}") from exc
        out.append(UnitSequence(utt_id, units))
    return out


def save_bpe(model: BpeModel, dest) -> None:
    lines = [f"dsu-bpe v1 {model.base_vocab_size}"]
    for i, (left, right) in enumerate(model.merges):
        lines.append(f"{left} {right} {model.base_vocab_size + i}")
    text = "\n".join(lines) + "\n"
    if isinstance(dest, (str, Path)):
        Path(dest).write_text(text, encoding="utf-8")
    else:
        dest.write(text)


def load_bpe(source) -> BpeModel:
    if isinstance(source, (str, Path)):
        text = Path(source).read_text(encoding="utf-8")
    else:
        text = source.read()
    lines = [line for line in text.splitlines() if line]
    if not lines:
        raise FormatError("empty merge model file")
    head = lines[0].split()
    if len(head) != 3 or head[0] != "dsu-bpe" or head[1] != "v1":
        raise FormatError(f"bad merge model header: {lines[0]!r}")
    try:
        base = int(head[2])
        merges = []
        for i, line in enumerate(lines[1:]):
            left, right, new_id = (int(tok) for tok in line.split())
            if new_id != base + i:
                raise FormatError(f"merge ids must be consecutive from {base}, got {new_id}")
            merges.append((left, right))
    except ValueError as exc:
        raise FormatError(f"unparseable merge model: {exc}") from exc
    try:
        return BpeModel(base, tuple(merges))
    except ValidationError as exc:
        raise FormatError(str(exc)) from exc
