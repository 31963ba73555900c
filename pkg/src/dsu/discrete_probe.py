"""Stage-2 downstream model on discrete tokens.

A randomly initialized embedding table feeds the same linear+CTC head as the
continuous probe. Token streams shortened by de-duplication or pair merging
can become too short for their transcript; such utterances are skipped and
counted rather than poisoning the loss.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from .ctc import LabelVocab, ctc_grad, ctc_loss, greedy_decode, min_frames
from .errors import FormatError, TrainingError, ValidationError
from .metrics import corpus_cer
from .optim import Adam, length_sorted_batches
from .probe import TrainConfig, _parse_matrix, init_projection
from .tokenproc import UnitSequence

log = logging.getLogger(__name__)

DEFAULT_EMBEDDING_DIM = 64


@dataclass
class DiscreteProbeModel:
    """Embedding table plus linear projection with bias and a CTC vocab."""

    embedding: np.ndarray  # (vocab_size, E)
    projection: np.ndarray  # (E, V)
    bias: np.ndarray  # (V,)
    vocab: LabelVocab

    def __post_init__(self):
        self.embedding = np.asarray(self.embedding, dtype=np.float64)
        self.projection = np.asarray(self.projection, dtype=np.float64)
        self.bias = np.asarray(self.bias, dtype=np.float64)
        if self.embedding.ndim != 2 or self.projection.ndim != 2:
            raise ValidationError("embedding and projection must be 2-d")
        if self.embedding.shape[1] != self.projection.shape[0]:
            raise ValidationError("embedding dim != projection input dim")
        if self.bias.shape != (self.projection.shape[1],):
            raise ValidationError("bias shape must match projection width")
        if self.projection.shape[1] != self.vocab.size:
            raise ValidationError("projection width != vocab size")
        for arr in (self.embedding, self.projection, self.bias):
            if not np.all(np.isfinite(arr)):
                raise ValidationError("model parameters must be finite")

    @property
    def token_vocab_size(self) -> int:
        return self.embedding.shape[0]

    def logits(self, tokens: Sequence[int]) -> np.ndarray:
        ids = np.asarray(tokens, dtype=np.int64)
        if ids.size and (ids.min() < 0 or ids.max() >= self.token_vocab_size):
            raise ValueError(f"token outside [0, {self.token_vocab_size})")
        return self.embedding[ids] @ self.projection + self.bias


def _check_corpus(corpus: Sequence[UnitSequence], vocab_size: int) -> None:
    if not corpus:
        raise ValueError("token corpus is empty")
    for seq in corpus:
        if seq.units and max(seq.units) >= vocab_size:
            raise ValueError(
                f"{seq.utt_id!r} has token {max(seq.units)} but vocab_size is {vocab_size}"
            )


def train_discrete(
    corpus: Sequence[UnitSequence],
    transcripts: Mapping[str, str],
    vocab_size: int,
    config: TrainConfig,
    embedding_dim: int = DEFAULT_EMBEDDING_DIM,
) -> tuple[DiscreteProbeModel, list[float]]:
    """Train embedding + probe head by CTC on token streams.

    Deterministic given the config seed; returns the model and per-epoch mean
    loss history.
    """
    _check_corpus(corpus, vocab_size)
    missing = [seq.utt_id for seq in corpus if seq.utt_id not in transcripts]
    if missing:
        raise ValueError(f"missing transcripts for {missing[:5]}")
    vocab = LabelVocab.from_transcripts(transcripts[seq.utt_id] for seq in corpus)
    targets = {seq.utt_id: vocab.encode(transcripts[seq.utt_id]) for seq in corpus}

    rng = np.random.default_rng(config.seed)
    params = {
        "embedding": rng.normal(0.0, 1.0 / np.sqrt(embedding_dim), size=(vocab_size, embedding_dim)),
        "projection": init_projection(rng, embedding_dim, vocab.size),
        "bias": np.zeros(vocab.size),
    }
    optimizer = Adam(
        params,
        lr=config.learning_rate,
        beta1=config.adam_beta1,
        beta2=config.adam_beta2,
        eps=config.adam_eps,
    )

    ids = [seq.utt_id for seq in corpus]
    token_arrays = [np.asarray(seq.units, dtype=np.int64) for seq in corpus]
    lengths = [len(seq.units) for seq in corpus]
    batches = length_sorted_batches(lengths, ids, config.batch_size)

    skipped = 0
    history: list[float] = []
    for _ in range(config.epochs):
        epoch_losses: list[float] = []
        for batch_idx in rng.permutation(len(batches)):
            grads = {name: np.zeros_like(p) for name, p in params.items()}
            used = 0
            for i in batches[batch_idx]:
                target = targets[ids[i]]
                if lengths[i] < min_frames(target) or lengths[i] == 0:
                    skipped += 1
                    continue
                tokens = token_arrays[i]
                embedded = params["embedding"][tokens]
                logit_rows = embedded @ params["projection"] + params["bias"]
                epoch_losses.append(ctc_loss(logit_rows, target))
                logit_grad = ctc_grad(logit_rows, target)
                grads["projection"] += embedded.T @ logit_grad
                grads["bias"] += logit_grad.sum(axis=0)
                np.add.at(grads["embedding"], tokens, logit_grad @ params["projection"].T)
                used += 1
            if used == 0:
                raise TrainingError("batch contained no feasible utterance")
            for grad in grads.values():
                grad /= used
            optimizer.step(grads)
        history.append(float(np.mean(epoch_losses)))
    if skipped:
        log.warning("discrete training skipped %d infeasible utterance passes", skipped)

    model = DiscreteProbeModel(params["embedding"], params["projection"], params["bias"], vocab)
    return model, history


def evaluate_discrete(
    model: DiscreteProbeModel, corpus: Sequence[UnitSequence], transcripts: Mapping[str, str]
) -> tuple[float, int]:
    """Corpus CER percent plus the count of skipped infeasible utterances."""
    if not corpus:
        raise ValueError("no utterances to evaluate")
    pairs = []
    skipped = 0
    for seq in corpus:
        if seq.utt_id not in transcripts:
            raise ValueError(f"missing transcript for {seq.utt_id!r}")
        reference = transcripts[seq.utt_id]
        target = model.vocab.encode(reference)
        if len(seq.units) < min_frames(target) or len(seq.units) == 0:
            skipped += 1
            continue
        hypothesis = model.vocab.decode(greedy_decode(model.logits(seq.units)))
        pairs.append((reference, hypothesis))
    if not pairs:
        raise ValueError("every utterance was infeasible for its transcript")
    return corpus_cer(pairs), skipped


def gap_report(continuous_cer: float, discrete_cer: float) -> float:
    """Relative CER gap percent: how much worse the discrete system is."""
    if continuous_cer <= 0:
        raise ValueError("relative gap undefined for continuous CER <= 0")
    return 100.0 * (discrete_cer - continuous_cer) / continuous_cer


def save_discrete_probe(model: DiscreteProbeModel, dest) -> None:
    """Probe text format with a leading embedding block."""
    vocab_size, embedding_dim = model.embedding.shape
    lines = [f"dsu-dprobe v1 {vocab_size} {embedding_dim} {model.vocab.size}"]
    for row in model.embedding:
        lines.append(" ".join(repr(float(x)) for x in row))
    for row in model.projection:
        lines.append(" ".join(repr(float(x)) for x in row))
    lines.append(" ".join(repr(float(x)) for x in model.bias))
    lines.append("".join(model.vocab.symbols))
    text = "\n".join(lines) + "\n"
    if isinstance(dest, (str, Path)):
        Path(dest).write_text(text, encoding="utf-8")
    else:
        dest.write(text)


def load_discrete_probe(source) -> DiscreteProbeModel:
    if isinstance(source, (str, Path)):
        text = Path(source).read_text(encoding="utf-8")
    else:
        text = source.read()
    lines = text.split("\n")
    head = lines[0].split()
    if len(head) != 5 or head[0] != "dsu-dprobe" or head[1] != "v1":
        raise FormatError(f"bad discrete probe header: {lines[0]!r}")
    vocab_size, embedding_dim, out_size = int(head[2]), int(head[3]), int(head[4])
    rows_needed = 1 + vocab_size + embedding_dim + 2
    if len(lines) < rows_needed:
        raise FormatError("discrete probe file truncated")
    at = 1
    embedding = _parse_matrix(lines[at : at + vocab_size], vocab_size, embedding_dim, "embedding")
    at += vocab_size
    projection = _parse_matrix(lines[at : at + embedding_dim], embedding_dim, out_size, "projection")
    at += embedding_dim
    bias = _parse_matrix([lines[at]], 1, out_size, "bias")[0]
    symbols = lines[at + 1]
    if len(symbols) != out_size - 1:
        raise FormatError(f"vocab line has {len(symbols)} symbols, expected {out_size - 1}")
    return DiscreteProbeModel(embedding, projection, bias, LabelVocab(tuple(symbols)))
