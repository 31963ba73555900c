"""Stage-1 trainer: linear projection + CTC on aggregated features.

The probe trains two things jointly: its own projection/bias and the layer
aggregation logits (through the aggregation gradient). Everything is seeded
and single-threaded so repeated runs produce bit-identical loss histories.
The returned LayerWeights is immutable; downstream stages reload it from disk
and never update it.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Mapping

import numpy as np

from .aggregator import LayerWeights, weighted_sum, weighted_sum_grad
from .ctc import LabelVocab, ctc_grad, ctc_loss, greedy_decode, min_frames
from .errors import FormatError, TrainingError, ValidationError
from .metrics import corpus_cer
from .optim import Adam, length_sorted_batches

log = logging.getLogger(__name__)


@dataclass
class ProbeModel:
    """Linear projection with bias mapping features to vocab scores."""

    projection: np.ndarray  # (D_in, V)
    bias: np.ndarray  # (V,)
    vocab: LabelVocab

    def __post_init__(self):
        self.projection = np.asarray(self.projection, dtype=np.float64)
        self.bias = np.asarray(self.bias, dtype=np.float64)
        if self.projection.ndim != 2 or self.bias.shape != (self.projection.shape[1],):
            raise ValidationError("projection must be (D_in, V) with bias (V,)")
        if self.projection.shape[1] != self.vocab.size:
            raise ValidationError(
                f"projection width {self.projection.shape[1]} != vocab size {self.vocab.size}"
            )
        if not (np.all(np.isfinite(self.projection)) and np.all(np.isfinite(self.bias))):
            raise ValidationError("probe parameters must be finite")

    def logits(self, features: np.ndarray) -> np.ndarray:
        return features @ self.projection + self.bias


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 1e-3
    epochs: int = 20
    batch_size: int = 16
    seed: int = 0
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_eps: float = 1e-8
    # the layer-weight logits are a tiny vector and benefit from a faster rate
    weight_learning_rate: float = 1e-2

    def __post_init__(self):
        if self.learning_rate <= 0 or self.weight_learning_rate <= 0:
            raise ValidationError("learning rates must be positive")
        if not 0 < self.adam_beta1 < 1 or not 0 < self.adam_beta2 < 1:
            raise ValidationError("betas must be in (0, 1)")
        if self.epochs < 0 or self.batch_size < 1:
            raise ValidationError("epochs must be >= 0 and batch_size >= 1")


def init_projection(rng: np.random.Generator, dim_in: int, vocab_size: int) -> np.ndarray:
    bound = 1.0 / np.sqrt(dim_in)
    return rng.uniform(-bound, bound, size=(dim_in, vocab_size))


def _targets_for(archive, transcripts: Mapping[str, str], vocab: LabelVocab) -> dict[str, list[int]]:
    targets = {}
    for utt in archive:
        if utt.utt_id not in transcripts:
            raise ValueError(f"missing transcript for {utt.utt_id!r}")
        targets[utt.utt_id] = vocab.encode(transcripts[utt.utt_id])
    return targets


def train_stage1(
    archive, transcripts: Mapping[str, str], mode: str, config: TrainConfig
) -> tuple[LayerWeights, ProbeModel, list[float]]:
    """Learn layer weights and a probe head by CTC on aggregated features.

    Returns the frozen LayerWeights, the trained probe, and the per-epoch mean
    loss history. Utterances too short for their transcript are skipped and
    counted; a batch with nothing usable aborts training.
    """
    if len(archive) == 0:
        raise ValueError("archive is empty")
    missing = [utt.utt_id for utt in archive if utt.utt_id not in transcripts]
    if missing:
        raise ValueError(f"missing transcripts for {missing[:5]}")
    vocab = LabelVocab.from_transcripts(transcripts[utt.utt_id] for utt in archive)
    targets = _targets_for(archive, transcripts, vocab)

    rng = np.random.default_rng(config.seed)
    num_logits = archive.num_layers + 1 if mode == "pretrained" else archive.num_layers
    params = {
        "projection": init_projection(rng, archive.feature_dim, vocab.size),
        "bias": np.zeros(vocab.size),
        "log_weights": np.zeros(num_logits),
    }
    optimizer = Adam(
        params,
        lr={
            "projection": config.learning_rate,
            "bias": config.learning_rate,
            "log_weights": config.weight_learning_rate,
        },
        beta1=config.adam_beta1,
        beta2=config.adam_beta2,
        eps=config.adam_eps,
    )

    layer_stacks = [utt.frames.astype(np.float64) for utt in archive]
    ids = [utt.utt_id for utt in archive]
    lengths = [utt.num_frames for utt in archive]
    batches = length_sorted_batches(lengths, ids, config.batch_size)

    skipped = 0
    history: list[float] = []
    for _ in range(config.epochs):
        epoch_losses: list[float] = []
        for batch_idx in rng.permutation(len(batches)):
            weights = LayerWeights(params["log_weights"], mode)
            grads = {name: np.zeros_like(p) for name, p in params.items()}
            used = 0
            for i in batches[batch_idx]:
                target = targets[ids[i]]
                if lengths[i] < min_frames(target):
                    skipped += 1
                    continue
                aggregated = weighted_sum(layer_stacks[i], weights)
                logit_rows = aggregated @ params["projection"] + params["bias"]
                epoch_losses.append(ctc_loss(logit_rows, target))
                logit_grad = ctc_grad(logit_rows, target)
                grads["projection"] += aggregated.T @ logit_grad
                grads["bias"] += logit_grad.sum(axis=0)
                upstream = logit_grad @ params["projection"].T
                grads["log_weights"] += weighted_sum_grad(layer_stacks[i], weights, upstream)
                used += 1
            if used == 0:
                raise TrainingError("batch contained no feasible utterance")
            for grad in grads.values():
                grad /= used
            optimizer.step(grads)
        history.append(float(np.mean(epoch_losses)))
    if skipped:
        log.warning("stage 1 skipped %d infeasible utterance passes", skipped)

    weights = LayerWeights(params["log_weights"], mode)
    model = ProbeModel(params["projection"], params["bias"], vocab)
    return weights, model, history


def evaluate_continuous(
    weights: LayerWeights, model: ProbeModel, archive, transcripts: Mapping[str, str]
) -> float:
    """Greedy-decode every utterance and return the corpus CER percent."""
    if len(archive) == 0:
        raise ValueError("no utterances to evaluate")
    pairs = []
    for utt in archive:
        if utt.utt_id not in transcripts:
            raise ValueError(f"missing transcript for {utt.utt_id!r}")
        reference = transcripts[utt.utt_id]
        model.vocab.encode(reference)  # reject transcripts outside the vocab
        aggregated = weighted_sum(utt.frames.astype(np.float64), weights)
        hypothesis = model.vocab.decode(greedy_decode(model.logits(aggregated)))
        pairs.append((reference, hypothesis))
    return corpus_cer(pairs)


def save_probe(model: ProbeModel, dest) -> None:
    """Text format: header "dsu-probe v1 D V", W rows, bias row, symbols line."""
    dim_in, vocab_size = model.projection.shape
    lines = [f"dsu-probe v1 {dim_in} {vocab_size}"]
    for row in model.projection:
        lines.append(" ".join(repr(float(x)) for x in row))
    lines.append(" ".join(repr(float(x)) for x in model.bias))
    lines.append("".join(model.vocab.symbols))
    text = "\n".join(lines) + "\n"
    if isinstance(dest, (str, Path)):
        Path(dest).write_text(text, encoding="utf-8")
    else:
        dest.write(text)


def _parse_matrix(lines: list[str], rows: int, cols: int, what: str) -> np.ndarray:
    if len(lines) != rows:
        raise FormatError(f"{what}: expected {rows} rows, got {len(lines)}")
    out = np.empty((rows, cols))
    for r, line in enumerate(lines):
        values = line.split()
        if len(values) != cols:
            raise FormatError(f"{what} row {r}: expected {cols} values, got {len(values)}")
        out[r] = [float(v) for v in values]
    return out


def load_probe(source) -> ProbeModel:
    if isinstance(source, (str, Path)):
        text = Path(source).read_text(encoding="utf-8")
    else:
        text = source.read()
    lines = text.split("\n")
    head = lines[0].split()
    if len(head) != 4 or head[0] != "dsu-probe" or head[1] != "v1":
        raise FormatError(f"bad probe header: {lines[0]!r}")
    dim_in, vocab_size = int(head[2]), int(head[3])
    if len(lines) < 1 + dim_in + 2:
        raise FormatError("probe file truncated")
    projection = _parse_matrix(lines[1 : 1 + dim_in], dim_in, vocab_size, "projection")
    bias = _parse_matrix([lines[1 + dim_in]], 1, vocab_size, "bias")[0]
    symbols = lines[2 + dim_in]
    if len(symbols) != vocab_size - 1:
        raise FormatError(f"vocab line has {len(symbols)} symbols, expected {vocab_size - 1}")
    return ProbeModel(projection, bias, LabelVocab(tuple(symbols)))
