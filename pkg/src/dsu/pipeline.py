"""End-to-end orchestration of the two-stage discrete unit pipeline.

Stage order: load -> train/test split -> stage-1 weight learning -> freeze ->
continuous evaluation -> aggregation with the reloaded weights -> k-means ->
tokenization -> unit post-processing variants (raw / dedup / dedup+merges) ->
discrete probes -> report. The learned layer weights are serialized once and
only ever reloaded afterwards; the run fails if their file changes during
stage 2.

Every artifact lands in the run's output directory. report.txt holds only
deterministic key=value lines (no paths, no wall-clock) so identical
config+seed runs produce identical bytes; stage timings live on the returned
RunReport object.
"""

from __future__ import annotations

import hashlib
import time
from contextlib import contextmanager
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from . import feature_store
from .aggregator import LayerWeights, load_weights, save_weights, softmax_weights, weighted_sum
from .discrete_probe import (
    evaluate_discrete,
    gap_report,
    save_discrete_probe,
    train_discrete,
)
from .errors import PipelineStageError
from .probe import TrainConfig, evaluate_continuous, save_probe, train_stage1
from .quantizer import Codebook, KmeansConfig, assign, kmeans_train, save_codebook
from .tokenproc import UnitSequence, bpe_encode, bpe_train, bitrate, dedup, save_bpe, write_units

# fixed seed offsets so one pipeline seed drives every seeded component
_SEED_STAGE1 = 0
_SEED_KMEANS = 1
_SEED_VARIANT = {"raw": 2, "dedup": 3, "dedup_bpe": 4}


@dataclass(frozen=True)
class PipelineConfig:
    archive: str
    transcripts: str
    outdir: str
    mode: str = "finetuned"
    kmeans_k: int = 2000
    kmeans_iters: int = 100
    kmeans_tol: float = 1e-6
    kmeans_sample_cap: int | None = None
    bpe_merges: int = 1000
    dedup: bool = True
    seed: int = 0
    frame_seconds: float = 0.02
    durations: str | None = None
    train_ids: str | None = None
    test_ids: str | None = None
    embedding_dim: int = 64
    stage1: TrainConfig = field(default_factory=TrainConfig)
    stage2: TrainConfig = field(default_factory=TrainConfig)


@dataclass
class VariantResult:
    name: str
    cer: float
    skipped: int
    tokens: int
    vocab_size: int
    bitrate_bps: float
    gap_pct: float | None


@dataclass
class RunReport:
    mode: str
    seed: int
    kmeans_k: int
    bpe_merges: int
    dedup: bool
    num_train: int
    num_test: int
    num_layers: int
    feature_dim: int
    stage1_epochs: int
    stage2_epochs: int
    total_frames: int
    total_duration_s: float
    continuous_cer: float
    variants: list[VariantResult]
    weights_sha256_stage1: str
    weights_sha256_after_stage2: str
    timings: dict[str, float] = field(default_factory=dict)

    def report_lines(self) -> list[str]:
        def fmt(value) -> str:
            if value is None:
                return "nan"
            if isinstance(value, bool):
                return "true" if value else "false"
            if isinstance(value, float):
                return repr(value)
            return str(value)

        lines = [
            f"mode={self.mode}",
            f"seed={self.seed}",
            f"kmeans_k={self.kmeans_k}",
            f"bpe_merges={self.bpe_merges}",
            f"dedup={fmt(self.dedup)}",
            f"num_train={self.num_train}",
            f"num_test={self.num_test}",
            f"num_layers={self.num_layers}",
            f"feature_dim={self.feature_dim}",
            f"stage1_epochs={self.stage1_epochs}",
            f"stage2_epochs={self.stage2_epochs}",
            f"total_frames={self.total_frames}",
            f"total_duration_s={fmt(self.total_duration_s)}",
            f"continuous_cer={fmt(self.continuous_cer)}",
        ]
        for variant in self.variants:
            lines.append(f"cer_{variant.name}={fmt(variant.cer)}")
            lines.append(f"skipped_{variant.name}={variant.skipped}")
            lines.append(f"tokens_{variant.name}={variant.tokens}")
            lines.append(f"vocab_{variant.name}={variant.vocab_size}")
            lines.append(f"bitrate_{variant.name}_bps={fmt(variant.bitrate_bps)}")
            lines.append(f"gap_{variant.name}_pct={fmt(variant.gap_pct)}")
        lines.append(f"weights_sha256_stage1={self.weights_sha256_stage1}")
        lines.append(f"weights_sha256_after_stage2={self.weights_sha256_after_stage2}")
        return lines

    def to_text(self) -> str:
        return "\n".join(self.report_lines()) + "\n"

    def summary(self) -> str:
        parts = [f"continuous CER {self.continuous_cer:.3f}%"]
        for variant in self.variants:
            parts.append(
                f"{variant.name}: CER {variant.cer:.3f}% "
                f"({variant.tokens} tokens, {variant.bitrate_bps:.1f} bit/s, "
                f"{variant.skipped} skipped)"
            )
        timing = ", ".join(f"{k} {v:.2f}s" for k, v in self.timings.items())
        return "\n".join(parts + [f"stage times: {timing}"])


def hash_split(utt_id: str) -> bool:
    """True when the utterance belongs to the test split."""
    digest = hashlib.sha256(utt_id.encode("utf-8")).digest()
    return digest[-1] % 5 == 0


def _read_id_list(path: str) -> list[str]:
    return [line.strip() for line in Path(path).read_text(encoding="utf-8").splitlines() if line.strip()]


def _sha256_file(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def export_weight_csv(weights: LayerWeights, dest) -> None:
    """Write "layer_index,weight" rows of the softmax-normalized weights.

    Layer indices are 1-based; pretrained mode appends a "final_norm" row for
    the normalized-last-layer term.
    """
    w = softmax_weights(weights.log_weights)
    lines = ["layer_index,weight"]
    for i in range(weights.num_layers):
        lines.append(f"{i + 1},{float(w[i])!r}")
    if weights.mode == "pretrained":
        lines.append(f"final_norm,{float(w[-1])!r}")
    text = "\n".join(lines) + "\n"
    if isinstance(dest, (str, Path)):
        Path(dest).write_text(text, encoding="utf-8")
    else:
        dest.write(text)


@contextmanager
def _stage(name: str, timings: dict[str, float]):
    start = time.perf_counter()
    try:
        yield
    except PipelineStageError:
        raise
    except Exception as exc:
        raise PipelineStageError(f"stage {name!r} failed: {exc}") from exc
    timings[name] = time.perf_counter() - start


def run_pipeline(config: PipelineConfig) -> RunReport:
    """Run every stage, persist all artifacts under config.outdir, return the report."""
    timings: dict[str, float] = {}
    outdir = Path(config.outdir)
    outdir.mkdir(parents=True, exist_ok=True)

    with _stage("load", timings):
        archive = feature_store.read_archive(config.archive)
        transcripts = feature_store.read_transcripts(config.transcripts)
        if config.durations:
            durations = feature_store.read_durations(config.durations)
        else:
            durations = {u.utt_id: u.num_frames * config.frame_seconds for u in archive}
        for utt in archive:
            if utt.utt_id not in transcripts:
                raise ValueError(f"missing transcript for {utt.utt_id!r}")
            if utt.utt_id not in durations:
                raise ValueError(f"missing duration for {utt.utt_id!r}")

    with _stage("split", timings):
        if (config.train_ids is None) != (config.test_ids is None):
            raise ValueError("train_ids and test_ids must be given together")
        if config.train_ids and config.test_ids:
            train_ids = _read_id_list(config.train_ids)
            test_ids = _read_id_list(config.test_ids)
        else:
            train_ids = [u.utt_id for u in archive if not hash_split(u.utt_id)]
            test_ids = [u.utt_id for u in archive if hash_split(u.utt_id)]
        if not train_ids or not test_ids:
            raise ValueError(f"degenerate split: {len(train_ids)} train / {len(test_ids)} test")
        train_archive = archive.subset(train_ids)
        test_archive = archive.subset(test_ids)
        (outdir / "split_train.txt").write_text("\n".join(train_ids) + "\n", encoding="utf-8")
        (outdir / "split_test.txt").write_text("\n".join(test_ids) + "\n", encoding="utf-8")

    weights_path = outdir / "weights.txt"
    with _stage("stage1", timings):
        stage1_config = replace(config.stage1, seed=config.seed + _SEED_STAGE1)
        learned, probe_model, stage1_history = train_stage1(
            train_archive, transcripts, config.mode, stage1_config
        )
        save_weights(learned, weights_path)
        save_probe(probe_model, outdir / "probe.txt")
        export_weight_csv(learned, outdir / "weights.csv")
        weights_hash_stage1 = _sha256_file(weights_path)

    with _stage("continuous_eval", timings):
        frozen = load_weights(weights_path)
        continuous_cer = evaluate_continuous(frozen, probe_model, test_archive, transcripts)

    with _stage("aggregate", timings):
        aggregated = {
            u.utt_id: weighted_sum(u.frames.astype(np.float64), frozen) for u in archive
        }

    with _stage("kmeans", timings):
        train_frames = np.concatenate([aggregated[utt_id] for utt_id in train_ids], axis=0)
        kmeans_config = KmeansConfig(
            num_units=config.kmeans_k,
            max_iters=config.kmeans_iters,
            tolerance=config.kmeans_tol,
            seed=config.seed + _SEED_KMEANS,
            sample_cap=config.kmeans_sample_cap,
        )
        codebook, _ = kmeans_train(train_frames, kmeans_config)
        save_codebook(codebook, outdir / "codebook.dsuk")

    with _stage("tokenize", timings):
        raw_seqs = [
            UnitSequence(u.utt_id, tuple(int(x) for x in assign(aggregated[u.utt_id], codebook)))
            for u in archive
        ]
        write_units(raw_seqs, outdir / "units_raw.tsv")

    variants: list[tuple[str, list[UnitSequence], int]] = [("raw", raw_seqs, codebook.num_units)]
    if config.dedup:
        with _stage("dedup", timings):
            dedup_seqs = [UnitSequence(s.utt_id, tuple(dedup(s.units))) for s in raw_seqs]
            write_units(dedup_seqs, outdir / "units_dedup.tsv")
        variants.append(("dedup", dedup_seqs, codebook.num_units))
        if config.bpe_merges > 0:
            with _stage("bpe", timings):
                train_set = set(train_ids)
                bpe_model = bpe_train(
                    [s.units for s in dedup_seqs if s.utt_id in train_set],
                    config.bpe_merges,
                    base_vocab_size=codebook.num_units,
                )
                save_bpe(bpe_model, outdir / "bpe.model")
                bpe_seqs = [
                    UnitSequence(s.utt_id, tuple(bpe_encode(s.units, bpe_model)))
                    for s in dedup_seqs
                ]
                write_units(bpe_seqs, outdir / "units_dedup_bpe.tsv")
            variants.append(("dedup_bpe", bpe_seqs, bpe_model.vocab_size))

    total_duration = float(sum(durations[u.utt_id] for u in archive))
    total_frames = int(sum(u.num_frames for u in archive))
    train_set = set(train_ids)
    test_set = set(test_ids)
    results: list[VariantResult] = []
    for name, seqs, vocab_size in variants:
        with _stage(f"discrete_{name}", timings):
            stage2_config = replace(config.stage2, seed=config.seed + _SEED_VARIANT[name])
            model, _ = train_discrete(
                [s for s in seqs if s.utt_id in train_set],
                transcripts,
                vocab_size,
                stage2_config,
                embedding_dim=config.embedding_dim,
            )
            save_discrete_probe(model, outdir / f"dprobe_{name}.txt")
            cer, skipped = evaluate_discrete(
                model, [s for s in seqs if s.utt_id in test_set], transcripts
            )
            tokens = sum(len(s.units) for s in seqs)
            rate = bitrate([s.units for s in seqs], vocab_size, total_duration)
            gap = gap_report(continuous_cer, cer) if continuous_cer > 0 else None
            results.append(VariantResult(name, cer, skipped, tokens, vocab_size, rate, gap))

    with _stage("freeze_check", timings):
        weights_hash_after = _sha256_file(weights_path)
        if weights_hash_after != weights_hash_stage1:
            raise PipelineStageError(
                "stage 'freeze_check' failed: weights file changed during stage 2"
            )

    report = RunReport(
        mode=config.mode,
        seed=config.seed,
        kmeans_k=config.kmeans_k,
        bpe_merges=config.bpe_merges,
        dedup=config.dedup,
        num_train=len(train_ids),
        num_test=len(test_ids),
        num_layers=archive.num_layers,
        feature_dim=archive.feature_dim,
        stage1_epochs=config.stage1.epochs,
        stage2_epochs=config.stage2.epochs,
        total_frames=total_frames,
        total_duration_s=total_duration,
        continuous_cer=continuous_cer,
        variants=results,
        weights_sha256_stage1=weights_hash_stage1,
        weights_sha256_after_stage2=weights_hash_after,
        timings=timings,
    )
    (outdir / "report.txt").write_text(report.to_text(), encoding="utf-8")
    return report


# -- config file handling -------------------------------------------------

_BOOL_KEYS = {"dedup"}
_INT_KEYS = {
    "kmeans_k",
    "kmeans_iters",
    "bpe_merges",
    "seed",
    "embedding_dim",
    "stage1_epochs",
    "stage1_batch_size",
    "stage2_epochs",
    "stage2_batch_size",
}
_FLOAT_KEYS = {
    "kmeans_tol",
    "frame_seconds",
    "stage1_learning_rate",
    "stage1_weight_learning_rate",
    "stage2_learning_rate",
}
_OPTIONAL_INT_KEYS = {"kmeans_sample_cap"}
_PATH_KEYS = {"archive", "transcripts", "outdir", "durations", "train_ids", "test_ids"}
_STR_KEYS = {"mode"}
_ALL_KEYS = _BOOL_KEYS | _INT_KEYS | _FLOAT_KEYS | _OPTIONAL_INT_KEYS | _PATH_KEYS | _STR_KEYS


def parse_config_lines(lines, source: str = "<config>") -> dict[str, str]:
    """Parse flat key=value lines, ignoring blanks and # comments."""
    values: dict[str, str] = {}
    for lineno, raw in enumerate(lines, 1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ValueError(f"{source} line {lineno}: expected key=value, got {line!r}")
        key, value = line.split("=", 1)
        key = key.strip()
        if key not in _ALL_KEYS:
            raise ValueError(f"{source} line {lineno}: unknown key {key!r}")
        values[key] = value.strip()
    return values


def config_from_values(values: dict[str, str]) -> PipelineConfig:
    """Build a PipelineConfig from string key=value settings."""
    for required in ("archive", "transcripts", "outdir"):
        if not values.get(required):
            raise ValueError(f"config is missing required key {required!r}")

    def convert(key: str, value: str):
        if key in _BOOL_KEYS:
            if value.lower() in ("true", "1", "yes", "on"):
                return True
            if value.lower() in ("false", "0", "no", "off"):
                return False
            raise ValueError(f"config key {key!r}: expected a boolean, got {value!r}")
        if key in _INT_KEYS:
            return int(value)
        if key in _FLOAT_KEYS:
            return float(value)
        if key in _OPTIONAL_INT_KEYS:
            return int(value) if value else None
        return value or None

    plain: dict[str, object] = {}
    stage1: dict[str, object] = {}
    stage2: dict[str, object] = {}
    for key, raw in values.items():
        value = convert(key, raw)
        if key.startswith("stage1_"):
            stage1[key[len("stage1_"):]] = value
        elif key.startswith("stage2_"):
            stage2[key[len("stage2_"):]] = value
        else:
            plain[key] = value
    plain["outdir"] = plain.get("outdir") or "."
    return PipelineConfig(
        stage1=TrainConfig(**stage1),
        stage2=TrainConfig(**stage2),
        **plain,  # type: ignore[arg-type]
    )


def load_config(path, overrides: dict[str, str] | None = None) -> PipelineConfig:
    lines = Path(path).read_text(encoding="utf-8").splitlines()
    values = parse_config_lines(lines, source=str(path))
    if overrides:
        for key in overrides:
            if key not in _ALL_KEYS:
                raise ValueError(f"unknown config key {key!r}")
        values.update(overrides)
    return config_from_values(values)
