import io
from pathlib import Path

import numpy as np
import pytest

from dsu.aggregator import LayerWeights
from dsu.errors import PipelineStageError
from dsu.feature_store import SynthSpec, synth_generate, write_archive, write_transcripts
from dsu.pipeline import (
    PipelineConfig,
    export_weight_csv,
    config_from_values,
    hash_split,
    load_config,
    parse_config_lines,
    run_pipeline,
)
from dsu.probe import TrainConfig


@pytest.fixture(scope="module")
def corpus(tmp_path_factory):
    root = tmp_path_factory.mktemp("corpus")
    spec = SynthSpec(
        num_classes=4,
        num_layers=3,
        planted_layer=2,
        feature_dim=6,
        frames_per_symbol=2,
        noise_sigma=0.1,
        num_utts=60,
        min_symbols=2,
        max_symbols=6,
        seed=7,
    )
    archive, texts = synth_generate(spec)
    archive_path = root / "corpus.dsua"
    transcripts_path = root / "corpus.transcripts.tsv"
    write_archive(archive, archive_path)
    write_transcripts(texts, transcripts_path)
    return archive, texts, archive_path, transcripts_path


def small_config(corpus, outdir, **overrides) -> PipelineConfig:
    _, _, archive_path, transcripts_path = corpus
    base = dict(
        archive=str(archive_path),
        transcripts=str(transcripts_path),
        outdir=str(outdir),
        mode="finetuned",
        kmeans_k=8,
        bpe_merges=4,
        dedup=True,
        seed=0,
        embedding_dim=12,
        stage1=TrainConfig(learning_rate=1e-2, weight_learning_rate=5e-2, epochs=12, batch_size=8),
        stage2=TrainConfig(learning_rate=1e-2, epochs=10, batch_size=8),
    )
    base.update(overrides)
    return PipelineConfig(**base)


class TestRunPipeline:
    def test_full_run_artifacts_and_report(self, corpus, tmp_path):
        outdir = tmp_path / "run"
        report = run_pipeline(small_config(corpus, outdir))
        for name in (
            "weights.txt",
            "weights.csv",
            "probe.txt",
            "codebook.dsuk",
            "units_raw.tsv",
            "units_dedup.tsv",
            "units_dedup_bpe.tsv",
            "bpe.model",
            "dprobe_raw.txt",
            "dprobe_dedup.txt",
            "dprobe_dedup_bpe.txt",
            "split_train.txt",
            "split_test.txt",
            "report.txt",
        ):
            assert (outdir / name).exists(), name
        assert [v.name for v in report.variants] == ["raw", "dedup", "dedup_bpe"]
        assert report.num_train + report.num_test == 60
        assert report.weights_sha256_stage1 == report.weights_sha256_after_stage2
        # token counts shrink along the post-processing chain
        raw, deduped, merged = report.variants
        assert raw.tokens >= deduped.tokens >= merged.tokens
        assert raw.tokens == report.total_frames
        # bitrate ordering on a corpus with repeated frames per symbol
        assert raw.bitrate_bps >= deduped.bitrate_bps >= merged.bitrate_bps
        assert merged.vocab_size > deduped.vocab_size

    def test_rerun_is_byte_identical(self, corpus, tmp_path):
        report_a = run_pipeline(small_config(corpus, tmp_path / "a"))
        report_b = run_pipeline(small_config(corpus, tmp_path / "b"))
        text_a = (tmp_path / "a" / "report.txt").read_text(encoding="utf-8")
        text_b = (tmp_path / "b" / "report.txt").read_text(encoding="utf-8")
        assert text_a == text_b
        assert report_a.to_text() == text_a
        assert "\\" not in text_a and "/" not in text_a.replace("_bps", "")  # no paths leak

    def test_dedup_off_merges_zero_gives_raw_only(self, corpus, tmp_path):
        config = small_config(corpus, tmp_path / "raw_only", dedup=False, bpe_merges=0)
        report = run_pipeline(config)
        assert [v.name for v in report.variants] == ["raw"]
        assert report.variants[0].tokens == report.total_frames
        assert not (tmp_path / "raw_only" / "units_dedup.tsv").exists()

    def test_explicit_split_files(self, corpus, tmp_path):
        archive, _, _, _ = corpus
        ids = [u.utt_id for u in archive]
        train_file = tmp_path / "train_ids.txt"
        test_file = tmp_path / "test_ids.txt"
        train_file.write_text("\n".join(ids[:50]) + "\n", encoding="utf-8")
        test_file.write_text("\n".join(ids[50:]) + "\n", encoding="utf-8")
        config = small_config(
            corpus,
            tmp_path / "split",
            train_ids=str(train_file),
            test_ids=str(test_file),
            dedup=False,
        )
        report = run_pipeline(config)
        assert report.num_train == 50
        assert report.num_test == 10

    def test_missing_archive_aborts_with_stage_name(self, corpus, tmp_path):
        config = small_config(corpus, tmp_path / "x", archive=str(tmp_path / "nope.dsua"))
        with pytest.raises(PipelineStageError, match="load"):
            run_pipeline(config)

    def test_weight_csv_marks_planted_layer(self, corpus, tmp_path):
        outdir = tmp_path / "csv"
        run_pipeline(small_config(corpus, outdir, dedup=False, bpe_merges=0))
        rows = (outdir / "weights.csv").read_text(encoding="utf-8").splitlines()
        assert rows[0] == "layer_index,weight"
        weights = {row.split(",")[0]: float(row.split(",")[1]) for row in rows[1:]}
        assert max(weights, key=weights.get) == "2"
        assert abs(sum(weights.values()) - 1.0) < 1e-9


class TestHashSplit:
    def test_deterministic(self):
        assert hash_split("utt00000") == hash_split("utt00000")

    def test_roughly_twenty_percent(self):
        ids = [f"utt{i:05d}" for i in range(2000)]
        fraction = sum(hash_split(utt_id) for utt_id in ids) / len(ids)
        assert 0.15 < fraction < 0.25


class TestExportWeightCsv:
    def test_uniform_four_layers(self):
        buf = io.StringIO()
        export_weight_csv(LayerWeights(np.zeros(4), "finetuned"), buf)
        rows = buf.getvalue().splitlines()
        assert rows[0] == "layer_index,weight"
        assert len(rows) == 5
        for i, row in enumerate(rows[1:], 1):
            label, value = row.split(",")
            assert label == str(i)
            assert float(value) == pytest.approx(0.25, abs=1e-12)

    def test_pretrained_final_norm_row(self):
        buf = io.StringIO()
        export_weight_csv(LayerWeights(np.zeros(4), "pretrained"), buf)
        rows = buf.getvalue().splitlines()
        assert len(rows) == 5  # header + 3 layers + final_norm
        assert rows[-1].startswith("final_norm,")

    def test_rows_sum_to_one(self, rng):
        buf = io.StringIO()
        export_weight_csv(LayerWeights(rng.standard_normal(6), "finetuned"), buf)
        total = sum(float(row.split(",")[1]) for row in buf.getvalue().splitlines()[1:])
        assert abs(total - 1.0) < 1e-9


class TestConfigParsing:
    def test_parse_and_build(self, tmp_path):
        text = "\n".join(
            [
                "# comment",
                "archive=a.dsua",
                "transcripts=a.tsv",
                "outdir=out",
                "kmeans_k=16",
                "dedup=false",
                "stage1_epochs=3",
                "stage2_learning_rate=0.005",
                "",
            ]
        )
        path = tmp_path / "run.cfg"
        path.write_text(text, encoding="utf-8")
        config = load_config(path)
        assert config.kmeans_k == 16
        assert config.dedup is False
        assert config.stage1.epochs == 3
        assert config.stage2.learning_rate == 0.005

    def test_overrides_win(self, tmp_path):
        path = tmp_path / "run.cfg"
        path.write_text("archive=a\ntranscripts=b\noutdir=c\nseed=1\n", encoding="utf-8")
        config = load_config(path, overrides={"seed": "99", "kmeans_k": "4"})
        assert config.seed == 99
        assert config.kmeans_k == 4

    def test_unknown_key_rejected(self):
        with pytest.raises(ValueError):
            parse_config_lines(["bogus=1"])

    def test_missing_required_rejected(self):
        with pytest.raises(ValueError):
            config_from_values({"archive": "a"})

    def test_bad_boolean_rejected(self):
        with pytest.raises(ValueError):
            config_from_values(
                {"archive": "a", "transcripts": "b", "outdir": "c", "dedup": "maybe"}
            )
