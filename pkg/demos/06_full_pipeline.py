"""The whole two-stage pipeline in one call.

Generates a planted corpus, then: stage-1 weight learning -> freeze ->
continuous evaluation -> k-means -> tokenization -> raw / dedup / dedup+merge
variants -> discrete probes -> report. Everything lands in ./pipeline_demo/.
"""

from pathlib import Path

from dsu import (
    PipelineConfig,
    SynthSpec,
    TrainConfig,
    run_pipeline,
    synth_generate,
    write_archive,
    write_transcripts,
)

workdir = Path("pipeline_demo")
workdir.mkdir(exist_ok=True)

spec = SynthSpec(
    num_classes=4,
    num_layers=4,
    planted_layer=2,
    feature_dim=8,
    frames_per_symbol=3,
    noise_sigma=0.1,
    num_utts=150,
    min_symbols=4,
    max_symbols=10,
    seed=42,
)
archive, texts = synth_generate(spec)
write_archive(archive, workdir / "corpus.dsua")
write_transcripts(texts, workdir / "corpus.transcripts.tsv")
print(f"generated {len(archive)} utterances into {workdir}/")

config = PipelineConfig(
    archive=str(workdir / "corpus.dsua"),
    transcripts=str(workdir / "corpus.transcripts.tsv"),
    outdir=str(workdir / "run"),
    mode="finetuned",
    kmeans_k=8,
    bpe_merges=8,
    dedup=True,
    seed=0,
    embedding_dim=16,
    stage1=TrainConfig(learning_rate=1e-2, weight_learning_rate=5e-2, epochs=40, batch_size=8),
    stage2=TrainConfig(learning_rate=1e-2, epochs=30, batch_size=8),
)
report = run_pipeline(config)

print("\n" + report.summary())
print("\nreport.txt:")
print((workdir / "run" / "report.txt").read_text(encoding="utf-8"))
