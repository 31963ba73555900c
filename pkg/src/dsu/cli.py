"""Command-line surface: one subcommand per pipeline capability."""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

import numpy as np

from . import feature_store
from .aggregator import load_weights, weighted_sum
from .discrete_probe import evaluate_discrete, load_discrete_probe, save_discrete_probe, train_discrete
from .errors import DsuError
from .metrics import corpus_cer, levenshtein
from .pipeline import export_weight_csv, load_config, run_pipeline
from .probe import TrainConfig, save_probe, train_stage1
from .quantizer import KmeansConfig, assign, kmeans_train, load_codebook, save_codebook
from .tokenproc import (
    UnitSequence,
    bpe_encode,
    bpe_train,
    bitrate,
    dedup,
    load_bpe,
    read_units,
    save_bpe,
    write_units,
)


def _train_config(args, seed_default: int = 0) -> TrainConfig:
    kwargs = {}
    if getattr(args, "lr", None) is not None:
        kwargs["learning_rate"] = args.lr
    if getattr(args, "weight_lr", None) is not None:
        kwargs["weight_learning_rate"] = args.weight_lr
    if getattr(args, "epochs", None) is not None:
        kwargs["epochs"] = args.epochs
    if getattr(args, "batch_size", None) is not None:
        kwargs["batch_size"] = args.batch_size
    kwargs["seed"] = args.seed if getattr(args, "seed", None) is not None else seed_default
    return TrainConfig(**kwargs)


def _cmd_gen_synth(args) -> int:
    spec = feature_store.SynthSpec(
        num_classes=args.classes,
        num_layers=args.layers,
        planted_layer=args.planted,
        feature_dim=args.dim,
        frames_per_symbol=args.frames_per_symbol,
        noise_sigma=args.noise,
        num_utts=args.utts,
        min_symbols=args.min_symbols,
        max_symbols=args.max_symbols,
        seed=args.seed,
    )
    archive, transcripts = feature_store.synth_generate(spec)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    nbytes = feature_store.write_archive(archive, out)
    transcripts_path = args.out_transcripts or out.with_suffix(".transcripts.tsv")
    feature_store.write_transcripts(transcripts, transcripts_path)
    durations = {u.utt_id: u.num_frames * args.frame_seconds for u in archive}
    durations_path = args.out_durations or out.with_suffix(".durations.tsv")
    feature_store.write_durations(durations, durations_path)
    print(f"wrote {len(archive)} utterances ({nbytes} bytes) to {out}")
    print(f"transcripts: {transcripts_path}")
    print(f"durations: {durations_path}")
    return 0


def _cmd_info(args) -> int:
    archive = feature_store.read_archive(args.archive)
    total_frames = sum(u.num_frames for u in archive)
    print(f"layers={archive.num_layers}")
    print(f"dim={archive.feature_dim}")
    print(f"utterances={len(archive)}")
    print(f"frames={total_frames}")
    return 0


def _cmd_train_weights(args) -> int:
    archive = feature_store.read_archive(args.archive)
    transcripts = feature_store.read_transcripts(args.transcripts)
    config = _train_config(args)
    weights, model, history = train_stage1(archive, transcripts, args.mode, config)
    from .aggregator import save_weights

    save_weights(weights, args.out_weights)
    save_probe(model, args.out_model)
    if history:
        print(f"final epoch loss: {history[-1]:.6f}")
    print(f"weights: {args.out_weights}")
    print(f"model: {args.out_model}")
    return 0


def _cmd_export_weights(args) -> int:
    weights = load_weights(args.weights)
    export_weight_csv(weights, args.out)
    print(f"wrote {args.out}")
    return 0


def _aggregate_archive(archive_path: str, weights_path: str | None):
    archive = feature_store.read_archive(archive_path)
    if weights_path:
        weights = load_weights(weights_path)
        return archive, [weighted_sum(u.frames.astype(np.float64), weights) for u in archive]
    if archive.num_layers != 1:
        raise DsuError("archive has multiple layers; pass --weights to aggregate them")
    return archive, [u.frames[0].astype(np.float64) for u in archive]


def _cmd_train_kmeans(args) -> int:
    archive, aggregated = _aggregate_archive(args.features, args.weights)
    if not aggregated:
        raise DsuError("archive has no utterances")
    frames = np.concatenate(aggregated, axis=0)
    config = KmeansConfig(
        num_units=args.k,
        max_iters=args.max_iters,
        tolerance=args.tol,
        seed=args.seed,
        sample_cap=args.sample_cap,
    )
    codebook, history = kmeans_train(frames, config)
    save_codebook(codebook, args.out)
    print(f"trained {codebook.num_units} centroids on {frames.shape[0]} frames")
    print(f"distortion: {history[0]:.4f} -> {history[-1]:.4f} in {len(history) - 1} iterations")
    return 0


def _cmd_tokenize(args) -> int:
    archive, aggregated = _aggregate_archive(args.archive, args.weights)
    codebook = load_codebook(args.codebook)
    seqs = [
        UnitSequence(u.utt_id, tuple(int(x) for x in assign(features, codebook)))
        for u, features in zip(archive, aggregated)
    ]
    write_units(seqs, args.out)
    print(f"wrote units for {len(seqs)} utterances to {args.out}")
    return 0


def _cmd_dedup(args) -> int:
    seqs = read_units(args.units)
    out = [UnitSequence(s.utt_id, tuple(dedup(s.units))) for s in seqs]
    write_units(out, args.out)
    before = sum(len(s.units) for s in seqs)
    after = sum(len(s.units) for s in out)
    print(f"{before} -> {after} tokens")
    return 0


def _cmd_bpe_train(args) -> int:
    seqs = read_units(args.units)
    model = bpe_train([s.units for s in seqs], args.merges, base_vocab_size=args.base_vocab)
    save_bpe(model, args.out)
    print(f"learned {len(model.merges)} merges (vocab {model.vocab_size})")
    return 0


def _cmd_bpe_apply(args) -> int:
    seqs = read_units(args.units)
    model = load_bpe(args.model)
    out = [UnitSequence(s.utt_id, tuple(bpe_encode(s.units, model))) for s in seqs]
    write_units(out, args.out)
    before = sum(len(s.units) for s in seqs)
    after = sum(len(s.units) for s in out)
    print(f"{before} -> {after} tokens")
    return 0


def _cmd_bitrate(args) -> int:
    seqs = read_units(args.units)
    durations = feature_store.read_durations(args.duration_file)
    missing = [s.utt_id for s in seqs if s.utt_id not in durations]
    if missing:
        raise DsuError(f"missing durations for {missing[:5]}")
    total = sum(durations[s.utt_id] for s in seqs)
    if args.vocab_size is not None:
        vocab_size = args.vocab_size
    else:
        vocab_size = max((max(s.units) for s in seqs if s.units), default=1) + 1
    rate = bitrate([s.units for s in seqs], vocab_size, total)
    print(f"bitrate={rate!r} bits/s (vocab {vocab_size}, {total!r} s)")
    return 0


def _cmd_cer(args) -> int:
    refs = feature_store.read_transcripts(args.ref)
    hyps = feature_store.read_transcripts(args.hyp)
    missing = [utt_id for utt_id in refs if utt_id not in hyps]
    if missing:
        raise DsuError(f"hypotheses missing for {missing[:5]}")
    pairs = [(refs[utt_id], hyps[utt_id]) for utt_id in refs]
    if args.verbose:
        for utt_id in refs:
            edits = levenshtein(refs[utt_id], hyps[utt_id])
            length = len(refs[utt_id])
            utt_cer = 100.0 * edits / length if length else float("inf")
            print(f"{utt_id}\t{edits}\t{length}\t{utt_cer:.2f}%")
    print(f"CER={corpus_cer(pairs):.4f}%")
    return 0


def _cmd_train_discrete(args) -> int:
    seqs = read_units(args.units)
    transcripts = feature_store.read_transcripts(args.transcripts)
    config = _train_config(args)
    model, history = train_discrete(
        seqs, transcripts, args.vocab, config, embedding_dim=args.embedding_dim
    )
    save_discrete_probe(model, args.out)
    if history:
        print(f"final epoch loss: {history[-1]:.6f}")
    print(f"model: {args.out}")
    return 0


def _cmd_eval_cer(args) -> int:
    model = load_discrete_probe(args.model)
    seqs = read_units(args.units)
    transcripts = feature_store.read_transcripts(args.transcripts)
    cer, skipped = evaluate_discrete(model, seqs, transcripts)
    print(f"CER={cer:.4f}%")
    print(f"skipped={skipped}")
    return 0


def _cmd_run(args) -> int:
    overrides: dict[str, str] = {}
    for item in args.set or []:
        if "=" not in item:
            raise DsuError(f"--set expects key=value, got {item!r}")
        key, value = item.split("=", 1)
        overrides[key.strip()] = value.strip()
    for key in ("archive", "transcripts", "outdir", "mode", "seed"):
        value = getattr(args, key, None)
        if value is not None:
            overrides[key] = str(value)
    if args.k is not None:
        overrides["kmeans_k"] = str(args.k)
    if args.merges is not None:
        overrides["bpe_merges"] = str(args.merges)
    if args.no_dedup:
        overrides["dedup"] = "false"
    config = load_config(args.config, overrides)
    report = run_pipeline(config)
    print(report.summary())
    print(f"report: {Path(config.outdir) / 'report.txt'}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="dsu", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-synth", help="generate a planted-layer synthetic corpus")
    p.add_argument("--classes", type=int, required=True)
    p.add_argument("--layers", type=int, required=True)
    p.add_argument("--planted", type=int, required=True)
    p.add_argument("--dim", type=int, required=True)
    p.add_argument("--noise", type=float, required=True)
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--utts", type=int, default=100)
    p.add_argument("--min-symbols", type=int, default=2)
    p.add_argument("--max-symbols", type=int, default=10)
    p.add_argument("--frames-per-symbol", type=int, default=1)
    p.add_argument("--frame-seconds", type=float, default=0.02)
    p.add_argument("--out-transcripts")
    p.add_argument("--out-durations")
    p.set_defaults(func=_cmd_gen_synth)

    p = sub.add_parser("info", help="print archive geometry")
    p.add_argument("--archive", required=True)
    p.set_defaults(func=_cmd_info)

    p = sub.add_parser("train-weights", help="stage 1: learn layer weights with a CTC probe")
    p.add_argument("--archive", required=True)
    p.add_argument("--transcripts", required=True)
    p.add_argument("--mode", choices=("pretrained", "finetuned"), required=True)
    p.add_argument("--out-weights", required=True)
    p.add_argument("--out-model", required=True)
    p.add_argument("--lr", type=float)
    p.add_argument("--weight-lr", type=float)
    p.add_argument("--epochs", type=int)
    p.add_argument("--batch-size", type=int)
    p.add_argument("--seed", type=int)
    p.set_defaults(func=_cmd_train_weights)

    p = sub.add_parser("export-weights", help="write the weight-distribution CSV")
    p.add_argument("--weights", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_export_weights)

    p = sub.add_parser("train-kmeans", help="train a codebook on (aggregated) features")
    p.add_argument("--features", required=True, help="feature archive path")
    p.add_argument("--weights", help="layer weights; required for multi-layer archives")
    p.add_argument("--k", type=int, required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.add_argument("--max-iters", type=int, default=100)
    p.add_argument("--tol", type=float, default=1e-6)
    p.add_argument("--sample-cap", type=int)
    p.set_defaults(func=_cmd_train_kmeans)

    p = sub.add_parser("tokenize", help="assign every frame to its nearest centroid")
    p.add_argument("--archive", required=True)
    p.add_argument("--weights")
    p.add_argument("--codebook", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_tokenize)

    p = sub.add_parser("dedup", help="collapse runs of equal adjacent units")
    p.add_argument("--units", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_dedup)

    p = sub.add_parser("bpe-train", help="learn pair merges over unit streams")
    p.add_argument("--units", required=True)
    p.add_argument("--merges", type=int, required=True)
    p.add_argument("--base-vocab", type=int)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_bpe_train)

    p = sub.add_parser("bpe-apply", help="apply learned merges to unit streams")
    p.add_argument("--units", required=True)
    p.add_argument("--model", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_bpe_apply)

    p = sub.add_parser("bitrate", help="bits per second of a token file")
    p.add_argument("--units", required=True)
    p.add_argument("--duration-file", required=True)
    p.add_argument("--vocab-size", type=int)
    p.set_defaults(func=_cmd_bitrate)

    p = sub.add_parser("cer", help="corpus CER between two transcript files")
    p.add_argument("--ref", required=True)
    p.add_argument("--hyp", required=True)
    p.add_argument("--verbose", action="store_true")
    p.set_defaults(func=_cmd_cer)

    p = sub.add_parser("train-discrete", help="train the discrete-token probe")
    p.add_argument("--units", required=True)
    p.add_argument("--transcripts", required=True)
    p.add_argument("--vocab", type=int, required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--embedding-dim", type=int, default=64)
    p.add_argument("--lr", type=float)
    p.add_argument("--epochs", type=int)
    p.add_argument("--batch-size", type=int)
    p.add_argument("--seed", type=int)
    p.set_defaults(func=_cmd_train_discrete)

    p = sub.add_parser("eval-cer", help="evaluate a discrete probe on token streams")
    p.add_argument("--model", required=True)
    p.add_argument("--units", required=True)
    p.add_argument("--transcripts", required=True)
    p.set_defaults(func=_cmd_eval_cer)

    p = sub.add_parser("run", help="run the full pipeline from a config file")
    p.add_argument("--config", required=True)
    p.add_argument("--set", action="append", metavar="KEY=VALUE", help="override a config key")
    p.add_argument("--archive")
    p.add_argument("--transcripts")
    p.add_argument("--outdir")
    p.add_argument("--mode", choices=("pretrained", "finetuned"))
    p.add_argument("--seed", type=int)
    p.add_argument("--k", type=int)
    p.add_argument("--merges", type=int)
    p.add_argument("--no-dedup", action="store_true")
    p.set_defaults(func=_cmd_run)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (DsuError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
