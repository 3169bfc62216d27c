"""Single command-line entry point for the whole pipeline.

Every subcommand is a thin adapter over one module operation; a config file
(key=value lines) seeds RunConfig and any flag overrides it. Exit codes:
0 success, 1 validation/usage error, 2 I/O error.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import evaluation, framebuilder, ingest, tokenizer, turntaking, vad
from .core import DuplexkitError, RunConfig, TimeGrid
from .duplexlm import (
    LossWeights,
    MetricLog,
    ToyDuplexConfig,
    TrainPreset,
    select_checkpoint,
    train,
)
from .tensorstore import read_tensors, write_tensors

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_IO = 2


class CliError(DuplexkitError):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise CliError(message)


def _run_config(args) -> RunConfig:
    overrides = {}
    if getattr(args, "seed", None) is not None:
        overrides["seed"] = args.seed
    if getattr(args, "config", None):
        return RunConfig.from_file(args.config, overrides)
    return RunConfig(**overrides)


def _vad_config(cfg: RunConfig) -> vad.VadConfig:
    return vad.VadConfig(
        window_ms=cfg.vad_window_ms, hop_ms=cfg.vad_hop_ms,
        threshold_db_offset=cfg.vad_threshold_db_offset,
        absolute_floor_db=cfg.vad_absolute_floor_db,
        min_speech_ms=cfg.vad_min_speech_ms, min_silence_ms=cfg.vad_min_silence_ms)


def _qa_policy(cfg: RunConfig) -> ingest.QaPolicy:
    return ingest.QaPolicy(
        max_clipping_ratio=cfg.qa_max_clipping_ratio,
        max_balance_db=cfg.qa_max_balance_db,
        max_silence_fraction=cfg.qa_max_silence_fraction,
        min_duration_s=cfg.qa_min_duration_s)


def cmd_ingest(args) -> int:
    cfg = _run_config(args)
    manifest = ingest.build_manifest(args.root, _qa_policy(cfg), jobs=args.jobs)
    manifest.dump(args.out)
    active = len(manifest.active_entries)
    print(f"{len(manifest.entries)} conversations, {active} active, "
          f"{len(manifest.entries) - active} excluded -> {args.out}")
    return EXIT_OK


def cmd_vad(args) -> int:
    cfg = _run_config(args)
    vcfg = _vad_config(cfg)
    audio = ingest.read_wav(args.audio)
    segs = {c: vad.detect_channel(audio.channel(c), audio.sample_rate, vcfg)
            for c in range(audio.channels)}
    vad.dump_segments(args.out, segs)
    total = sum(len(s) for s in segs.values())
    print(f"{total} segments over {audio.channels} channel(s) -> {args.out}")
    return EXIT_OK


def cmd_turnstats(args) -> int:
    cfg = _run_config(args)
    vcfg = _vad_config(cfg)
    audio = ingest.read_wav(args.audio)
    if audio.channels != 2:
        raise CliError("turnstats needs a stereo file (one speaker per channel)")
    segs_a = vad.detect_channel(audio.channel(0), audio.sample_rate, vcfg)
    segs_b = vad.detect_channel(audio.channel(1), audio.sample_rate, vcfg)
    events = turntaking.turn_events(segs_a, segs_b, audio.duration_s)
    stats = turntaking.stats_per_minute(events, audio.duration_s)
    name = Path(args.audio).stem
    table = turntaking.stats_table([(name, stats)])
    Path(args.out).write_text(table, encoding="utf-8")
    if args.json_out:
        turntaking.dump_stats(args.json_out, [(name, stats)])
    print(table, end="")
    return EXIT_OK


def cmd_tok_train(args) -> int:
    cfg = _run_config(args)
    corpus = Path(args.corpus).read_text(encoding="utf-8")
    target = args.target_size or cfg.vocab_target_size
    vocab = tokenizer.train_bpe(corpus, target)
    vocab.dump(args.out)
    print(f"vocab of {vocab.size} pieces ({len(vocab.merges)} merges) -> {args.out}")
    return EXIT_OK


def cmd_tok_encode(args) -> int:
    vocab = tokenizer.Vocab.load(args.vocab)
    text = Path(args.infile).read_text(encoding="utf-8") if args.infile else args.text
    if text is None:
        raise CliError("provide --text or --in")
    ids = tokenizer.encode(text, vocab)
    print(" ".join(str(i) for i in ids))
    if args.fragmentation:
        stats = tokenizer.fragmentation(text, vocab)
        print(f"tokens/word {stats.tokens_per_word:.3f}  "
              f"tokens/char {stats.tokens_per_char:.3f}  words {stats.n_words}")
    return EXIT_OK


def cmd_reinit_plan(args) -> int:
    cfg = _run_config(args)
    manifest = tokenizer.TensorManifest.load(args.manifest)
    if args.new_vocab:
        new_size: int | tokenizer.Vocab = tokenizer.Vocab.load(args.new_vocab)
    elif args.new_vocab_size:
        new_size = args.new_vocab_size
    else:
        raise CliError("provide --new-vocab or --new-vocab-size")
    plan = tokenizer.make_migration_plan(manifest, args.old_vocab_size, new_size,
                                         force=args.force)
    plan.dump(args.out)
    n_reinit = sum(1 for a in plan.actions.values() if a.kind == "REINIT")
    print(f"plan: {n_reinit} REINIT, {len(plan.actions) - n_reinit} COPY -> {args.out}")
    if args.checkpoint:
        if not args.out_checkpoint:
            raise CliError("--apply needs --out-checkpoint")
        tensors = read_tensors(args.checkpoint)
        migrated = tokenizer.apply_migration_plan(plan, tensors, seed=cfg.seed)
        write_tensors(args.out_checkpoint, migrated)
        print(f"applied -> {args.out_checkpoint}")
    return EXIT_OK


def cmd_frames(args) -> int:
    cfg = _run_config(args)
    vocab = tokenizer.Vocab.load(args.vocab)
    words = framebuilder.load_alignment(args.alignment)
    n_steps = int(round(args.duration_s * cfg.frame_rate_hz))
    grid = TimeGrid(n_steps=n_steps, rate_hz=cfg.frame_rate_hz)
    text_stream = framebuilder.place_text_tokens(words, vocab, grid)
    rng = cfg.rng("framebuilder.synth")
    audio = framebuilder.synth_audio_tokens(rng, n_steps, cfg.audio_vocab)
    delayed = framebuilder.apply_acoustic_delay(audio, init_id=cfg.audio_vocab)
    chunks = framebuilder.build_chunks(text_stream, delayed, vocab.size,
                                       cfg.audio_vocab, cfg.chunk_steps)
    if not chunks:
        raise CliError(f"{n_steps} steps yield no full {cfg.chunk_steps}-step chunk")
    framebuilder.write_chunks(args.out, chunks)
    ratio = framebuilder.pad_ratio(chunks)
    print(f"{len(chunks)} chunk(s), pad ratio {ratio:.4f} "
          f"(reference corpora: ~0.75 Hindi / ~0.65 English) -> {args.out}")
    return EXIT_OK


def cmd_toy_train(args) -> int:
    cfg = _run_config(args)
    chunks = framebuilder.read_chunks(args.chunks)
    text_vocab = chunks[0].text_vocab
    audio_vocab = chunks[0].audio_vocab
    model_cfg = ToyDuplexConfig(
        d_model=cfg.d_model, temporal_layers=cfg.temporal_layers, heads=cfg.heads,
        d_depth=cfg.d_depth, depth_layers=cfg.depth_layers,
        context_steps=min(cfg.context_steps, args.context or cfg.context_steps),
        text_vocab=text_vocab, audio_vocab=audio_vocab)
    preset = (TrainPreset.finetune() if args.preset == "finetune"
              else TrainPreset.pretrain(lr=args.lr or cfg.lr_pretrain,
                                        eval_interval=args.eval_interval))
    result = train(chunks, model_cfg, preset, n_steps=args.steps,
                   batch_size=args.batch_size, seed=cfg.seed,
                   weights=LossWeights(), verbose=True)
    write_tensors(args.out_checkpoint, result.model.params)
    result.log.dump(args.log)
    print(f"checkpoint -> {args.out_checkpoint}; metrics -> {args.log}")
    return EXIT_OK


def cmd_select_ckpt(args) -> int:
    log = MetricLog.load(args.log)
    step, total = select_checkpoint(log)
    print(f"best checkpoint: step {step}  total validation loss {total:.3f}")
    return EXIT_OK


def cmd_segment(args) -> int:
    segments = evaluation.segment_for_continuation(
        args.duration_s, window_s=args.window_s, prompt_s=args.prompt_s)
    for seg in segments:
        print(json.dumps({"index": seg.index, "window": [seg.window_start_s, seg.window_end_s],
                          "prompt": list(seg.prompt), "target": list(seg.target)}))
    print(f"{len(segments)} segment(s)", file=sys.stderr)
    return EXIT_OK


def cmd_stoi(args) -> int:
    clean = ingest.read_wav(args.clean)
    degraded = ingest.read_wav(args.degraded)
    if clean.channels != 1 or degraded.channels != 1:
        raise CliError("stoi expects mono files")
    score = evaluation.stoi(clean, degraded)
    print(f"{score:.6f}")
    return EXIT_OK


def cmd_ppl(args) -> int:
    records = evaluation.load_nll_records(args.nll)
    print(f"{evaluation.perplexity(records):.4f}")
    return EXIT_OK


def _parse_labeled(spec: str) -> tuple[str, float | None, str]:
    """LABEL[@TAU]=PATH"""
    label, _, path = spec.partition("=")
    if not path:
        raise CliError(f"expected LABEL[@TAU]=PATH, got {spec!r}")
    tau = None
    if "@" in label:
        label, tau_s = label.split("@", 1)
        tau = float(tau_s)
    return label, tau, path


def cmd_report(args) -> int:
    codec_rows = []
    for spec in args.codec or []:
        label, _tau, path = _parse_labeled(spec)
        scores = [json.loads(l) for l in Path(path).read_text().splitlines() if l.strip()]
        stoi_vals = np.array([s["stoi"] for s in scores], dtype=float)
        pesq_vals = np.array([s["pesq"] for s in scores if "pesq" in s], dtype=float)
        codec_rows.append(evaluation.CodecRow(
            label=label, n_segments=len(scores),
            stoi_mean=float(stoi_vals.mean()), stoi_std=float(stoi_vals.std()),
            pesq_mean=float(pesq_vals.mean()) if pesq_vals.size else None,
            pesq_std=float(pesq_vals.std()) if pesq_vals.size else None))
    ppl_rows = []
    for spec in args.ppl or []:
        label, tau, path = _parse_labeled(spec)
        records = evaluation.load_nll_records(path)
        ppl_rows.append(evaluation.PplRow(label=label, temperature=tau,
                                          ppl=evaluation.perplexity(records)))
    turn_rows = []
    for spec in args.turnstats or []:
        label, tau, path = _parse_labeled(spec)
        for _name, stats in turntaking.load_stats(path):
            turn_rows.append(evaluation.TurnRow(label=label, temperature=tau, stats=stats))
    report = evaluation.make_report(codec=codec_rows or None, ppl=ppl_rows or None,
                                    turn=turn_rows or None)
    text = evaluation.render_text(report)
    if args.out:
        Path(args.out).write_text(text, encoding="utf-8")
    if args.json_out:
        Path(args.json_out).write_text(report.to_json(), encoding="utf-8")
    print(text, end="")
    return EXIT_OK


def cmd_serve_ratings(args) -> int:
    import uvicorn

    from .ratesvc import RatingStore, create_app, load_pairs

    cfg = _run_config(args)
    pairs = load_pairs(args.pairs, seed=cfg.seed)
    store = RatingStore(args.store, pairs)
    app = create_app(store, args.audio_dir)
    print(f"serving {len(pairs)} pairs on port {args.port} (store: {args.store})")
    uvicorn.run(app, host=args.host, port=args.port, log_level="warning")
    return EXIT_OK


def build_parser() -> _Parser:
    parser = _Parser(prog="duplexkit",
                     description="full-duplex dialogue pipeline toolkit")
    sub = parser.add_subparsers(dest="command", metavar="COMMAND")

    def add(name, fn, help_text):
        p = sub.add_parser(name, help=help_text)
        p.set_defaults(fn=fn)
        p.add_argument("--config", help="key=value config file")
        p.add_argument("--seed", type=int, help="run seed (overrides config)")
        return p

    p = add("ingest", cmd_ingest, "QA-screen a directory of stereo WAVs into a manifest")
    p.add_argument("--root", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--jobs", type=int, default=1)

    p = add("vad", cmd_vad, "detect speech segments per channel")
    p.add_argument("--audio", required=True)
    p.add_argument("--out", required=True)

    p = add("turnstats", cmd_turnstats, "turn-taking statistics for a stereo conversation")
    p.add_argument("--audio", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--json-out")

    p = add("tok-train", cmd_tok_train, "train a byte-pair vocabulary")
    p.add_argument("--corpus", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--target-size", type=int)

    p = add("tok-encode", cmd_tok_encode, "encode text with a trained vocabulary")
    p.add_argument("--vocab", required=True)
    p.add_argument("--text")
    p.add_argument("--in", dest="infile")
    p.add_argument("--fragmentation", action="store_true")

    p = add("reinit-plan", cmd_reinit_plan, "plan (and optionally apply) the "
                                            "vocabulary migration for a checkpoint")
    p.add_argument("--manifest", required=True)
    p.add_argument("--old-vocab-size", type=int, required=True)
    p.add_argument("--new-vocab")
    p.add_argument("--new-vocab-size", type=int)
    p.add_argument("--force", action="store_true")
    p.add_argument("--out", required=True)
    p.add_argument("--checkpoint", help="apply the plan to this checkpoint")
    p.add_argument("--out-checkpoint")

    p = add("frames", cmd_frames, "build 17-stream token chunks from an alignment")
    p.add_argument("--alignment", required=True)
    p.add_argument("--vocab", required=True)
    p.add_argument("--duration-s", type=float, required=True)
    p.add_argument("--out", required=True)

    p = add("toy-train", cmd_toy_train, "train the toy duplex model on a chunk file")
    p.add_argument("--chunks", required=True)
    p.add_argument("--out-checkpoint", required=True)
    p.add_argument("--log", required=True)
    p.add_argument("--steps", type=int, default=200)
    p.add_argument("--batch-size", type=int, default=8)
    p.add_argument("--preset", choices=("pretrain", "finetune"), default="pretrain")
    p.add_argument("--lr", type=float)
    p.add_argument("--context", type=int)
    p.add_argument("--eval-interval", type=int, default=100)

    p = add("select-ckpt", cmd_select_ckpt, "pick the checkpoint with minimum "
                                            "total validation loss")
    p.add_argument("--log", required=True)

    p = add("segment", cmd_segment, "prompted-continuation windows for a duration")
    p.add_argument("--duration-s", type=float, required=True)
    p.add_argument("--window-s", type=float, default=30.0)
    p.add_argument("--prompt-s", type=float, default=10.0)

    p = add("stoi", cmd_stoi, "intelligibility of a degraded mono WAV vs the clean one")
    p.add_argument("--clean", required=True)
    p.add_argument("--degraded", required=True)

    p = add("ppl", cmd_ppl, "pooled perplexity from per-segment NLL records")
    p.add_argument("--nll", required=True)

    p = add("report", cmd_report, "render the evaluation tables")
    p.add_argument("--codec", action="append", metavar="LABEL=PATH")
    p.add_argument("--ppl", action="append", metavar="LABEL@TAU=PATH")
    p.add_argument("--turnstats", action="append", metavar="LABEL@TAU=PATH")
    p.add_argument("--out")
    p.add_argument("--json-out")

    p = add("serve-ratings", cmd_serve_ratings, "run the human-evaluation HTTP service")
    p.add_argument("--pairs", required=True)
    p.add_argument("--store", required=True)
    p.add_argument("--audio-dir", required=True)
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=8000)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        if not getattr(args, "fn", None):
            parser.print_help()
            return EXIT_USAGE
        return args.fn(args)
    except CliError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except DuplexkitError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except OSError as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
