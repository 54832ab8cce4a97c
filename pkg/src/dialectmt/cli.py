"""Command-line entry point for every workflow: corpus synthesis, aligner
training, NAT/AT training, augmentation, translation, pipeline runs, BLEU
scoring, and latency benchmarking.

Primary results go to stdout, logs to stderr. Every subcommand that writes
outputs drops a run manifest (flags, config snapshot, seed, wall-clock)
beside them so the run can be reproduced from the manifest alone.
Exit codes: 0 success, 2 usage, 3 I/O failure, 4 training divergence.
"""

from __future__ import annotations

import argparse
import json
import sys
import time
from dataclasses import asdict

from . import __version__
from . import alignment, evaluate, synth
from .at_model import augment_corpus, translate_at
from .errors import DialectMTError
from .model import ModelConfig, load_checkpoint, save_checkpoint, translate
from .pipeline import DEFAULT_ORDER, PipelineContext, build_pipeline, run_pipeline
from .textproc import Vocab, build_vocab, load_lexicon, segment_words
from .training import GlancingSchedule, LossWeights, train

EXIT_IO = 3
EXIT_DIVERGED = 4

CONFIG_KEYS = {
    "d_model": int, "n_branches": int, "n_heads": int, "n_layers": int,
    "d_seg": int, "max_len": int, "length_offset_range": int,
    "lambda_start": float, "lambda_end": float,
    "epochs": int, "batch_size": int, "learning_rate": float,
    "optimizer": str, "token_weight": float, "length_weight": float,
    "alignment_weight": float, "seed": int, "early_stop_bleu": float,
    "collapse_repeats": int,
}


def load_run_config(path) -> dict:
    """Flat key-value file: one ``key = value`` (or ``key value``) per line."""
    out = {}
    with open(path, encoding="utf-8") as f:
        for lineno, line in enumerate(f, 1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            key, _, value = (p.strip() for p in line.partition("="))
            if not value:
                parts = line.split(None, 1)
                if len(parts) != 2:
                    raise DialectMTError(f"{path}:{lineno}: bad config line {line!r}")
                key, value = parts[0], parts[1].strip()
            if key not in CONFIG_KEYS:
                raise DialectMTError(f"{path}:{lineno}: unknown config key {key!r}")
            out[key] = CONFIG_KEYS[key](value)
    return out


def write_manifest(out_path, args, extra=None):
    manifest = {
        "tool": "dialectmt",
        "version": __version__,
        "command": sys.argv[1:],
        "flags": {k: v for k, v in vars(args).items() if k != "func"},
        "wall_clock": time.strftime("%Y-%m-%dT%H:%M:%S"),
    }
    if extra:
        manifest.update(extra)
    with open(str(out_path) + ".manifest.json", "w", encoding="utf-8") as f:
        json.dump(manifest, f, indent=2, default=str)


def _read_lines(path):
    with open(path, encoding="utf-8") as f:
        return [line.rstrip("\n") for line in f if line.rstrip("\n")]


def cmd_synth(args):
    inventory = synth.make_inventory(args.vocab_size, args.seed)
    rules = synth.default_rules(inventory, seed=args.seed,
                                char_frac=args.char_frac,
                                word_frac=args.word_frac,
                                reorder_frac=args.reorder_frac)
    pairs = synth.generate(rules, args.n, len_range=(args.len_min, args.len_max),
                           seed=args.seed, inventory=inventory,
                           rep_prob=args.rep_prob)
    synth.write_corpus(pairs, args.out)
    alignment.write_pharaoh([p.gold for p in pairs], args.out + ".align")
    with open(args.out + ".lexicon", "w", encoding="utf-8") as f:
        for word in sorted(synth.lexicon_for(pairs)):
            f.write(word + "\n")
    synth.save_rules(rules, args.out + ".rules")
    write_manifest(args.out, args, {"seed": args.seed, "pairs": len(pairs)})
    print(f"{len(pairs)} pairs -> {args.out}")


def cmd_align(args):
    corpus = synth.read_corpus(args.corpus)
    table = alignment.train_ibm1(corpus, iterations=args.iterations)
    forward = [alignment.viterbi_align(table, p) for p in corpus]
    if args.symmetrize:
        rev_table = alignment.train_ibm1([(t, s) for s, t in corpus],
                                         iterations=args.iterations)
        reverse = [alignment.viterbi_align(rev_table, (t, s)) for s, t in corpus]
        forward = [alignment.symmetrize(f, r) for f, r in zip(forward, reverse)]
    alignment.write_pharaoh(forward, args.out)
    write_manifest(args.out, args, {"seed": None, "pairs": len(corpus)})
    print(f"{len(corpus)} alignments -> {args.out}")


def _training_setup(args):
    cfg = load_run_config(args.config) if args.config else {}
    corpus = synth.read_corpus(args.corpus)
    vocab = build_vocab([(" ".join(s).replace(" ", ""), " ".join(t).replace(" ", ""))
                         for s, t in corpus])
    lexicon = frozenset(w for s, t in corpus for w in s + t)
    val = synth.read_corpus(args.val) if args.val else None
    return cfg, corpus, vocab, lexicon, val


def _run_training(args, model_type):
    cfg, corpus, vocab, lexicon, val = _training_setup(args)
    config = ModelConfig(
        d_model=cfg.get("d_model", 64),
        n_branches=cfg.get("n_branches", 2),
        n_heads=cfg.get("n_heads", 2),
        n_layers=cfg.get("n_layers", 1),
        d_seg=cfg.get("d_seg", 16),
        max_len=cfg.get("max_len", 256),
        length_offset_range=cfg.get("length_offset_range", 20),
        vocab_size=len(vocab),
        model_type=model_type,
        collapse_repeats=bool(cfg.get("collapse_repeats", 1)),
    ).validate()
    seed = cfg.get("seed", args.seed)
    epochs = cfg.get("epochs", 20)
    batch_size = cfg.get("batch_size", 32)
    alignments = None
    weights = LossWeights(token=cfg.get("token_weight", 1.0),
                          length=cfg.get("length_weight", 0.1),
                          alignment=cfg.get("alignment_weight",
                                            0.5 if getattr(args, "align", None) else 0.0))
    if model_type == "nat" and getattr(args, "align", None):
        alignments = alignment.read_pharaoh(
            args.align, lengths=[(len(s), len(t)) for s, t in corpus])
    elif model_type == "nat":
        weights = LossWeights(token=weights.token, length=weights.length, alignment=0.0)
    augmented = synth.read_corpus(args.augmented) if getattr(args, "augmented", None) else []
    params, report = train(
        corpus, augmented, config,
        schedule=GlancingSchedule(cfg.get("lambda_start", 0.5),
                                  cfg.get("lambda_end", 0.3), total_steps=1),
        weights=weights, seed=seed, vocab=vocab, lexicon=lexicon,
        alignments=alignments, val_pairs=val, epochs=epochs,
        batch_size=batch_size, lr=cfg.get("learning_rate", 2e-3),
        optimizer=cfg.get("optimizer", "adam"),
        early_stop_bleu=cfg.get("early_stop_bleu"))
    save_checkpoint(params, args.out)
    vocab.save(args.out + ".vocab")
    with open(args.out + ".lexicon", "w", encoding="utf-8") as f:
        for word in sorted(lexicon):
            f.write(word + "\n")
    if args.report:
        report.write_tsv(args.report)
    write_manifest(args.out, args, {"seed": seed, "config": asdict(config),
                                    "epochs_run": len(report.rows)})
    if report.rows and val:
        print(f"val_bleu {report.rows[-1]['val_bleu']:.4f}")
    if report.diverged:
        print("error:divergence: non-finite loss, kept last finite checkpoint",
              file=sys.stderr)
        return EXIT_DIVERGED
    return 0


def cmd_train_nat(args):
    # the glancing schedule total is fixed inside train() from epochs x steps
    return _run_training(args, "nat")


def cmd_train_at(args):
    return _run_training(args, "at")


def _load_model(args):
    params = load_checkpoint(args.model)
    vocab = Vocab.load(args.vocab or args.model + ".vocab")
    lexicon = frozenset(load_lexicon(args.lexicon)) if args.lexicon else (
        frozenset(load_lexicon(args.model + ".lexicon")))
    return params, vocab, lexicon


def cmd_augment(args):
    params, vocab, lexicon = _load_model(args)
    mono = _read_lines(args.mono)
    pairs = augment_corpus(params, mono, vocab, lexicon)
    with open(args.out, "w", encoding="utf-8") as f:
        for src, tgt in pairs:
            f.write(" ".join(segment_words(src, lexicon)) + "\t"
                    + " ".join(segment_words(tgt, lexicon)) + "\n")
    write_manifest(args.out, args, {"pairs": len(pairs)})
    print(f"{len(pairs)} pairs -> {args.out}")


def cmd_translate(args):
    params, vocab, lexicon = _load_model(args)
    texts = [args.text] if args.text is not None else _read_lines(args.input)
    fn = translate if params.config.model_type == "nat" else translate_at
    for text in texts:
        print(fn(text, params, vocab, lexicon).text)


def cmd_pipeline(args):
    if args.model:
        params, vocab, lexicon = _load_model(args)
        ctx = PipelineContext(params=params, vocab=vocab, lexicon=lexicon)
    else:
        ctx = PipelineContext(identity_translation=True)
    stage_names = _read_lines(args.stages) if args.stages else list(DEFAULT_ORDER)
    stages = build_pipeline(stage_names)
    texts = [args.text] if args.text is not None else _read_lines(args.input)
    rows = []
    for text in texts:
        doc = run_pipeline(text, stages, ctx)
        rows.append((text, doc.translated or "", " ".join(doc.phonemes)))
    if args.out:
        with open(args.out, "w", encoding="utf-8") as f:
            for row in rows:
                f.write("\t".join(row) + "\n")
        write_manifest(args.out, args, {"lines": len(rows)})
    else:
        for row in rows:
            print("\t".join(row))


def cmd_bleu(args):
    cands = [list(line) for line in _read_lines(args.cand)]
    refs = [list(line) for line in _read_lines(args.ref)]
    report = evaluate.bleu(cands, refs, smooth=args.smooth)
    print(f"{report.bleu:.4f}")
    if args.verbose:
        print(f"precisions {' '.join(f'{p:.4f}' for p in report.precisions)} "
              f"bp {report.brevity_penalty:.4f}", file=sys.stderr)


def cmd_bench(args):
    from .training import prepare_examples
    params, vocab, lexicon = _load_model(args)
    corpus = synth.read_corpus(args.corpus)
    examples = prepare_examples(corpus, vocab, params.config)
    testset = [ex.src for ex in examples[:args.n]]
    at_params = load_checkpoint(args.at) if args.at else None
    report = evaluate.bench_latency(params, testset, repetitions=args.reps,
                                    seconds_per_char=args.seconds_per_char,
                                    at_params=at_params,
                                    target_len=args.target_len)
    line = (f"mean_latency {report.mean_latency:.6f}\t"
            f"rtf_proxy {report.rtf_proxy:.6f}")
    if report.speedup is not None:
        line += f"\tspeedup {report.speedup:.2f}"
    print(line)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="dialectmt",
        description="Dialect translation frontend: synthesize corpora, train "
                    "and evaluate translation models, run the TTS text pipeline.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate a synthetic dialect corpus")
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--vocab-size", type=int, default=50)
    p.add_argument("--len-min", type=int, default=3)
    p.add_argument("--len-max", type=int, default=8)
    p.add_argument("--char-frac", type=float, default=0.5)
    p.add_argument("--word-frac", type=float, default=0.2)
    p.add_argument("--reorder-frac", type=float, default=0.0)
    p.add_argument("--rep-prob", type=float, default=0.05)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("align", help="train the statistical aligner")
    p.add_argument("--corpus", required=True)
    p.add_argument("--iterations", type=int, default=5)
    p.add_argument("--symmetrize", action="store_true")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_align)

    for name, fn in (("train-nat", cmd_train_nat), ("train-at", cmd_train_at)):
        p = sub.add_parser(name, help=f"train the {name.split('-')[1].upper()} model")
        p.add_argument("--corpus", required=True)
        p.add_argument("--val")
        p.add_argument("--config", help="flat key=value run config")
        p.add_argument("--seed", type=int, default=0)
        p.add_argument("--report")
        p.add_argument("--out", required=True)
        if name == "train-nat":
            p.add_argument("--align", help="Pharaoh word alignments for supervision")
            p.add_argument("--augmented", help="teacher-translated TSV pairs")
        p.set_defaults(func=fn)

    p = sub.add_parser("augment", help="teacher-translate monolingual text")
    p.add_argument("--model", required=True)
    p.add_argument("--vocab")
    p.add_argument("--lexicon")
    p.add_argument("--mono", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_augment)

    p = sub.add_parser("translate", help="translate text with a checkpoint")
    p.add_argument("--model", required=True)
    p.add_argument("--vocab")
    p.add_argument("--lexicon")
    p.add_argument("--text")
    p.add_argument("--input", help="file of lines to translate")
    p.set_defaults(func=cmd_translate)

    p = sub.add_parser("pipeline", help="run the TTS frontend pipeline")
    p.add_argument("--model")
    p.add_argument("--vocab")
    p.add_argument("--lexicon")
    p.add_argument("--stages", help="file of stage names, one per line")
    p.add_argument("--text")
    p.add_argument("--input")
    p.add_argument("--out")
    p.set_defaults(func=cmd_pipeline)

    p = sub.add_parser("bleu", help="corpus BLEU of candidate vs reference files")
    p.add_argument("--cand", required=True)
    p.add_argument("--ref", required=True)
    p.add_argument("--smooth", action="store_true")
    p.add_argument("--verbose", action="store_true")
    p.set_defaults(func=cmd_bleu)

    p = sub.add_parser("bench", help="latency benchmark (NAT, optionally vs AT)")
    p.add_argument("--model", required=True)
    p.add_argument("--vocab")
    p.add_argument("--lexicon")
    p.add_argument("--at", help="AT checkpoint for the speedup ratio")
    p.add_argument("--corpus", required=True)
    p.add_argument("--n", type=int, default=100)
    p.add_argument("--reps", type=int, default=3)
    p.add_argument("--target-len", type=int)
    p.add_argument("--seconds-per-char", type=float, default=0.2)
    p.set_defaults(func=cmd_bench)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        code = args.func(args)
    except OSError as exc:
        print(f"error:io: {exc}", file=sys.stderr)
        return EXIT_IO
    except DialectMTError as exc:
        print(f"error:{type(exc).__name__}: {exc}", file=sys.stderr)
        return 1
    return code or 0


if __name__ == "__main__":
    sys.exit(main())
