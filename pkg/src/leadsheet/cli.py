"""Command-line entry point: ``leadsheet <verb> [options]``.

Exit codes: 0 success, 1 usage error, 2 data error, 3 numerical failure.
Outputs are written atomically. Relative output paths that are not given
explicitly default to ``$LEADSHEET_OUTPUT_DIR`` (or the working directory).
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from pathlib import Path

import numpy as np

from .features import FEATURE_KINDS, extract_feature, network_features
from .metrics import evaluate
from .midi import export_midi, import_midi
from .pianoroll import ARRANGEMENT_TRACKS, LEADSHEET_TRACKS, DataError, LeadSheetDocument, Phrase, ingest_leadsheet
from .rollio import load_phrases, save_phrases, save_rolls
from .synth import generate_synthetic_corpus
from .tensor.checkpoint import CheckpointError, atomic_write_bytes
from .training import (
    ArrangementTrainer,
    LeadSheetTrainer,
    NumericalError,
    TrainConfig,
    arrange_bars,
    conditioning_similarity,
    load_trainer,
    sample_leadsheets,
)
from .validation import parse_tracks

OUTPUT_DIR_ENV = "LEADSHEET_OUTPUT_DIR"

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_NUMERIC = 0, 1, 2, 3

log = logging.getLogger("leadsheet")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(message)


def _output(path: str | None, default_name: str) -> Path:
    if path is not None:
        return Path(path)
    return Path(os.environ.get(OUTPUT_DIR_ENV, ".")) / default_name


def _write_json(path: Path, obj) -> None:
    atomic_write_bytes(path, (json.dumps(obj, indent=2, sort_keys=True) + "\n").encode("utf-8"))


def _read_text(path) -> str:
    try:
        return Path(path).read_text(encoding="utf-8")
    except (OSError, UnicodeDecodeError) as exc:
        raise DataError(f"cannot read {path}: {exc}") from exc


def load_leadsheet_phrases(path, transpose: bool = False) -> list[Phrase]:
    """Lead-sheet phrases from a JSON document, a phrase container or a two-track MIDI file."""
    suffix = Path(path).suffix.lower()
    if suffix == ".json":
        return ingest_leadsheet(LeadSheetDocument.from_json(_read_text(path)), transpose=transpose)
    if suffix in (".mid", ".midi"):
        return [import_midi(path, LEADSHEET_TRACKS)]
    return load_phrases(path)


def _concat(phrases: list[Phrase]) -> Phrase:
    return Phrase(np.concatenate([p.bars for p in phrases]), phrases[0].tracks)


def _train_config(args) -> TrainConfig:
    base = TrainConfig.from_json(args.config).to_dict() if args.config else TrainConfig().to_dict()
    for key in ("iterations", "batch_size", "seed", "eval_interval", "n_critic", "checkpoint_interval"):
        value = getattr(args, key)
        if value is not None:
            base[key] = value
    if args.gp_weight is not None:
        base["gp_weight"] = args.gp_weight
    if args.lr is not None:
        base["lr"] = args.lr
    try:
        return TrainConfig.from_dict(base)
    except (TypeError, ValueError) as exc:
        raise UsageError(f"invalid training configuration: {exc}") from exc


# verbs ------------------------------------------------------------------


def cmd_ingest(args) -> int:
    phrases = ingest_leadsheet(LeadSheetDocument.from_json(_read_text(args.input)), transpose=args.transpose)
    out = _output(args.out, Path(args.input).with_suffix(".pr").name)
    save_phrases(out, phrases)
    log.info("wrote %d phrases to %s", len(phrases), out)
    return EXIT_OK


def cmd_synth_corpus(args) -> int:
    corpus = generate_synthetic_corpus(args.seed, args.count)
    out = _output(args.out_dir, "corpus")
    save_phrases(out / "leadsheets.pr", list(corpus.leadsheets))
    save_phrases(out / "arrangements.pr", list(corpus.arrangements))
    for i, doc in enumerate(corpus.documents[: args.documents]):
        _write_json(out / f"leadsheet-{i:04d}.json", doc.to_dict())
    log.info("wrote %d lead-sheet and %d multi-track phrases to %s", len(corpus.leadsheets), len(corpus.arrangements), out)
    return EXIT_OK


def cmd_extract_features(args) -> int:
    phrases = load_phrases(args.input)
    bars = np.concatenate([p.bars for p in phrases])
    values = extract_feature(bars, args.feature, phrases[0].tracks)
    out = _output(args.out, f"{Path(args.input).stem}.{args.feature}.pr")
    save_rolls(out, values, kind="feature", extra={"feature_kind": args.feature, "source_tracks": list(phrases[0].tracks)})
    log.info("wrote %s features %s to %s", args.feature, values.shape, out)
    return EXIT_OK


def _run_training(trainer, args, out: Path) -> int:
    metrics_path = Path(args.metrics) if args.metrics else out.with_suffix(".metrics.jsonl")
    seen = len(trainer.history)

    def callback(t, record):
        nonlocal seen
        if len(t.history) > seen:
            lines = "".join(json.dumps(h, sort_keys=True) + "\n" for h in t.history)
            atomic_write_bytes(metrics_path, lines.encode("utf-8"))
            seen = len(t.history)
        if record["iteration"] % 10 == 0:
            log.info("iteration %d d_loss %.4f g_loss %.4f", record["iteration"], record["d_loss"], record["g_loss"])

    trainer.train(callback=callback)
    trainer.save(out)
    log.info("saved checkpoint at iteration %d to %s", trainer.iteration, out)
    return EXIT_OK


def cmd_train_leadsheet(args) -> int:
    config = None if args.resume else _train_config(args)
    data = np.stack([p.bars for p in load_phrases(args.data)])
    out = _output(args.out, "leadsheet.ckpt")
    if args.resume:
        trainer = load_trainer(args.resume, data, checkpoint_dir=out.parent)
        if not isinstance(trainer, LeadSheetTrainer):
            raise DataError(f"{args.resume} is not a lead-sheet checkpoint")
        if args.iterations is not None:
            trainer.config.iterations = args.iterations
    else:
        trainer = LeadSheetTrainer(config, data, checkpoint_dir=out.parent)
    return _run_training(trainer, args, out)


def cmd_train_arrangement(args) -> int:
    config = None if args.resume else _train_config(args)
    phrases = load_phrases(args.data)
    bars = np.concatenate([p.bars for p in phrases])
    out = _output(args.out, f"arrangement-{args.feature}.ckpt")
    if args.resume:
        trainer = load_trainer(args.resume, bars, checkpoint_dir=out.parent)
        if not isinstance(trainer, ArrangementTrainer):
            raise DataError(f"{args.resume} is not an arrangement checkpoint")
        if args.iterations is not None:
            trainer.config.iterations = args.iterations
    else:
        trainer = ArrangementTrainer(config, args.feature, bars, checkpoint_dir=out.parent)
    return _run_training(trainer, args, out)


def cmd_generate(args) -> int:
    trainer = load_trainer(args.checkpoint)
    if not isinstance(trainer, LeadSheetTrainer):
        raise DataError(f"{args.checkpoint} is not a lead-sheet checkpoint")
    rolls = sample_leadsheets(trainer.generator, args.n, np.random.default_rng(args.seed))
    phrases = [Phrase.leadsheet(r) for r in rolls]
    out = _output(args.out, "generated.pr")
    save_phrases(out, phrases)
    if args.midi:
        export_midi(_concat(phrases), args.midi)
    log.info("wrote %d generated phrases to %s", len(phrases), out)
    return EXIT_OK


def cmd_arrange(args) -> int:
    trainer = load_trainer(args.checkpoint)
    if not isinstance(trainer, ArrangementTrainer):
        raise DataError(f"{args.checkpoint} is not an arrangement checkpoint")
    if args.feature is not None and args.feature != trainer.variant:
        raise DataError(f"checkpoint was trained on {trainer.variant!r}, not {args.feature!r}")
    lead = _concat(load_leadsheet_phrases(args.input, transpose=args.transpose))
    if lead.tracks != LEADSHEET_TRACKS:
        raise DataError(f"lead sheet must have tracks {LEADSHEET_TRACKS}, got {lead.tracks}")
    conditions = network_features(lead.bars, trainer.variant, lead.tracks)
    bars = arrange_bars(trainer.generator, conditions, np.random.default_rng(args.seed))
    arrangement = Phrase.arrangement(bars)
    out = _output(args.out, "arrangement.mid")
    export_midi(arrangement, out)
    report = evaluate(bars, ARRANGEMENT_TRACKS)
    report.extra["feature"] = trainer.variant
    report.extra["condition_similarity"] = conditioning_similarity(conditions, trainer.variant, bars)
    metrics_path = Path(args.metrics) if args.metrics else out.with_suffix(".metrics.json")
    _write_json(metrics_path, report.to_dict())
    log.info("wrote %d arranged bars to %s and metrics to %s", len(bars), out, metrics_path)
    return EXIT_OK


def cmd_evaluate(args) -> int:
    if Path(args.input).suffix.lower() in (".mid", ".midi"):
        phrases = [import_midi(args.input, parse_tracks(args.tracks) if args.tracks else None)]
    else:
        phrases = load_phrases(args.input)
    tracks = parse_tracks(args.tracks) if args.tracks else phrases[0].tracks
    if len(tracks) != len(phrases[0].tracks):
        raise DataError(f"{len(tracks)} track names given for {len(phrases[0].tracks)} tracks")
    rolls = np.stack([p.bars for p in phrases])
    td_pair = tuple(parse_tracks(args.td_pair)) if args.td_pair else None
    if td_pair is not None and (len(td_pair) != 2 or not set(td_pair) <= set(tracks)):
        raise DataError(f"--td-pair must name two of {list(tracks)}")
    report = evaluate(rolls, tracks, td_pair)
    text = report.to_json()
    if args.out:
        atomic_write_bytes(Path(args.out), (text + "\n").encode("utf-8"))
    else:
        print(text)
    return EXIT_OK


def cmd_export_midi(args) -> int:
    phrases = load_phrases(args.input)
    if args.index is not None:
        if not 0 <= args.index < len(phrases):
            raise DataError(f"phrase index {args.index} out of range (have {len(phrases)})")
        phrases = [phrases[args.index]]
    out = _output(args.out, Path(args.input).with_suffix(".mid").name)
    export_midi(_concat(phrases), out)
    log.info("wrote %s", out)
    return EXIT_OK


def _add_training_options(p):
    p.add_argument("--data", required=True, help="phrase container with training data")
    p.add_argument("--out", help="checkpoint path")
    p.add_argument("--config", help="JSON file with TrainConfig keys")
    p.add_argument("--resume", help="checkpoint to continue from")
    p.add_argument("--metrics", help="JSON-lines file receiving one report per evaluation")
    p.add_argument("--iterations", type=int)
    p.add_argument("--batch-size", type=int)
    p.add_argument("--n-critic", type=int)
    p.add_argument("--gp-weight", type=float)
    p.add_argument("--lr", type=float)
    p.add_argument("--seed", type=int)
    p.add_argument("--eval-interval", type=int)
    p.add_argument("--checkpoint-interval", type=int)


def build_parser() -> argparse.ArgumentParser:
    common = _Parser(add_help=False)
    common.add_argument("-v", "--verbose", action="store_true", help="log progress to standard error")
    parser = _Parser(prog="leadsheet", description="Lead-sheet generation and arrangement toolkit.", parents=[common])
    sub = parser.add_subparsers(dest="verb", required=True, parser_class=_Parser)
    add = sub.add_parser

    def add_parser(name, **kwargs):
        return add(name, parents=[common], **kwargs)

    sub.add_parser = add_parser

    p = sub.add_parser("ingest", help="render a JSON lead sheet into 8-bar phrases")
    p.add_argument("--in", dest="input", required=True)
    p.add_argument("--out")
    p.add_argument("--transpose", action="store_true", help="transpose to C using the document key")
    p.set_defaults(func=cmd_ingest)

    p = sub.add_parser("synth-corpus", help="write a synthetic lead-sheet and multi-track corpus")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--count", type=int, default=512)
    p.add_argument("--documents", type=int, default=0, help="also write the first N lead sheets as JSON")
    p.add_argument("--out-dir")
    p.set_defaults(func=cmd_synth_corpus)

    p = sub.add_parser("extract-features", help="per-bar harmonic features of a phrase container")
    p.add_argument("--in", dest="input", required=True)
    p.add_argument("--feature", choices=FEATURE_KINDS, default="chord-roll")
    p.add_argument("--out")
    p.set_defaults(func=cmd_extract_features)

    p = sub.add_parser("train-leadsheet", help="train the lead-sheet generator")
    _add_training_options(p)
    p.set_defaults(func=cmd_train_leadsheet)

    p = sub.add_parser("train-arrangement", help="train a feature-conditioned arrangement generator")
    _add_training_options(p)
    p.add_argument("--feature", choices=FEATURE_KINDS, default="chord-roll")
    p.set_defaults(func=cmd_train_arrangement)

    p = sub.add_parser("generate", help="sample lead-sheet phrases from a checkpoint")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--n", type=int, default=1)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out")
    p.add_argument("--midi", help="also export all phrases as one MIDI file")
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("arrange", help="arrange a lead sheet for five tracks")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--in", dest="input", required=True, help=".json lead sheet, .pr phrases or .mid")
    p.add_argument("--feature", choices=FEATURE_KINDS, help="variant check; defaults to the checkpoint's")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--transpose", action="store_true")
    p.add_argument("--out")
    p.add_argument("--metrics", help="metrics JSON path (default: next to --out)")
    p.set_defaults(func=cmd_arrange)

    p = sub.add_parser("evaluate", help="EB/UPC/QN/TD report for phrases")
    p.add_argument("--in", dest="input", required=True)
    p.add_argument("--tracks", help="comma-separated track names")
    p.add_argument("--td-pair", help="two comma-separated track names")
    p.add_argument("--out")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("export-midi", help="write a phrase container as a MIDI file")
    p.add_argument("--in", dest="input", required=True)
    p.add_argument("--index", type=int, help="export only this phrase")
    p.add_argument("--out")
    p.set_defaults(func=cmd_export_midi)
    return parser


def run(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as exc:
        print(f"leadsheet: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except SystemExit as exc:  # --help
        return EXIT_OK if exc.code in (0, None) else EXIT_USAGE
    if args.verbose and not logging.getLogger().handlers:
        logging.basicConfig(level=logging.INFO, format="%(message)s")
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"leadsheet: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (DataError, CheckpointError, OSError) as exc:
        print(f"leadsheet: data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except NumericalError as exc:
        print(f"leadsheet: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
