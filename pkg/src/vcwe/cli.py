"""Command-line surface: preprocess, train, eval-sim, neighbors, export.

Logs go to stderr; machine-readable results go to stdout. Exit codes:
0 success, 1 usage/validation, 2 data/coverage error, 3 numeric failure.
All randomness funnels through --seed.
"""

from __future__ import annotations

import argparse
import os
import sys

from . import corpus, evaluation, glyphs, trainer
from .errors import (
    CheckpointFormatError, CheckpointVersionError, EmbeddingFormatError,
    EmptyVocabularyError, EvaluationError, GlyphDimensionError, GlyphFormatError,
    GlyphStateError, MissingGlyphsError, NumericError, TextDecodeError,
)

_DATA_ERRORS = (
    EmptyVocabularyError, MissingGlyphsError, EvaluationError, EmbeddingFormatError,
    GlyphFormatError, GlyphDimensionError, GlyphStateError, CheckpointFormatError,
    CheckpointVersionError, TextDecodeError,
)


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(message)


def _log(message: str) -> None:
    print(message, file=sys.stderr)


def _require_file(path, what: str) -> None:
    if not os.path.isfile(path):
        raise UsageError(f"{what} not found: {path}")


def _require_dir(path, what: str) -> None:
    if not os.path.isdir(path):
        raise UsageError(f"{what} not found: {path}")


def _read_config_file(path) -> dict:
    """key=value lines; '#' starts a comment."""
    _require_file(path, "config file")
    values = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise UsageError(f"{path}:{lineno}: expected key=value")
            key, value = (part.strip() for part in line.split("=", 1))
            values[key] = value
    return values


_CONFIG_KEYS = {
    "dim": int, "window": int, "negatives": int, "learning_rate": float,
    "batch_size": int, "epochs": int, "seed": int, "min_count": int,
    "char_dim": int, "attn_dim": int, "clip_norm": float, "subsample": float,
    "mode": str, "precision": str, "ablate_cnn": bool, "ablate_lstm": bool,
    "workers": int,
}


def _coerce(key: str, raw: str):
    kind = _CONFIG_KEYS[key]
    if raw.lower() == "none":
        return None
    if kind is bool:
        if raw.lower() in ("true", "1", "yes"):
            return True
        if raw.lower() in ("false", "0", "no"):
            return False
        raise UsageError(f"config key {key}: expected a boolean, got {raw!r}")
    try:
        return kind(raw)
    except ValueError as exc:
        raise UsageError(f"config key {key}: {exc}") from exc


def _resolve_train_config(args) -> trainer.TrainConfig:
    """Precedence: command-line flag > config file entry > built-in default."""
    file_values = _read_config_file(args.config) if args.config else {}
    for key in file_values:
        if key not in _CONFIG_KEYS:
            raise UsageError(f"unknown config key {key!r}")
    config = trainer.TrainConfig()
    for key in _CONFIG_KEYS:
        flag = getattr(args, key, None)
        if flag is not None:
            setattr(config, key, flag)
        elif key in file_values:
            setattr(config, key, _coerce(key, file_values[key]))
    if args.no_subsample:
        config.subsample = None
    config.validate()
    return config


# -- subcommands ----------------------------------------------------------

def cmd_preprocess(args) -> int:
    _require_file(args.corpus, "corpus file")
    with open(args.corpus, "rb") as fh:
        sentences = corpus.normalize_text(fh.read())
    vocab = corpus.build_vocabulary(sentences, args.min_count)
    stream = corpus.TokenStream.encode(sentences, vocab)
    os.makedirs(args.out, exist_ok=True)
    vocab.save(os.path.join(args.out, "vocab.tsv"))
    stream.save(os.path.join(args.out, "stream.txt"))
    _log(f"wrote {args.out}/vocab.tsv and {args.out}/stream.txt")
    print(f"vocab_size={len(vocab)} charset_size={len(vocab.charset())}")
    return 0


def _load_prep(prep_dir):
    _require_dir(prep_dir, "preprocess directory")
    vocab_path = os.path.join(prep_dir, "vocab.tsv")
    stream_path = os.path.join(prep_dir, "stream.txt")
    _require_file(vocab_path, "vocabulary file")
    _require_file(stream_path, "token stream file")
    return corpus.Vocabulary.load(vocab_path), corpus.TokenStream.load(stream_path)


def cmd_train(args) -> int:
    vocab, stream = _load_prep(args.prep)
    config = _resolve_train_config(args)

    bank = None
    if not config.ablate_cnn:
        if args.synthetic_glyphs:
            bank = glyphs.synth_bank(vocab.charset(), config.seed).center()
        elif args.glyphs:
            _require_dir(args.glyphs, "glyph directory")
            raw = glyphs.load_glyph_bank(args.glyphs)
            raw.require_coverage(vocab.charset())
            bank = raw.center()
        elif not args.resume:
            raise UsageError("training needs --glyphs DIR or --synthetic-glyphs "
                             "(or --ablate-cnn)")

    if args.resume:
        _require_file(args.resume, "checkpoint")
        raw_bank = None
        if not config.ablate_cnn:
            if args.synthetic_glyphs:
                raw_bank = glyphs.synth_bank(vocab.charset(), config.seed)
            elif args.glyphs:
                raw_bank = glyphs.load_glyph_bank(args.glyphs)
            else:
                raise UsageError("resume needs the original glyph source")
        model, optimizer, epochs_done = trainer.load_checkpoint(args.resume, bank=raw_bank)
        target_epochs = args.epochs if args.epochs is not None else model.config.epochs
        model.config.epochs = target_epochs
        trainer.run_epochs(model, optimizer, stream, model.config,
                           epochs_done, target_epochs, log=_log)
        epochs_done = target_epochs
    else:
        result = trainer.train(vocab, stream, config, bank=bank, log=_log)
        model, optimizer = result.model, result.optimizer
        epochs_done = config.epochs

    os.makedirs(args.out, exist_ok=True)
    ckpt_path = os.path.join(args.out, "model.ckpt")
    emb_path = os.path.join(args.out, "embeddings.txt")
    trainer.save_checkpoint(ckpt_path, model, optimizer, epochs_done)
    trainer.export_embeddings(model, emb_path)
    print(f"checkpoint={ckpt_path} embeddings={emb_path}")
    return 0


def cmd_eval_sim(args) -> int:
    _require_file(args.embeddings, "embeddings file")
    _require_file(args.dataset, "dataset file")
    emb = evaluation.load_embeddings(args.embeddings)
    ds = evaluation.load_similarity_dataset(args.dataset)
    report = evaluation.evaluate_similarity(emb, ds)
    print(f"rho={report.rho:.6f} pairs={report.evaluated} skipped={report.skipped}")
    return 0


def cmd_neighbors(args) -> int:
    _require_file(args.embeddings, "embeddings file")
    emb = evaluation.load_embeddings(args.embeddings)
    k = args.k
    if k < 1:
        raise UsageError(f"-k must be >= 1, got {k}")
    if k > len(emb) - 1:
        _log(f"warning: k={k} exceeds vocabulary; clipping to {len(emb) - 1}")
        k = len(emb) - 1
    for word, sim in evaluation.nearest_neighbors(emb, args.word, k):
        print(f"{word}\t{sim:.6f}")
    return 0


def cmd_export(args) -> int:
    _require_file(args.checkpoint, "checkpoint")
    model, _, _ = trainer.load_checkpoint(args.checkpoint)
    trainer.export_embeddings(model, args.out)
    _log(f"wrote {args.out}")
    return 0


# -- parser wiring ----------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="vcwe",
                     description="Glyph-aware Chinese word embeddings: train and evaluate.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("preprocess", help="build vocabulary and id stream from raw text")
    p.add_argument("--corpus", required=True, help="pre-segmented text, one sentence per line")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--min-count", dest="min_count", type=int, default=100)
    p.set_defaults(func=cmd_preprocess)

    p = sub.add_parser("train", help="train embeddings from a preprocessed corpus")
    p.add_argument("--prep", required=True, help="directory from 'preprocess'")
    p.add_argument("--glyphs", help="directory of PGM glyph files")
    p.add_argument("--synthetic-glyphs", action="store_true",
                   help="use deterministic synthetic glyphs instead of files")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--resume", help="checkpoint to continue from")
    p.add_argument("--config", help="key=value config file (flags override)")
    p.add_argument("--dim", type=int)
    p.add_argument("--window", type=int)
    p.add_argument("--negatives", type=int)
    p.add_argument("--subsample", type=float)
    p.add_argument("--no-subsample", action="store_true")
    p.add_argument("--learning-rate", "--lr", dest="learning_rate", type=float)
    p.add_argument("--batch-size", dest="batch_size", type=int)
    p.add_argument("--epochs", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--min-count", dest="min_count", type=int)
    p.add_argument("--char-dim", dest="char_dim", type=int)
    p.add_argument("--attn-dim", dest="attn_dim", type=int)
    p.add_argument("--clip-norm", dest="clip_norm", type=float)
    p.add_argument("--mode", choices=["deterministic", "async"])
    p.add_argument("--precision", choices=["double", "single"])
    p.add_argument("--workers", type=int)
    p.add_argument("--ablate-cnn", dest="ablate_cnn", action="store_const", const=True,
                   help="replace CNN+images with a trainable character table")
    p.add_argument("--ablate-lstm", dest="ablate_lstm", action="store_const", const=True,
                   help="replace Bi-LSTM+attention with averaging")
    p.set_defaults(func=cmd_train, ablate_cnn=None, ablate_lstm=None)

    p = sub.add_parser("eval-sim", help="Spearman correlation on a similarity dataset")
    p.add_argument("--embeddings", required=True)
    p.add_argument("--dataset", required=True, help="TSV: word1<TAB>word2<TAB>score")
    p.set_defaults(func=cmd_eval_sim)

    p = sub.add_parser("neighbors", help="top-k cosine neighbors of a word")
    p.add_argument("--embeddings", required=True)
    p.add_argument("--word", required=True)
    p.add_argument("-k", type=int, default=10)
    p.set_defaults(func=cmd_neighbors)

    p = sub.add_parser("export", help="re-export embeddings from a checkpoint")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_export)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        return args.func(args)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except SystemExit as exc:  # argparse --help
        return int(exc.code or 0)
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except _DATA_ERRORS as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except NumericError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
