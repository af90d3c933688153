"""Command-line entry point: ``entangler <subcommand> [options]``.

Failures exit nonzero and print one JSON line on stderr, e.g.
``{"error": "config", "message": "..."}``.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from .errors import ConfigurationError, EntanglerError
from .pipeline import data as D
from .pipeline import runner as R
from .pipeline.config import load_config
from .tokenize import build_vocabs


def _add_config_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="key = value config file")
    p.add_argument("--set", dest="overrides", action="append", default=[], metavar="KEY=VALUE",
                   help="override one config key (repeatable)")


def _cmd_train(args) -> int:
    cfg = load_config(args.config, args.overrides)
    if args.seeds:
        seeds = [int(s) for s in args.seeds.split(",") if s.strip()]
        summary = R.train_seeds(cfg, seeds)
        print(json.dumps(summary, sort_keys=True))
        print(f"{summary['split']} {summary['metric']}: {summary['mean']:.4f} ± {summary['std']:.4f}")
        return 0
    result = R.train(cfg)
    rep = result.report
    print(json.dumps({"checkpoint": str(result.checkpoint_dir), "best_step": rep["best_step"],
                      "dev": rep["dev"], "test": rep["test"]}, sort_keys=True))
    return 0


def _cmd_pretrain(args) -> int:
    cfg = load_config(args.config, args.overrides + ["task=pretrain"])
    result = R.pretrain(cfg)
    print(json.dumps(result.report, sort_keys=True))
    return 0


def _cmd_evaluate(args) -> int:
    print(json.dumps(R.evaluate(args.checkpoint, args.data), sort_keys=True))
    return 0


def _cmd_predict(args) -> int:
    run = R.load_run(args.checkpoint)
    sentences = [line.split() for line in sys.stdin if line.strip()]
    if not sentences:
        return 0
    out = sys.stdout
    for words, labels in zip(sentences, R.predict(run, sentences)):
        if run.cfg.task == "classify":
            out.write(f"{labels}\n")
        else:
            for w, lab in zip(words, labels):
                out.write(f"{w}\t{lab}\n")
            out.write("\n")
    return 0


def _cmd_build_vocab(args) -> int:
    if args.format == "conll":
        corpus = [w for w, _ in D.load_conll(args.input)]
    elif args.format == "tsv":
        corpus = [w for w, _ in D.load_classification(args.input)]
    else:
        corpus = D.load_corpus(args.input)
    if not corpus:
        raise ConfigurationError(f"{args.input} contains no text")
    sv, cv = build_vocabs(corpus, args.num_merges)
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    sv.save(out / R.SUBWORD_VOCAB)
    cv.save(out / R.CHAR_VOCAB)
    print(json.dumps({"subword_vocab": str(out / R.SUBWORD_VOCAB), "subword_size": len(sv),
                      "char_vocab": str(out / R.CHAR_VOCAB), "char_size": len(cv)}, sort_keys=True))
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="entangler", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="fine-tune on a labeled dataset")
    _add_config_args(p)
    p.add_argument("--seeds", help="comma-separated seeds; runs serially and reports mean ± std")
    p.set_defaults(func=_cmd_train)

    p = sub.add_parser("pretrain", help="matching + MLM pretraining on a text corpus")
    _add_config_args(p)
    p.set_defaults(func=_cmd_pretrain)

    p = sub.add_parser("evaluate", help="score a checkpoint on a dataset")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--data", required=True)
    p.set_defaults(func=_cmd_evaluate)

    p = sub.add_parser("predict", help="label space-separated sentences read from stdin")
    p.add_argument("--checkpoint", required=True)
    p.set_defaults(func=_cmd_predict)

    p = sub.add_parser("build-vocab", help="train subword merges and the character vocabulary")
    p.add_argument("--input", required=True)
    p.add_argument("--format", choices=("text", "conll", "tsv"), default="text")
    p.add_argument("--num-merges", type=int, default=1000)
    p.add_argument("--out-dir", required=True)
    p.set_defaults(func=_cmd_build_vocab)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except EntanglerError as exc:
        sys.stderr.write(json.dumps({"error": exc.kind, "message": str(exc)}) + "\n")
        return 2 if isinstance(exc, ConfigurationError) else 1
    except (OSError, ValueError) as exc:
        sys.stderr.write(json.dumps({"error": type(exc).__name__, "message": str(exc)}) + "\n")
        return 1


if __name__ == "__main__":
    sys.exit(main())
