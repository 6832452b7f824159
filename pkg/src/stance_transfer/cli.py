"""Command-line entry point: ``stance-transfer <stage> [options]``.

Exit codes: 0 success, 1 usage error, 2 data error.
"""

from __future__ import annotations

import argparse
import logging
import sys

from .config import CONFIG_ENV, ConfigError, PipelineConfig
from .corpus import CorpusError
from . import pipeline


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(message)


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("-c", "--config", help=f"YAML/JSON config file (else ${CONFIG_ENV})")
    common.add_argument("--set", action="append", default=[], metavar="SECTION.KEY=VALUE",
                        help="override one config value; repeatable")
    common.add_argument("--artifacts", help="artifact directory (overrides paths.artifacts)")
    common.add_argument("-v", "--verbose", action="store_true")

    ap = _Parser(prog="stance-transfer", description="Transfer-learning stance detection pipeline.")
    sub = ap.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("prepare", parents=[common], help="filter, tokenize, learn phrases, build vocabulary")
    p.add_argument("--raw", help="JSON-lines tweet file (overrides paths.raw)")

    p = sub.add_parser("embed", parents=[common], help="train skip-gram embeddings")
    p.add_argument("--text", action="store_true", help="also write a text export")

    p = sub.add_parser("select-tags", parents=[common], help="choose candidate hashtags")
    p.add_argument("--mode", choices=["similarity", "frequency"])
    p.add_argument("--topic", action="append", help="topic title; repeatable (default: train TSV targets)")

    sub.add_parser("pretrain", parents=[common], help="hashtag-prediction pretraining of the encoder")

    p = sub.add_parser("finetune", parents=[common], help="train per-topic 5-fold ensembles")
    p.add_argument("--train", help="SemEval training TSV (overrides paths.train)")
    p.add_argument("--init-source", choices=["pretrained", "random-rnn", "random-all"])
    p.add_argument("--workers", type=int, default=1, help="topics trained concurrently")

    p = sub.add_parser("predict", parents=[common], help="label a SemEval test TSV")
    p.add_argument("test", help="SemEval-format TSV to label")
    p.add_argument("-o", "--output", help="output TSV (default: artifacts/predict/predictions.tsv)")

    p = sub.add_parser("evaluate", parents=[common], help="score predictions against gold labels")
    p.add_argument("gold")
    p.add_argument("pred")
    p.add_argument("--train", help="training TSV; enables the count vs F1 correlation")
    p.add_argument("-o", "--out-dir", help="report directory (default: artifacts/evaluate)")
    return ap


def _config(args) -> PipelineConfig:
    cfg = PipelineConfig.load(args.config, args.set)
    # explicit flags win over the file and over --set
    if args.artifacts:
        cfg.paths.artifacts = args.artifacts
    if getattr(args, "raw", None):
        cfg.paths.raw = args.raw
    if args.command == "finetune" and args.train:
        cfg.paths.train = args.train
    if getattr(args, "mode", None):
        cfg.tags.mode = args.mode
    if getattr(args, "topic", None):
        cfg.tags.topics = list(args.topic)
    if getattr(args, "init_source", None):
        cfg.finetune.init_source = args.init_source
    return cfg


def run(args) -> None:
    cfg = _config(args)
    cmd = args.command
    if cmd == "prepare":
        m = pipeline.cmd_prepare(cfg)
    elif cmd == "embed":
        m = pipeline.cmd_embed(cfg, text_export=args.text)
    elif cmd == "select-tags":
        m = pipeline.cmd_select_tags(cfg)
    elif cmd == "pretrain":
        m = pipeline.cmd_pretrain(cfg)
    elif cmd == "finetune":
        m = pipeline.cmd_finetune(cfg, workers=args.workers)
    elif cmd == "predict":
        m = pipeline.cmd_predict(cfg, args.test, args.output)
    else:
        m, report = pipeline.cmd_evaluate(cfg, args.gold, args.pred, args.train, args.out_dir)
        sys.stdout.write(report.to_table())
    for name, digest in m.outputs.items():
        print(f"{name}\t{digest[:12]}")


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as exc:
        print(f"stance-transfer: error: {exc}", file=sys.stderr)
        return 1
    except SystemExit as exc:  # --help
        return int(exc.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        run(args)
    except ConfigError as exc:
        print(f"stance-transfer: config error: {exc}", file=sys.stderr)
        return 1
    except (pipeline.PipelineError, CorpusError, ValueError, OSError) as exc:
        print(f"stance-transfer: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
