"""Command-line interface.

Every subcommand reads one declarative JSON config (--config) and accepts
generic --set key=value overrides plus a few dedicated flags. Exit codes:
0 success, 2 bad or missing input, 1 runtime failure.
"""

from __future__ import annotations

import argparse
import json
import sys

from .config import RunConfig, apply_overrides, parse_flag_bool
from .fixtures import write_fixtures
from .ioutil import InputError
from .pipeline import (
    evaluate_stories,
    rerun_from_manifest,
    run_pipeline,
    stage_enrich,
    stage_generate,
    train_distiller_command,
    train_generator_command,
    train_lm_command,
)

EXIT_OK = 0
EXIT_RUNTIME = 1
EXIT_INPUT = 2


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="storybridge",
        description="Distill terms from image features, bridge them with a knowledge graph, generate stories.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", help="JSON config file (RunConfig fields)")
        p.add_argument("--set", action="append", default=[], metavar="KEY=VALUE", help="override one config field")
        return p

    for name, help_text in (
        ("train-distiller", "train the image-to-term model"),
        ("train-lm", "train the term language model"),
        ("train-generator", "train the term-to-story model"),
    ):
        p = common(sub.add_parser(name, help=help_text))
        p.add_argument("--out", help="checkpoint path to write")
        if name == "train-generator":
            p.add_argument("--finetune-from", default="", help="continue from this checkpoint")

    p = common(sub.add_parser("enrich", help="insert knowledge-graph bridges into term paths"))
    p.add_argument("--terms", help="term-path JSONL from the distill stage")
    p.add_argument("--kg", action="append", default=[], metavar="TSV[:SOURCE[:onehop]]", help="tuple file; repeatable")
    p.add_argument("--lm", help="term LM checkpoint")
    p.add_argument("--cap", type=int, help="candidate cap")
    p.add_argument("--two-hop", dest="two_hop", help="on or off")
    p.add_argument("--out", help="output JSONL of selected paths")

    p = common(sub.add_parser("generate", help="decode stories from term paths"))
    p.add_argument("--path", help="term-path JSONL")
    p.add_argument("--model", help="generator checkpoint")
    p.add_argument("--alpha", type=float, help="intra-sentence repetition penalty")
    p.add_argument("--gamma", type=float, help="inter-sentence repetition penalty")
    p.add_argument("--beam", type=int, help="beam size")
    p.add_argument("--out", help="output JSONL of stories")

    p = common(sub.add_parser("pipeline", help="run distill, enrich, and generate end to end"))
    p.add_argument("--out-dir", help="output directory")
    p.add_argument("--from-manifest", help="re-execute a recorded run")

    p = common(sub.add_parser("eval", help="score generated stories against references"))
    p.add_argument("--candidates", required=True, help="stories JSONL")
    p.add_argument("--references", required=True, help="reference corpus JSONL")

    p = common(sub.add_parser("make-fixtures", help="write the synthetic fixture suite"))
    p.add_argument("--out-dir", required=True)
    p.add_argument("--seed", type=int, default=0)

    return parser


def load_config(args) -> RunConfig:
    config = RunConfig.from_file(args.config) if args.config else RunConfig()
    return apply_overrides(config, args.set)


def _parse_kg_flag(value: str) -> dict:
    parts = value.split(":")
    entry = {"path": parts[0], "two_hop": True}
    if len(parts) > 1 and parts[1]:
        entry["source"] = parts[1]
    if len(parts) > 2:
        if parts[2] not in ("onehop", "twohop"):
            raise InputError(f"--kg: eligibility must be 'onehop' or 'twohop', got {parts[2]!r}")
        entry["two_hop"] = parts[2] == "twohop"
    return entry


def run(args) -> int:
    config = load_config(args)
    log = lambda msg: print(msg, file=sys.stderr)  # noqa: E731

    if args.command == "train-distiller":
        if args.out:
            config.distiller_model = args.out
        print(train_distiller_command(config, log=log))
    elif args.command == "train-lm":
        if args.out:
            config.lm_model = args.out
        print(train_lm_command(config, log=log))
    elif args.command == "train-generator":
        if args.out:
            config.generator_model = args.out
        print(train_generator_command(config, log=log, finetune_from=args.finetune_from))
    elif args.command == "enrich":
        if args.kg:
            config.kg = [_parse_kg_flag(v) for v in args.kg]
        if args.lm:
            config.lm_model = args.lm
        if args.cap is not None:
            config.candidate_cap = args.cap
        if args.two_hop is not None:
            config.two_hop = parse_flag_bool(args.two_hop, "--two-hop")
        terms = args.terms or config.terms_path
        out = args.out or "paths.jsonl"
        stage_enrich(config, terms, out)
        print(out)
    elif args.command == "generate":
        if args.model:
            config.generator_model = args.model
        if args.alpha is not None:
            config.alpha = args.alpha
        if args.gamma is not None:
            config.gamma = args.gamma
        if args.beam is not None:
            config.beam_size = args.beam
        paths = args.path or config.terms_path
        out = args.out or "stories.jsonl"
        stage_generate(config, paths, out)
        print(out)
    elif args.command == "pipeline":
        if args.from_manifest:
            manifest = rerun_from_manifest(args.from_manifest, out_dir=args.out_dir)
        else:
            manifest = run_pipeline(config, out_dir=args.out_dir)
        print(json.dumps(manifest["outputs"], sort_keys=True))
    elif args.command == "eval":
        scores = evaluate_stories(args.candidates, args.references)
        print(json.dumps(scores, sort_keys=True))
    elif args.command == "make-fixtures":
        paths = write_fixtures(args.out_dir, seed=args.seed)
        print(json.dumps(paths, sort_keys=True))
    else:  # pragma: no cover
        raise InputError(f"unknown command {args.command!r}")
    return EXIT_OK


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return run(args)
    except InputError as exc:
        print(f"input error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except Exception as exc:  # noqa: BLE001
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
