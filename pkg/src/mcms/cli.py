"""Command-line interface.

::

    mcms pipeline --config run.yaml --out results/
    mcms simulate --config sim.yaml --seed 7 --out responses.csv
    mcms report results/master.json --format markdown
    mcms ingest|describe|efa|cfa|invariance --config run.yaml [--out file]

Flags override the corresponding config-file fields.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import logging
import sys
from pathlib import Path

from .pipeline import (
    EXIT_CONFIG,
    EXIT_OK,
    EXIT_STAGE,
    ConfigError,
    PipelineConfig,
    StageError,
    build_document,
    run_pipeline,
)
from .report import FORMATS, ReportSchemaError, load_document, render_report
from .scale import builtin_mcms, load_scale
from .simulate import load_config, simulate_responses

SECTIONS = {
    "ingest": "ingest",
    "describe": "descriptives",
    "efa": "efa",
    "cfa": "cfa",
    "invariance": "invariance",
}


def _bool(text):
    v = text.strip().lower()
    if v in ("true", "yes", "1", "on"):
        return True
    if v in ("false", "no", "0", "off"):
        return False
    raise argparse.ArgumentTypeError(f"expected true or false, got {text!r}")


def _analysis_args(p):
    p.add_argument("--config", required=True, help="pipeline config file (YAML)")
    p.add_argument("--out", help="output location")
    p.add_argument("--decision-mode", choices=("cfi-only", "conjunctive"))
    p.add_argument("--chisq-multiplier", choices=("n-1", "n"))
    p.add_argument("--use-scaled", type=_bool, metavar="{true,false}")
    p.add_argument("--restricted", type=_bool, metavar="{true,false}")
    p.add_argument("--groups", choices=("countries", "income", "all"))


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="mcms", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, help_text in (
        ("pipeline", "run every stage and write all report artifacts"),
        ("ingest", "parse and spam-filter responses"),
        ("describe", "composite means, correlations and alpha"),
        ("efa", "EFA item reduction on the pooled sample"),
        ("cfa", "confirmatory factor analysis per group"),
        ("invariance", "measurement-invariance ladder"),
    ):
        _analysis_args(sub.add_parser(name, help=help_text))
    p = sub.add_parser("simulate", help="generate a response file from a generator config")
    p.add_argument("--config", required=True, help="generator config file (YAML)")
    p.add_argument("--seed", type=int)
    p.add_argument("--out", help="response file to write (default stdout)")
    p.add_argument("--scale", help="scale file (default: built-in MCMS)")
    p = sub.add_parser("report", help="render tables from a master document")
    p.add_argument("document")
    p.add_argument("--format", choices=FORMATS, default="text")
    p.add_argument("--out", help="file to write (default stdout)")
    return parser


def _overrides(args) -> dict:
    model = {}
    if args.decision_mode:
        model["decision_mode"] = args.decision_mode
    if args.chisq_multiplier:
        model["chisq_multiplier"] = args.chisq_multiplier
    if args.use_scaled is not None:
        model["use_scaled"] = args.use_scaled
    if args.restricted is not None:
        model["restricted"] = args.restricted
    out = {"model": model} if model else {}
    if args.groups:
        out["groups"] = args.groups
    return out


def _emit(text, dest):
    if dest:
        Path(dest).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)


def _cmd_pipeline(args) -> int:
    over = _overrides(args)
    if args.out:
        over["out"] = str(Path(args.out).resolve())
    cfg = PipelineConfig.load(args.config, over)
    result = run_pipeline(cfg)
    if result.status != EXIT_OK:
        print(result.message, file=sys.stderr)
        return result.status
    for name in sorted(result.artifacts):
        print(result.artifacts[name])
    return EXIT_OK


def _cmd_stage(args) -> int:
    cfg = PipelineConfig.load(args.config, _overrides(args))
    doc, _ = build_document(cfg, until=args.command)
    section = {SECTIONS[args.command]: doc[SECTIONS[args.command]]}
    _emit(json.dumps(section, sort_keys=True, indent=2) + "\n", args.out)
    return EXIT_OK


def _cmd_simulate(args) -> int:
    cfg = load_config(args.config)
    if args.seed is not None:
        cfg = dataclasses.replace(cfg, seed=args.seed)
    scale = load_scale(args.scale) if args.scale else builtin_mcms()
    data = simulate_responses(cfg)
    _emit(data.write(scale), args.out)
    return EXIT_OK


def _cmd_report(args) -> int:
    doc = load_document(args.document)
    tables = render_report(doc, args.format)
    _emit("\n".join(tables.values()), args.out)
    return EXIT_OK


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
    )
    handlers = {"pipeline": _cmd_pipeline, "simulate": _cmd_simulate, "report": _cmd_report}
    handler = handlers.get(args.command, _cmd_stage)
    try:
        return handler(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except StageError as exc:
        print(str(exc), file=sys.stderr)
        return EXIT_STAGE
    except (OSError, ValueError, ReportSchemaError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
