"""Command-line surface.

Subcommands: baseline, train, eval, report, synthetic, serve. Exit codes:
0 ok, 2 input/config problem, 3 numeric divergence during training,
4 artifact mismatch (checkpoint does not belong to the configured scenario).
"""

from __future__ import annotations

import argparse
import json
import sys

from .envsim import InvalidScenarioError
from .kpi import EmptyTraceError, TraceMismatchError
from .maddpg import NumericDivergenceError
from .runs import (
    ArtifactMismatchError,
    ConfigError,
    load_config,
    run_baseline,
    run_eval,
    run_report,
    run_synthetic,
    run_train,
)
from .scenario import ScenarioError

EXIT_OK = 0
EXIT_INPUT = 2
EXIT_NUMERIC = 3
EXIT_MISMATCH = 4


def _add_config_args(p: argparse.ArgumentParser, episodes: bool = False) -> None:
    p.add_argument("--config", required=True, help="path to a TOML run config")
    p.add_argument("--out", default=None, help="output directory (overrides config)")
    p.add_argument("--seed", type=int, default=None, help="seed override")
    if episodes:
        p.add_argument("--episodes", type=int, default=None, help="episode-count override")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="energaize",
        description="Energy-community simulator, multi-agent trainer and KPI reporter",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("baseline", help="simulate the no-control baseline")
    _add_config_args(p)

    p = sub.add_parser("train", help="train the multi-agent controller")
    _add_config_args(p, episodes=True)

    p = sub.add_parser("eval", help="deterministic episode from a checkpoint")
    _add_config_args(p)
    p.add_argument(
        "--checkpoints", default=None,
        help="checkpoint directory (default: <out>/train/checkpoints)",
    )

    p = sub.add_parser("report", help="KPI report: controlled vs baseline")
    _add_config_args(p)
    p.add_argument("--baseline-trace", default=None, help="baseline trace CSV")
    p.add_argument("--controlled-trace", default=None, help="controlled trace CSV")

    p = sub.add_parser("synthetic", help="write a synthetic scenario")
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--dwellings", type=int, required=True)
    p.add_argument("--days", type=int, required=True)
    p.add_argument("--out", required=True, help="descriptor JSON path to write")

    p = sub.add_parser("serve", help="run the HTTP service")
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=8000)

    return parser


def _overrides(args: argparse.Namespace) -> dict:
    out = {}
    if getattr(args, "out", None) is not None:
        out["out"] = args.out
    if getattr(args, "seed", None) is not None:
        out["seed"] = args.seed
    if getattr(args, "episodes", None) is not None:
        out["episodes"] = args.episodes
    return out


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "synthetic":
            summary = run_synthetic(args.seed, args.dwellings, args.days, args.out)
        elif args.command == "serve":
            from .service.app import create_app
            import uvicorn

            uvicorn.run(create_app(), host=args.host, port=args.port)
            return EXIT_OK
        else:
            cfg = load_config(args.config, _overrides(args))
            if args.command == "baseline":
                summary = run_baseline(cfg)
            elif args.command == "train":
                summary = run_train(cfg)
            elif args.command == "eval":
                summary = run_eval(cfg, args.checkpoints)
            else:
                summary = run_report(cfg, args.baseline_trace, args.controlled_trace)
    except (
        ConfigError,
        ScenarioError,
        InvalidScenarioError,
        TraceMismatchError,
        EmptyTraceError,
        FileNotFoundError,
        ValueError,
    ) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except NumericDivergenceError as exc:
        print(f"numeric divergence: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except ArtifactMismatchError as exc:
        print(f"artifact mismatch: {exc}", file=sys.stderr)
        return EXIT_MISMATCH
    print(json.dumps(summary, indent=2, sort_keys=True))
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
