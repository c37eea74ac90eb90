"""Command-line entry point: personas | run | analyze | report | replay."""

from __future__ import annotations

import argparse
import dataclasses
import json
import sys
from pathlib import Path

from .analysis import summarize_runs, write_all_metrics
from .backend import make_backend
from .config import DEFAULT_TOML, RunConfig, load_config
from .engine import replay_run, run_experiment
from .errors import ConfigError, DivergenceError, OutputDirNotEmptyError, ValuesimError
from .persona import build_population, dump_personas, load_dilemmas

EXIT_OK = 0
EXIT_CONFIG = 1
EXIT_RUNTIME = 2


class _Parser(argparse.ArgumentParser):
    # Bad flags are a configuration problem, not a runtime one.
    def error(self, message):
        self.exit(EXIT_CONFIG, f"{self.prog}: error: {message}\n")


def _apply_seed_override(config: RunConfig, seed: int | None) -> RunConfig:
    if seed is None:
        return config
    config.seed = seed
    config.backend = dataclasses.replace(config.backend, seed=seed)
    return config


def _refuse_overwrite(path: Path, force: bool) -> None:
    if path.exists() and not force:
        raise ConfigError(f"{path} already exists (use --force to overwrite)")


def _cmd_personas(args) -> int:
    config = _apply_seed_override(load_config(args.config), args.seed)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    target = out / "personas.json"
    _refuse_overwrite(target, args.force)
    corpus = load_dilemmas()
    backend = make_backend(config.backend)
    warnings: list[str] = []
    profiles = build_population(
        config.population, corpus, backend, config.seed, warn=warnings.append
    )
    target.write_text(dump_personas(profiles), encoding="utf-8")
    for message in warnings:
        print(f"warning: {message}", file=sys.stderr)
    print(f"{len(profiles)} personas (with elicitation traces) written to {target}")
    return EXIT_OK


def _cmd_run(args) -> int:
    config = _apply_seed_override(load_config(args.config), args.seed)
    run_dir, summary = run_experiment(config, args.out, force=args.force)
    print(
        "run {run_id} finished: {agents} agents, {rounds} rounds, "
        "{conversations} conversations, {proposals} proposals, "
        "{comments} comments".format(run_id=config.effective_run_id(), **summary)
    )
    print(f"artifacts in {run_dir}")
    return EXIT_OK


def _cmd_analyze(args) -> int:
    run_dir = Path(args.run)
    _refuse_overwrite(run_dir / "metrics" / "report.json", args.force)
    report = write_all_metrics(run_dir)
    print(f"metrics written to {run_dir / 'metrics'}")
    gini = report["participation"]["gini"]
    print(
        f"gini={gini} modularity={report['modularity']} "
        f"continuity={report['topical_continuity']} "
        f"emergence={report['emergence_index']}"
    )
    return EXIT_OK


_REPORT_COLUMNS = [
    ("participation.gini", "gini"),
    ("participation.entropy_bits", "entropy"),
    ("assortativity_by_category", "assort"),
    ("modularity", "modularity"),
    ("bridge_edge_fraction", "bridge"),
    ("topical_continuity", "continuity"),
    ("value_stability", "stability"),
    ("emergence_index", "emergence"),
]


def _cmd_report(args) -> int:
    table = summarize_runs(args.runs)
    conditions = table["conditions"]
    if not conditions:
        print("no runs")
        return EXIT_OK
    width = max(len(c) for c in conditions)
    header = "condition".ljust(width) + "".join(
        f"  {short:>15}" for _, short in _REPORT_COLUMNS
    )
    print(header)
    for condition, row in conditions.items():
        cells = []
        for metric, _ in _REPORT_COLUMNS:
            stats = row["metrics"][metric]
            if stats["n"] == 0:
                cells.append(f"  {'-':>15}")
            else:
                cells.append(f"  {stats['mean']:8.4f}±{stats['stddev']:6.4f}")
        print(condition.ljust(width) + "".join(cells))
    if args.out:
        Path(args.out).write_text(
            json.dumps(table, indent=2, sort_keys=True) + "\n", encoding="utf-8"
        )
        print(f"aggregate table written to {args.out}")
    return EXIT_OK


def _cmd_replay(args) -> int:
    out_dir = replay_run(args.run, args.out, force=args.force)
    print(f"replay verified: {out_dir} matches {args.run}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="valuesim", description=__doc__)
    parser.add_argument(
        "--print-defaults",
        action="store_true",
        help="print the default config file and exit",
    )
    sub = parser.add_subparsers(dest="command")

    p = sub.add_parser("personas", help="elicit personas only")
    p.add_argument("--config", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, default=None, help="override the config seed")
    p.add_argument("--force", action="store_true")
    p.set_defaults(func=_cmd_personas)

    p = sub.add_parser("run", help="run the full two-stage simulation")
    p.add_argument("--config", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, default=None, help="override the config seed")
    p.add_argument("--force", action="store_true")
    p.set_defaults(func=_cmd_run)

    p = sub.add_parser("analyze", help="compute metrics for a finished run")
    p.add_argument("--run", required=True)
    p.add_argument("--force", action="store_true")
    p.set_defaults(func=_cmd_analyze)

    p = sub.add_parser("report", help="aggregate metrics across runs")
    p.add_argument("--runs", required=True, nargs="+")
    p.add_argument("--out", default=None, help="also write the table as JSON")
    p.set_defaults(func=_cmd_report)

    p = sub.add_parser("replay", help="re-execute a run from its event log")
    p.add_argument("--run", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--force", action="store_true")
    p.set_defaults(func=_cmd_replay)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.print_defaults:
        print(DEFAULT_TOML, end="")
        return EXIT_OK
    if not getattr(args, "command", None):
        parser.print_help()
        return EXIT_CONFIG
    try:
        return args.func(args)
    except (ConfigError, OutputDirNotEmptyError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except DivergenceError as exc:
        print(f"replay failed: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    except ValuesimError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    raise SystemExit(main())
