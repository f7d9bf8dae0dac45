"""Command-line front end: ``forklat <mode> [options]``."""

from __future__ import annotations

import argparse
import os
import sys
from pathlib import Path

from .errors import ConfigInvalid, DistSpecError, ForklatError, Infeasible, NonFiniteMoment
from .experiment import MODES, ExperimentSpec, Scenario, dump_spec, format_report, load_spec, run_spec, write_csv
from .presets import PRESETS, preset

EXIT_OK = 0
EXIT_FAILED_CELLS = 1
EXIT_CONFIG = 2
EXIT_INFEASIBLE = 3
EXIT_NONFINITE = 4

_SCENARIO_FLAGS = (
    ("n", int), ("r_f", str), ("r", str), ("k", int), ("lambda", float), ("dist", str),
    ("policy", str), ("gamma", float), ("r_max", int),
)


def _width(v: str):
    return int(v) if v.lstrip("-").isdigit() else v


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="forklat", description="Latency and cost of redundant fork-join systems.")
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=Path, help="YAML experiment file")
    common.add_argument("--out", type=Path, help="CSV output path (default: stdout)")
    common.add_argument("--seed", type=int, help="master seed (fallback: $FORKLAT_SEED, then the config)")
    common.add_argument("--jobs", type=int, default=1, help="parallel worker processes")
    common.add_argument("--replications", type=int)
    common.add_argument("--num-jobs", type=int, dest="num_jobs")
    common.add_argument("--dump-config", action="store_true", help="print the resolved config and exit")
    group = common.add_argument_group("scenario overrides")
    for name, _ in _SCENARIO_FLAGS:
        flag = "--" + name.replace("_", "-")
        group.add_argument(flag, dest="sc_" + name, type=str)
    common.add_argument("--sweep", metavar="AXIS=V1,V2,...", help="sweep axis and values")

    sub = p.add_subparsers(dest="command", required=True)
    for mode in MODES:
        sub.add_parser(mode, parents=[common], help=f"run in {mode} mode")
    pp = sub.add_parser("preset", parents=[common], help="run a built-in figure sweep")
    pp.add_argument("name", choices=sorted(PRESETS, key=lambda s: int(s[3:])))
    return p


def _resolve_spec(args) -> ExperimentSpec:
    if args.command == "preset":
        spec = preset(args.name)
    elif args.config is not None:
        spec = load_spec(args.config).with_(mode=args.command)
    else:
        spec = None

    overrides = {}
    for name, conv in _SCENARIO_FLAGS:
        raw = getattr(args, "sc_" + name)
        if raw is None:
            continue
        try:
            overrides[name] = _width(raw) if name in ("r_f", "r") else conv(raw)
        except ValueError:
            raise ConfigInvalid(f"bad value for --{name.replace('_', '-')}: {raw!r}") from None
    changes = {}
    if args.sweep:
        axis, _, values = args.sweep.partition("=")
        axis = axis.strip()
        try:
            vals = tuple(float(v) if axis == "lambda" else int(v) for v in values.split(","))
        except ValueError:
            raise ConfigInvalid(f"bad --sweep {args.sweep!r}") from None
        changes.update(sweep_axis=axis, sweep_values=vals)

    if spec is None:
        if "dist" not in overrides or "n" not in overrides:
            raise ConfigInvalid("give --config, a preset, or at least --dist and --n")
        spec = ExperimentSpec(mode=args.command, scenario=Scenario.from_dict(overrides), **changes)
        changes = {}
    elif overrides:
        spec = spec.with_(scenario=spec.scenario.override(**overrides))
    if args.replications is not None:
        changes["replications"] = args.replications
    if args.num_jobs is not None:
        changes["num_jobs"] = args.num_jobs
    if args.out is not None:
        changes["out"] = str(args.out)
    if args.seed is not None:
        changes["seed"] = args.seed
    elif "FORKLAT_SEED" in os.environ and (args.config is None or args.command == "preset"):
        try:
            changes["seed"] = int(os.environ["FORKLAT_SEED"])
        except ValueError:
            raise ConfigInvalid("FORKLAT_SEED must be an integer") from None
    return spec.with_(**changes) if changes else spec


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        spec = _resolve_spec(args)
        if args.dump_config:
            sys.stdout.write(dump_spec(spec))
            return EXIT_OK
        base_dir = str(args.config.parent) if args.config is not None else None
        rows, ok = run_spec(spec, jobs=max(1, args.jobs), base_dir=base_dir)
    except (ConfigInvalid, DistSpecError) as exc:
        print(f"forklat: config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except Infeasible as exc:
        print(f"forklat: infeasible: {exc} (smallest estimated cost {exc.min_cost:.6g})", file=sys.stderr)
        return EXIT_INFEASIBLE
    except NonFiniteMoment as exc:
        print(f"forklat: non-finite moment: {exc}", file=sys.stderr)
        return EXIT_NONFINITE
    except ForklatError as exc:
        print(f"forklat: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_CONFIG

    report = format_report(spec, rows)
    if spec.out:
        with open(spec.out, "w", newline="") as fh:
            write_csv(rows, fh)
        sys.stdout.write(report)
    else:
        write_csv(rows, sys.stdout)
        sys.stderr.write(report)
    if not ok:
        print("forklat: some cells failed; see the status column", file=sys.stderr)
        return EXIT_FAILED_CELLS
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
