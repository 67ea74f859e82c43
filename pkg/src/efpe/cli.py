"""Command-line entry point: ``efpe-bench``."""

from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import fields

from .bench import ConfigError, RunConfig, run_experiment, tune_weight_scale
from .egt import ExcessiveGapViolation
from .game import make_game
from .sequence_form import sequence_form
from .smoothing import InfeasiblePerturbation

log = logging.getLogger("efpe")


def _gamma(text: str) -> float | None:
    if str(text).lower() == "auto":
        return None
    return float(text)


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(
        prog="efpe-bench",
        description="Run EGT or CFR+ on a poker benchmark and write a CSV convergence trace.")
    # defaults are None so that only flags actually given override the config file
    ap.add_argument("--config", help="JSON file with RunConfig fields")
    ap.add_argument("--game", help="kuhn, leduc2, leduc3, leduc5, matching_pennies, fig1")
    ap.add_argument("--algo", choices=["egt", "cfr+"])
    ap.add_argument("--xi", type=float, help="behavioral perturbation (0 = Nash)")
    ap.add_argument("--scheme", choices=["recurrence", "convergence"])
    ap.add_argument("--gamma", help="DGF weight scale, or 'auto' to tune")
    ap.add_argument("--budget", type=int, help="tree traversals")
    ap.add_argument("--cadence", type=float, help="geometric spacing of trace rows")
    ap.add_argument("--out", help="CSV path (stdout if omitted)")
    ap.add_argument("--seed", type=int)
    ap.add_argument("--no-check-gap", dest="check_gap", action="store_const", const=False,
                    help="skip the excessive gap check after each step")
    ap.add_argument("--tune", action="store_true", help="only tune gamma and print it")
    ap.add_argument("-v", "--verbose", action="store_true")
    return ap


def resolve_config(args: argparse.Namespace) -> RunConfig:
    values: dict = {}
    if args.config:
        with open(args.config, encoding="utf-8") as fh:
            values.update(json.load(fh))
        known = {f.name for f in fields(RunConfig)}
        extra = set(values) - known
        if extra:
            raise ConfigError(f"unknown config keys: {', '.join(sorted(extra))}")
    for f in fields(RunConfig):
        v = getattr(args, f.name, None)
        if v is not None:
            values[f.name] = _gamma(v) if f.name == "gamma" else v
    if isinstance(values.get("gamma"), str):
        values["gamma"] = _gamma(values["gamma"])
    cfg = RunConfig(**values)
    cfg.validate()
    return cfg


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    try:
        cfg = resolve_config(args)
        if args.tune:
            p = sequence_form(make_game(cfg.game))
            print(tune_weight_scale(p, cfg.scheme))
            return 0
        log.info("running %s", cfg)
        out = run_experiment(cfg)
    except (ConfigError, InfeasiblePerturbation) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except ExcessiveGapViolation as exc:
        print(f"error: {exc} (try a larger --gamma or --no-check-gap)", file=sys.stderr)
        return 1
    if cfg.out is None:
        sys.stdout.write(out)
    else:
        log.info("wrote %s", out)
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
