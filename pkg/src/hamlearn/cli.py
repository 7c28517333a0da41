"""Command-line entry point: ``hamlearn run | bounds | validate-config``."""

from __future__ import annotations

import argparse
import json
import sys

from . import __version__
from .bhl import thm5_sample_budget
from .errors import (ConfigError, InvalidInputError, NumericalError,
                     ResourceLimitError)
from .harness import SCENARIOS, ScenarioConfig, run
from .meas import thm4_shot_bound, thm4_shot_count

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_RESOURCE = 3
EXIT_NUMERICAL = 4


def _u64(text: str) -> int:
    value = int(text, 0)
    if not 0 <= value < 2 ** 64:
        raise argparse.ArgumentTypeError("seed must fit in an unsigned 64-bit integer")
    return value


def _parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="hamlearn",
                                description="Hamiltonian learning from steady states.")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", required=True)

    r = sub.add_parser("run", help="run a scenario and write CSV files plus a manifest")
    r.add_argument("scenario", choices=SCENARIOS)
    r.add_argument("--config", help="YAML or JSON config file (defaults apply if omitted)")
    r.add_argument("--seed", type=_u64, help="master seed; overrides the config seed")
    r.add_argument("--out", required=True, help="output directory")

    b = sub.add_parser("bounds", help="print shot budgets for given problem parameters")
    b.add_argument("--m", type=int, required=True, help="number of basis terms")
    b.add_argument("--k", type=int, required=True, help="body order")
    b.add_argument("--eps", type=float, required=True,
                   help="estimate precision (shots) and target infidelity (time average)")
    b.add_argument("--delta", type=float, required=True, help="failure probability")
    b.add_argument("--gap", type=float, required=True, help="spectral gap of the constraint matrix")
    b.add_argument("--eta", type=float, default=2.0, help="bound on ||[H, rho0]||_1")

    v = sub.add_parser("validate-config", help="check a config file against the schema")
    v.add_argument("file")
    return p


def _cmd_run(args) -> int:
    if args.config:
        cfg = ScenarioConfig.load(args.config)
        if cfg.scenario != args.scenario:
            raise ConfigError(f"config is for scenario {cfg.scenario!r}, not {args.scenario!r}")
    else:
        cfg = ScenarioConfig.default(args.scenario)
    manifest = run(cfg, args.seed, args.out)
    print(manifest.to_json())
    return EXIT_OK


def _cmd_bounds(args) -> int:
    budget = thm5_sample_budget(args.m, args.k, args.eps, args.gap, args.delta, eta=args.eta)
    out = {
        "shots_all_estimates": {
            "bound": thm4_shot_bound(args.m, args.k, args.eps, args.delta),
            "N": thm4_shot_count(args.m, args.k, args.eps, args.delta),
        },
        "time_averaged_budget": budget._asdict(),
    }
    print(json.dumps(out, indent=2))
    return EXIT_OK


def _cmd_validate(args) -> int:
    cfg = ScenarioConfig.load(args.file)
    print(f"ok: {cfg.scenario} (config hash {cfg.config_hash()})")
    return EXIT_OK


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    handler = {"run": _cmd_run, "bounds": _cmd_bounds,
               "validate-config": _cmd_validate}[args.command]
    try:
        return handler(args)
    except (ConfigError, InvalidInputError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except ResourceLimitError as exc:
        print(f"resource limit: {exc}", file=sys.stderr)
        return EXIT_RESOURCE
    except NumericalError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL


if __name__ == "__main__":
    sys.exit(main())
