"""
Command-line entry point.

    python app.py solve  --config run.cfg --set noise.eps=1e-3 --out out/run1
    python app.py sweep  --config sweep.cfg --parallel 4
    python app.py gen    --set data.generator=rough --out out/data
    python app.py verify
    python app.py solve  --scenario worked-example

Exit codes: 0 success, 1 failed check or bound, 2 configuration error.
"""
import argparse
import logging
import sys
from typing import List, Optional

from config import load_config
from errors import ConfigError, HeatInverseError
from experiments import SCENARIOS, cmd_gen, cmd_solve, cmd_sweep, scenario
from verify import FAULTS, cmd_verify

log = logging.getLogger("app")

COMMANDS = {
    "solve": cmd_solve,
    "sweep": cmd_sweep,
    "gen": cmd_gen,
}


def _add_config_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", help="flat key=value config file")
    parser.add_argument("--scenario", choices=sorted(SCENARIOS),
                        help="start from a canned scenario; --config and --set apply on top")
    parser.add_argument("--set", dest="overrides", action="append", default=[], metavar="KEY=VALUE",
                        help="override one config key (repeatable)")
    parser.add_argument("--out", help="output directory (output.dir)")
    parser.add_argument("--allow-oracle", action="store_true",
                        help="use the closed-form backward solution for error traces when no exact solution is known")
    parser.add_argument("--parallel", type=int, help="concurrent sweep trials (run.parallel)")
    parser.add_argument("--seed", type=int, help="noise seed (noise.seeds)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="app.py", description="Backward heat reconstruction by Mann iteration")
    parser.add_argument("-v", "--verbose", action="count", default=0,
                        help="log INFO, or DEBUG when repeated")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, help_text in (("solve", "single reconstruction run"),
                            ("sweep", "one run per (eps, seed) plus a rates report"),
                            ("gen", "write generated data files")):
        _add_config_flags(sub.add_parser(name, help=help_text))
    verify = sub.add_parser("verify", help="run the invariant suite")
    verify.add_argument("--fault", choices=FAULTS, help=argparse.SUPPRESS)
    return parser


def _shorthand_overrides(args: argparse.Namespace) -> List[str]:
    overrides = []
    if args.out is not None:
        overrides.append(f"output.dir={args.out}")
    if args.parallel is not None:
        overrides.append(f"run.parallel={args.parallel}")
    if args.seed is not None:
        overrides.append(f"noise.seeds={args.seed}")
    if args.allow_oracle:
        overrides.append("run.allow_oracle=true")
    return overrides + list(args.overrides)


def configure_logging(verbosity: int) -> None:
    level = logging.WARNING if verbosity == 0 else logging.INFO if verbosity == 1 else logging.DEBUG
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s")
    logging.getLogger().setLevel(level)


def main(argv: Optional[List[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return int(e.code or 0)
    configure_logging(args.verbose)

    try:
        if args.command == "verify":
            return cmd_verify(fault=args.fault)
        base = scenario(args.scenario) if args.scenario else None
        config = load_config(args.config, _shorthand_overrides(args), base=base)
        return COMMANDS[args.command](config)
    except ConfigError as e:
        print(f"❌ configuration error: {e}", file=sys.stderr)
        return 2
    except HeatInverseError as e:
        print(f"❌ {type(e).__name__}: {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
