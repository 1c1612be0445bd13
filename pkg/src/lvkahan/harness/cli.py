"""Command-line interface.

Exit codes: 0 all checks pass, 1 verification failure, 2 domain event
(pole or blowup), 3 configuration error.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from ..errors import ConfigError, LVError
from .config import DEFAULT_CONFIG, load_config
from .experiment import EXIT_CONFIG, EXIT_DOMAIN, EXIT_FAIL, EXIT_OK, dumps, run_compare, run_experiment
from .verify import run_verify

# subcommand -> (default mode, modes the config may select instead)
TRAJECTORY_COMMANDS = {
    "flow": ("flow", ("flow", "rk4")),
    "kahan": ("kahan", ("kahan", "kahan-generic")),
    "iterates": ("closed-iterates", ("closed-iterates",)),
}


def _parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=Path, help="YAML experiment config")
    common.add_argument("--seed", type=int, help="override the config seed")
    common.add_argument("--out", type=Path, help="output directory")
    common.add_argument("--quiet", action="store_true", help="suppress the stdout summary")

    p = argparse.ArgumentParser(prog="lvkahan", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)
    sub.add_parser("flow", parents=[common], help="exact flow (or rk4) trajectory")
    sub.add_parser("kahan", parents=[common], help="Kahan map trajectory")
    sub.add_parser("iterates", parents=[common], help="closed-form Kahan iterates")
    sub.add_parser("verify", parents=[common], help="run every identity check")
    sub.add_parser("compare", parents=[common], help="Kahan vs RK4 integral drift")
    sub.add_parser("run", parents=[common], help="trajectory in the config's own mode")
    return p


def _say(quiet, *lines):
    if not quiet:
        for line in lines:
            print(line)


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    try:
        cfg = load_config(args.config) if args.config else DEFAULT_CONFIG
        if args.seed is not None:
            if args.seed < 0:
                raise ConfigError("--seed", "must be non-negative")
            cfg = cfg.with_overrides(seed=args.seed)
        out = args.out or Path(cfg.out_dir)

        if args.command == "verify":
            report = run_verify(cfg)
            path = out / "verify.json"
            path.parent.mkdir(parents=True, exist_ok=True)
            path.write_text(dumps(report.as_dict()))
            _say(args.quiet, *(f"{'PASS' if c.passed else 'FAIL'}  {c.check:<24} points={c.points:<4} "
                               f"worst={c.worst_residual:.3e}" for c in report.checks),
                 f"report: {path}")
            return EXIT_OK if report.passed else EXIT_FAIL

        if args.command == "compare":
            code, report = run_compare(cfg, out)
            _say(args.quiet, *(f"{'PASS' if c['pass'] else 'FAIL'}  {c['check']:<20} "
                               f"worst={c['worst_residual']:.3e}" for c in report["checks"]),
                 *(f"EVENT {e['method']}: {e['message']}" for e in report["events"]),
                 f"report: {out / 'compare.json'}")
            return code

        if args.command in TRAJECTORY_COMMANDS:
            default, allowed = TRAJECTORY_COMMANDS[args.command]
            mode = cfg.mode if cfg.mode in allowed else default
            cfg = cfg.with_overrides(mode=mode)
        code, report = run_experiment(cfg, out)
        drift = max(report["drift"].values(), default=0.0)
        _say(args.quiet, f"{cfg.mode}: {report['steps_completed']} of {cfg.count} steps, "
                         f"max relative drift {drift:.3e}",
             *(f"EVENT step {e['step']}: {e['message']}" for e in report["events"]),
             f"trajectory: {out / cfg.trajectory_file}")
        return code
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as exc:
        print(f"io error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except LVError as exc:
        print(f"domain error: {exc}", file=sys.stderr)
        return EXIT_DOMAIN


if __name__ == "__main__":
    sys.exit(main())
