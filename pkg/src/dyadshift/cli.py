"""Command line entry point.

    dyadshift run --suite <name> --config <file.json> [--out DIR]
    dyadshift list-suites
    dyadshift validate --config <file.json>

Exit codes: 0 when every row passes, 1 when a suite criterion fails,
2 when the config is invalid (rejected before anything runs).
"""

import argparse
import json
import sys

from .suites import (
    SUITE_NAMES,
    ConfigError,
    SuiteConfig,
    run_suite,
    validate_config,
)


def _load_config(path: str) -> SuiteConfig:
    try:
        with open(path) as fh:
            data = json.load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config {path} is not valid JSON: {exc}") from exc
    if not isinstance(data, dict):
        raise ConfigError("config must be a JSON object")
    return SuiteConfig.from_json(data)


def _cmd_run(args) -> int:
    config = _load_config(args.config)
    if config.suite != args.suite:
        raise ConfigError(
            f"config names suite {config.suite!r} but --suite asked for {args.suite!r}")
    validate_config(config)
    report = run_suite(config, out_dir=args.out)
    for kind, path in report.artifacts.items():
        print(f"{kind}: {path}")
    rows_passed = sum(bool(r["pass"]) for r in report.rows)
    status = "PASS" if report.passed else "FAIL"
    print(f"{config.suite}: {status} ({rows_passed}/{len(report.rows)} rows, "
          f"{report.runtime:.2f}s)")
    return 0 if report.passed else 1


def _cmd_list(_args) -> int:
    for name in SUITE_NAMES:
        print(name)
    return 0


def _cmd_validate(args) -> int:
    config = _load_config(args.config)
    validate_config(config)
    print(f"{args.config}: ok ({config.suite})")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="dyadshift",
        description="verification suites for dyadic shift and paraproduct bounds")
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run one suite and write its report")
    run.add_argument("--suite", required=True, choices=SUITE_NAMES,
                     metavar="NAME", help="suite name (see list-suites)")
    run.add_argument("--config", required=True, help="JSON config file")
    run.add_argument("--out", default=None, help="output directory override")
    run.set_defaults(func=_cmd_run)

    lst = sub.add_parser("list-suites", help="print the available suite names")
    lst.set_defaults(func=_cmd_list)

    val = sub.add_parser("validate", help="check a config without running it")
    val.add_argument("--config", required=True, help="JSON config file")
    val.set_defaults(func=_cmd_validate)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
