"""Command-line entry point.

Subcommands: oss-correctness, clone-fidelity, keyfire-endtoend, games,
instance. Configuration comes from an optional JSON file plus flag
overrides; exit status 0 means every configured threshold passed, 1 means a
threshold failed, 2 means the invocation itself was invalid.
"""

from __future__ import annotations

import argparse
import sys
import time
from typing import List, Optional

from . import harness
from .reports import ExperimentConfig, load_config_file

PARAM_ORDER = ("n", "r", "k", "att_width", "sig_width", "msg_width", "j_max")

COMMANDS = {
    "oss-correctness": harness.cmd_oss_correctness,
    "clone-fidelity": harness.cmd_clone_fidelity,
    "keyfire-endtoend": harness.cmd_keyfire_endtoend,
    "games": harness.cmd_games,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="flamelab",
        description="Desk-scale one-shot-signature and key-fire simulation lab",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name in list(COMMANDS) + ["instance"]:
        p = sub.add_parser(name)
        p.add_argument("--config", help="JSON config file")
        p.add_argument("--seed", type=int, help="master seed (unsigned 64-bit)")
        p.add_argument("--trials", type=int, help="primary trial count")
        p.add_argument(
            "--params",
            help="comma list n,r,k,att,sig,nu,jmax (trailing values optional)",
        )
        p.add_argument("--exact-sign", action="store_true",
                       help="use the exact signing surrogate (test instrumentation)")
        p.add_argument("--out", help="write the report document here")
        p.add_argument("--threads", type=int, help="trial-level parallelism")
        p.add_argument("--instance", dest="instance_path",
                       help="load the oracle instance from a file")
        p.add_argument("--condition-good-vk", action="store_true",
                       help="project the flame onto good verification keys")
        p.add_argument("--allow-bad-vk", action="store_true",
                       help="skip the all-good instance seed scan")
        if name == "instance":
            p.add_argument("action", choices=["save", "load", "audit"])
            p.add_argument("--path", default="", help="instance file path")
    return parser


def parse_params(text: str) -> dict:
    parts = [p.strip() for p in text.split(",") if p.strip()]
    if len(parts) > len(PARAM_ORDER):
        raise ValueError(f"--params takes at most {len(PARAM_ORDER)} values")
    return {PARAM_ORDER[i]: int(v) for i, v in enumerate(parts)}


def config_from_args(args: argparse.Namespace) -> ExperimentConfig:
    doc = load_config_file(args.config) if args.config else {}
    params = dict(doc.get("params", {}))
    if args.params:
        params.update(parse_params(args.params))
    # clone-heavy commands default to instances with no bad keys
    default_good = args.command in ("clone-fidelity", "keyfire-endtoend")
    require_good = doc.get("require_good_vk_instance", default_good)
    if args.allow_bad_vk:
        require_good = False
    return ExperimentConfig(
        experiment=args.command,
        seed=args.seed if args.seed is not None else doc.get("seed", 0),
        trials=args.trials if args.trials is not None else doc.get("trials"),
        params=params,
        thresholds=dict(doc.get("thresholds", {})),
        exact_sign=bool(args.exact_sign or doc.get("exact_sign", False)),
        threads=args.threads if args.threads is not None else doc.get("threads", 1),
        condition_good_vk=bool(
            args.condition_good_vk or doc.get("condition_good_vk", False)
        ),
        require_good_vk_instance=bool(require_good),
        instance_path=args.instance_path or doc.get("instance_path"),
        out_path=args.out,
    )


def main(argv: Optional[List[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        config = config_from_args(args)
    except (ValueError, OSError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 2
    started = time.monotonic()
    try:
        if args.command == "instance":
            report = harness.cmd_instance(config, args.action, args.path)
        else:
            report = COMMANDS[args.command](config)
    except (ValueError, RuntimeError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 2
    elapsed = time.monotonic() - started
    if args.out:
        report.save(args.out)
    else:
        sys.stdout.write(report.to_json())
    for line in report.summary_lines():
        print(line, file=sys.stderr)
    print(f"wall-clock: {elapsed:.3f}s", file=sys.stderr)
    return 0 if report.passed else 1


if __name__ == "__main__":
    sys.exit(main())
