"""Command-line front end.

Subcommands: manybody | rank2 | dyson | fermion | stabilizer |
verify-moments | verify.  Shared flags --seed/--workers/--out/--config;
a JSON config file provides defaults that explicit flags override.  The
default output directory comes from $PURISIM_OUT.  Exit codes: 0 pass,
1 verification failure, 2 configuration error.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

from .harness import (
    OUT_DIR_ENV,
    VERIFY_SUITES,
    ConfigError,
    ExperimentConfig,
    run,
    verify,
)

EXIT_OK = 0
EXIT_VERIFY_FAIL = 1
EXIT_CONFIG_ERROR = 2


def _add_shared(p: argparse.ArgumentParser) -> None:
    p.add_argument("--seed", type=int, default=None, help="base RNG seed")
    p.add_argument("--workers", type=int, default=None, help="worker processes")
    p.add_argument("--out", type=str, default=None, help="output directory")
    p.add_argument("--config", type=str, default=None, help="JSON config file")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="purisim",
        description="purification dynamics of hybrid measurement-unitary systems",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("manybody", help="density-matrix trajectories from I/N")
    p.add_argument("--dim", type=int, default=None, help="Hilbert dimension N (even)")
    p.add_argument("--steps", type=int, default=None)
    p.add_argument("--walkers", type=int, default=None, help="independent trajectories")
    p.add_argument("--mode", choices=["measurement", "postselection"], default=None)
    p.add_argument("--no-entropy", action="store_true", help="skip per-step entropy")
    p.add_argument("--stop-purity", type=float, default=None)
    _add_shared(p)

    p = sub.add_parser("rank2", help="trajectories from the rank-2 state diag(1/2,1/2)")
    p.add_argument("--dim", type=int, default=None)
    p.add_argument("--steps", type=int, default=None)
    p.add_argument("--walkers", type=int, default=None)
    p.add_argument("--mode", choices=["measurement", "postselection"], default=None)
    _add_shared(p)

    p = sub.add_parser("dyson", help="low-rank eigenvalue diffusion ensemble")
    p.add_argument("--rank", type=int, default=None, help="spectrum rank d")
    p.add_argument("--dim", type=int, default=None, help="N fixing dt = 1/N")
    p.add_argument("--dt", type=float, default=None, help="override dt")
    p.add_argument("--steps", type=int, default=None)
    p.add_argument("--walkers", type=int, default=None)
    _add_shared(p)

    p = sub.add_parser("fermion", help="free-fermion purification ensemble")
    p.add_argument("--variant", choices=["conserving", "general"], default=None)
    p.add_argument("--modes", type=int, default=None, help="mode count n")
    p.add_argument("--steps", type=int, default=None)
    p.add_argument("--walkers", type=int, default=None)
    p.add_argument("--no-renyi2", action="store_true")
    p.add_argument("--stop-at-order1", action="store_true")
    _add_shared(p)

    p = sub.add_parser("stabilizer", help="random-Pauli stabilizer trajectories")
    p.add_argument("--qubits", type=int, default=None)
    p.add_argument("--steps", type=int, default=None)
    p.add_argument(
        "--sampling",
        choices=["uniform_all_paulis", "uniform_nonidentity"],
        default=None,
    )
    p.add_argument("--walkers", type=int, default=None, help="independent trajectories")
    _add_shared(p)

    p = sub.add_parser("verify-moments", help="Monte Carlo vs analytic moment report")
    p.add_argument("--scale", type=float, default=1.0, help="sample-count multiplier")
    _add_shared(p)

    p = sub.add_parser("verify", help="named verification suite")
    p.add_argument("suite", choices=list(VERIFY_SUITES))
    p.add_argument("--scale", type=float, default=1.0)
    _add_shared(p)

    return parser


_FLAG_FIELD_MAP = {
    "dim": "n",
    "modes": "n",
    "qubits": "n",
    "rank": "d",
    "steps": "steps",
    "walkers": "walkers",
    "mode": "mode",
    "variant": "variant",
    "sampling": "sampling",
    "dt": "dt",
    "seed": "seed",
    "workers": "workers",
    "stop_purity": "stop_purity",
}


def _build_config(args: argparse.Namespace) -> ExperimentConfig:
    data: dict = {"kind": args.command}
    if args.config:
        try:
            loaded = json.loads(Path(args.config).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"config: cannot read {args.config}: {exc}") from exc
        if not isinstance(loaded, dict):
            raise ConfigError("config: top level must be a JSON object")
        data.update(loaded)
        data["kind"] = args.command
    for flag, fieldname in _FLAG_FIELD_MAP.items():
        val = getattr(args, flag, None)
        if val is not None:
            data[fieldname] = val
    if getattr(args, "no_entropy", False):
        data["record_entropy"] = False
    if getattr(args, "no_renyi2", False):
        data["record_renyi2"] = False
    if getattr(args, "stop_at_order1", False):
        data["stop_at_order1"] = True
    out = getattr(args, "out", None) or data.get("out_dir") or os.environ.get(OUT_DIR_ENV)
    if out:
        data["out_dir"] = out
    data.setdefault("seed", 0)
    cfg = ExperimentConfig.from_dict(data)
    cfg.validate()
    return cfg


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "verify-moments":
            report = verify("moments", seed=args.seed or 0, scale=args.scale)
            print(json.dumps(report, indent=2, sort_keys=True))
            return EXIT_OK if report["pass"] else EXIT_VERIFY_FAIL
        if args.command == "verify":
            report = verify(args.suite, seed=args.seed or 0, scale=args.scale)
            print(json.dumps(report, indent=2, sort_keys=True))
            return EXIT_OK if report["pass"] else EXIT_VERIFY_FAIL
        cfg = _build_config(args)
        manifest = run(cfg)
        print(manifest.to_json())
        return EXIT_OK
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG_ERROR


if __name__ == "__main__":
    sys.exit(main())
