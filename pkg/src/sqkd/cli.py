"""Batch front end: run simulations, verify attacks, scan parameter grids.

Exit codes: 0 success, 1 usage/config error, 2 eavesdropper detected
(protocol aborted), 3 robustness verdict failed.
"""

import argparse
import csv
import json
import os
import sys
from pathlib import Path

from .analysis import constraint_check, eve_leakage, theorem_check
from .attacks import ATTACK_NAMES, build_attack
from .errors import EmptyGrid, SqkdError, UnknownAttack, UnknownFamily
from .protocol import (
    ProtocolConfig,
    classical_phase,
    run_protocol,
    stream_rng,
    write_transcript,
)

_CONFIG_KEYS = {
    "rounds",
    "ctrl_prob",
    "test_fraction",
    "seed",
    "mode",
    "abort_threshold",
    "attack",
}
_ATTACK_KEYS = {"name", "params", "rounds"}

#: attack families that support parameter scans, with their scannable parameter
_SCAN_FAMILIES = {"phase_probe": "theta"}

SEED_ENV = "SQKD_SEED"


def _load_run_config(path: str) -> tuple[ProtocolConfig, dict]:
    with open(path, encoding="utf-8") as fh:
        raw = json.load(fh)
    if not isinstance(raw, dict):
        raise ValueError("config must be a JSON object")
    unknown = set(raw) - _CONFIG_KEYS
    if unknown:
        raise ValueError(f"unknown config keys: {sorted(unknown)}")
    if "rounds" not in raw:
        raise ValueError("config requires a 'rounds' key")
    attack_raw = raw.get("attack", {"name": "identity"})
    if not isinstance(attack_raw, dict) or "name" not in attack_raw:
        raise ValueError("attack must be an object with a 'name' key")
    unknown = set(attack_raw) - _ATTACK_KEYS
    if unknown:
        raise ValueError(f"unknown attack keys: {sorted(unknown)}")
    if attack_raw["name"] not in ATTACK_NAMES:
        raise UnknownAttack(
            f"unknown attack {attack_raw['name']!r}; known: {', '.join(ATTACK_NAMES)}"
        )
    seed = raw.get("seed", 0)
    env_seed = os.environ.get(SEED_ENV)
    if env_seed is not None:
        seed = int(env_seed)
    config = ProtocolConfig(
        rounds=int(raw["rounds"]),
        ctrl_prob=float(raw.get("ctrl_prob", 0.5)),
        test_fraction=float(raw.get("test_fraction", 0.5)),
        seed=int(seed),
        mode=str(raw.get("mode", "sampling")),
        abort_threshold=float(raw.get("abort_threshold", 0.0)),
    )
    return config, attack_raw


def cmd_run(config_path: str, out_path: str) -> int:
    config, attack_raw = _load_run_config(config_path)
    rounds_pair = attack_raw.get("rounds")
    attack = build_attack(
        attack_raw["name"],
        params=attack_raw.get("params"),
        n_rounds=config.rounds,
        rounds=tuple(rounds_pair) if rounds_pair is not None else None,
    )
    transcript = run_protocol(config, attack)
    stats = classical_phase(transcript, stream_rng(config.seed, 1))

    out = Path(out_path)
    with open(out, "w", encoding="utf-8") as fh:
        json.dump(stats.as_dict(), fh, indent=2)
        fh.write("\n")
    header_extra = {"attack": attack_raw}
    write_transcript(out.with_suffix(".jsonl"), transcript, header_extra=header_extra)
    return 2 if stats.aborted else 0


def cmd_check(attack_name: str, params: dict, eps: float, max_pattern_len: int) -> int:
    attack = build_attack(attack_name, params=params, n_rounds=max_pattern_len)
    rounds = [
        constraint_check(attack, i).as_dict() for i in range(max_pattern_len)
    ]
    theorem = theorem_check(attack, eps=eps, max_pattern_len=max_pattern_len)
    verdict = {
        "attack": attack_name,
        "params": params,
        "eps": eps,
        "max_pattern_len": max_pattern_len,
        "rounds": rounds,
        "max_residual": theorem.max_residual,
        "max_leakage": theorem.max_leakage,
        "passed": theorem.passed,
    }
    print(json.dumps(verdict, indent=2))
    return 0 if theorem.passed else 3


def _parse_grid(spec: str) -> list[float]:
    parts = spec.split(":")
    if len(parts) != 3:
        raise ValueError(f"grid must be start:stop:step, got {spec!r}")
    start, stop, step = (float(p) for p in parts)
    if step == 0:
        raise EmptyGrid("grid step must be nonzero")
    values = []
    v = start
    slack = abs(step) * 1e-9
    if step > 0:
        while v <= stop + slack:
            values.append(v)
            v += step
    else:
        while v >= stop - slack:
            values.append(v)
            v += step
    if not values:
        raise EmptyGrid(f"grid {spec!r} contains no points")
    return values


def cmd_scan(family: str, param: str, grid: list[float], out_csv: str) -> int:
    if family not in _SCAN_FAMILIES or _SCAN_FAMILIES[family] != param:
        raise UnknownFamily(
            f"family {family!r} has no scannable parameter {param!r}; "
            f"supported: {_SCAN_FAMILIES}"
        )
    rows = []
    for value in grid:
        attack = build_attack(family, params={param: value})
        rep = constraint_check(attack, 0)
        leak = eve_leakage(attack, "S")
        rows.append(
            (
                value,
                rep.ctrl_error_prob,
                rep.test_residual,
                leak.per_bit_trace_distance[0],
                leak.holevo_bound,
            )
        )
    with open(out_csv, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["theta", "ctrl_error", "test_error", "trace_distance", "holevo"])
        writer.writerows(rows)
    return 0


def cmd_attacks() -> int:
    for name in ATTACK_NAMES:
        print(name)
    return 0


def _parse_params(pairs) -> dict:
    params = {}
    for pair in pairs or []:
        if "=" not in pair:
            raise ValueError(f"--param expects k=v, got {pair!r}")
        key, value = pair.split("=", 1)
        params[key] = float(value)
    return params


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="sqkd",
        description="Simulate the reflect-or-measure key distribution protocol "
        "and verify eavesdropping attacks against it.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="execute a configured protocol run")
    p_run.add_argument("--config", required=True, help="path to a JSON run config")
    p_run.add_argument("--out", required=True, help="path for the stats JSON output")

    p_check = sub.add_parser("check", help="constraint and robustness checks for an attack")
    p_check.add_argument("--attack", required=True, help="registered attack name")
    p_check.add_argument(
        "--param", action="append", metavar="K=V", help="attack parameter (repeatable)"
    )
    p_check.add_argument("--eps", type=float, default=1e-9, help="residual tolerance")
    p_check.add_argument(
        "--max-pattern-len", type=int, default=6, help="longest choice pattern examined"
    )

    p_scan = sub.add_parser("scan", help="sweep an attack parameter, writing a CSV")
    p_scan.add_argument("--attack", required=True, help="attack family to sweep")
    p_scan.add_argument("--param", required=True, help="parameter name to sweep")
    p_scan.add_argument("--grid", required=True, help="start:stop:step (inclusive)")
    p_scan.add_argument("--out", required=True, help="path for the CSV output")

    sub.add_parser("attacks", help="list registered attack names")
    return parser


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        if args.command == "run":
            return cmd_run(args.config, args.out)
        if args.command == "check":
            return cmd_check(
                args.attack, _parse_params(args.param), args.eps, args.max_pattern_len
            )
        if args.command == "scan":
            return cmd_scan(args.attack, args.param, _parse_grid(args.grid), args.out)
        if args.command == "attacks":
            return cmd_attacks()
        raise ValueError(f"unknown command {args.command!r}")
    except (SqkdError, ValueError, OSError, json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
