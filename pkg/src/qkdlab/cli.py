"""Command-line experiment runner.

    qkdlab verify [--mutate skip-eve-rotation]
    qkdlab run --strategy s2 --theta 0.785 --rounds 101 --seed 7
    qkdlab sweep --theta-start 0 --theta-end 1.5708 --steps 33
    qkdlab appendix-search --theta 0.3927 --restarts 20 --seed 1

Exit codes: 0 success, 1 verification failure, 2 usage or configuration
error. Every flag may also come from ``--config FILE`` (``key = value``
lines, keys spelled like the flags); flags on the command line win.
``QKDLAB_SEED`` supplies the default seed.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import os
import sys
from dataclasses import asdict

from . import analysis
from .adversary import infer_key, parse_strategy
from .errors import QkdLabError
from .protocol import Mode, ProtocolConfig, random_key, run_session

SCHEMA_VERSION = 1

EXIT_OK = 0
EXIT_FAIL = 1
EXIT_USAGE = 2


class UsageError(Exception):
    pass


def _default_seed() -> int:
    raw = os.environ.get("QKDLAB_SEED")
    if raw is None:
        return 0
    try:
        return int(raw)
    except ValueError:
        raise UsageError(f"QKDLAB_SEED must be an integer, got {raw!r}") from None


def _add_output(p, formats=("json",)):
    p.add_argument("--out", default="-", help="output path, '-' for stdout")
    p.add_argument("--format", choices=formats, default=formats[0])
    p.add_argument("--config", help="key = value file with default flag values")


def _add_theta(p, default=math.pi / 4):
    g = p.add_mutually_exclusive_group()
    g.add_argument("--theta", type=float, default=None, help="rotation angle in radians")
    g.add_argument("--theta-deg", type=float, default=None, help="rotation angle in degrees")
    p.set_defaults(theta_default=default)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="qkdlab", description=__doc__.split("\n")[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("verify", help="check simulated states against the closed forms")
    p.add_argument("--mutate", choices=analysis.MUTATIONS, default=None)
    _add_output(p)

    p = sub.add_parser("run", help="run one attacked or honest session")
    p.add_argument("--strategy", default="none", choices=["none", "s1", "s2"])
    _add_theta(p)
    p.add_argument("--rounds", type=int, default=None,
                   help="default: length of --key, or 101 for a random key")
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--check-fraction", type=float, default=0.0)
    p.add_argument("--key", default="random", help="'random' or a bit string")
    p.add_argument("--mode", choices=[m.value for m in Mode], default=Mode.SAMPLED.value)
    _add_output(p)

    p = sub.add_parser("sweep", help="disturbance versus rotation angle")
    p.add_argument("--theta-start", type=float, default=0.0)
    p.add_argument("--theta-end", type=float, default=math.pi / 2)
    p.add_argument("--steps", type=int, default=33)
    _add_output(p, formats=("csv", "json"))

    p = sub.add_parser("appendix-search", help="search for a zero-disturbance Eve unitary")
    _add_theta(p)
    p.add_argument("--restarts", type=int, default=20)
    p.add_argument("--max-iters", type=int, default=2000)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--workers", type=int, default=1)
    _add_output(p)
    return parser


def _config_tokens(path: str) -> list[str]:
    tokens = []
    try:
        with open(path) as fh:
            lines = fh.readlines()
    except OSError as exc:
        raise UsageError(f"cannot read config {path!r}: {exc}") from None
    for n, line in enumerate(lines, 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise UsageError(f"{path}:{n}: expected 'key = value'")
        key, value = (s.strip() for s in line.split("=", 1))
        tokens += ["--" + key.replace("_", "-"), value]
    return tokens


def _expand_config(argv: list[str]) -> list[str]:
    """Splice config-file flags in front of the explicit ones."""
    for i, tok in enumerate(argv):
        path = None
        if tok == "--config" and i + 1 < len(argv):
            path, rest = argv[i + 1], argv[:i] + argv[i + 2:]
        elif tok.startswith("--config="):
            path, rest = tok.split("=", 1)[1], argv[:i] + argv[i + 1:]
        if path is not None:
            return rest[:1] + _config_tokens(path) + rest[1:]
    return argv


def _theta(args) -> float:
    if args.theta_deg is not None:
        return math.radians(args.theta_deg)
    return args.theta if args.theta is not None else args.theta_default


def _seed(args) -> int:
    seed = args.seed if args.seed is not None else _default_seed()
    if not 0 <= seed < 2 ** 64:
        raise UsageError(f"seed must be a non-negative 64-bit integer, got {seed}")
    return seed


def _dump_json(obj) -> str:
    return json.dumps(obj, indent=2, allow_nan=False) + "\n"


def _emit(text: str, out: str):
    if out == "-":
        sys.stdout.write(text)
        sys.stdout.flush()
    else:
        with open(out, "w", newline="") as fh:
            fh.write(text)


def cmd_verify(args) -> int:
    report = analysis.regression_states(mutate=args.mutate)
    _emit(_dump_json({
        "schema_version": SCHEMA_VERSION,
        "command": "verify",
        "mutate": args.mutate,
        "stages_checked": report.stages_checked,
        "mismatches": report.mismatches,
        "not_applicable": report.not_applicable,
        "worst_fidelity": report.worst_fidelity,
        "first_mismatch": report.first_mismatch,
    }), args.out)
    return EXIT_OK if report.ok else EXIT_FAIL


def _parse_key(spec: str, rounds: int, seed: int) -> list[int]:
    if spec == "random":
        return random_key(rounds, seed)
    if not spec or set(spec) - {"0", "1"}:
        raise UsageError(f"--key must be 'random' or a bit string, got {spec!r}")
    if len(spec) != rounds:
        raise UsageError(f"--key has {len(spec)} bits but --rounds is {rounds}")
    return [int(c) for c in spec]


def cmd_run(args) -> int:
    seed = _seed(args)
    rounds = args.rounds
    if rounds is None:
        rounds = 101 if args.key == "random" else len(args.key)
    config = ProtocolConfig(
        theta=_theta(args),
        rounds=rounds,
        check_fraction=args.check_fraction,
        seed=seed,
        mode=Mode(args.mode),
        strategy=parse_strategy(args.strategy),
    ).validate()
    key = _parse_key(args.key, rounds, seed)
    result = run_session(config, key)
    det = result.detection
    inference = infer_key(result.eve_records, det.leaked_bits, key)
    _emit(_dump_json({
        "schema_version": SCHEMA_VERSION,
        "command": "run",
        "config": {
            "strategy": args.strategy,
            "theta": config.theta,
            "rounds": config.rounds,
            "seed": config.seed,
            "check_fraction": config.check_fraction,
            "mode": config.mode.value,
        },
        "key": key,
        "transcripts": [
            {
                "index": t.index,
                "sent": t.sent,
                "received": t.received,
                "error": t.error,
                "eve_record": list(t.eve_record) if t.eve_record else None,
                "error_probability": t.error_probability,
            }
            for t in result.transcripts
        ],
        "qber": result.qber,
        "eve_records": [list(r) for r in result.eve_records],
        "inference": {
            "candidates": [list(c) for c in inference.candidates],
            "resolved": inference.resolved,
            "first_bit": inference.first_bit,
            "accuracy": inference.accuracy,
        },
        "detection": {
            "check_indices": det.check_indices,
            "mismatches": det.mismatches,
            "leaked_bits": [list(b) for b in det.leaked_bits],
        },
    }), args.out)
    return EXIT_OK


def _grid(start: float, end: float, steps: int) -> list[float]:
    if steps < 1:
        raise UsageError(f"--steps must be >= 1, got {steps}")
    if not (math.isfinite(start) and math.isfinite(end)) or start > end:
        raise UsageError(f"invalid theta range [{start}, {end}]")
    if steps == 1:
        return [start]
    return [start + (end - start) * i / (steps - 1) for i in range(steps)]


def cmd_sweep(args) -> int:
    grid = _grid(args.theta_start, args.theta_end, args.steps)
    result = analysis.sweep(grid)
    if args.format == "json":
        text = _dump_json({
            "schema_version": SCHEMA_VERSION,
            "command": "sweep",
            "columns": list(analysis.SWEEP_COLUMNS),
            "rows": [asdict(r) for r in result.rows],
        })
    else:
        buf = io.StringIO()
        buf.write(f"# schema_version: {SCHEMA_VERSION}\n")
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(analysis.SWEEP_COLUMNS)
        for row in result.rows:
            w.writerow(["%.17g" % v for v in row.as_tuple()])
        text = buf.getvalue()
    _emit(text, args.out)
    return EXIT_OK


def cmd_appendix_search(args) -> int:
    if args.restarts < 1 or args.max_iters < 1 or args.workers < 1:
        raise UsageError("--restarts, --max-iters and --workers must be >= 1")
    report = analysis.appendix_search(_theta(args), args.restarts, args.max_iters,
                                      seed=_seed(args), workers=args.workers)
    _emit(_dump_json({
        "schema_version": SCHEMA_VERSION,
        "command": "appendix-search",
        "theta": report.theta,
        "seed": _seed(args),
        "max_iters": args.max_iters,
        "best_disturbance": report.best_disturbance,
        "best_params": list(report.best_params.values),
        "restarts": report.restarts,
        "iterations_used": report.iterations_used,
        "eve_entropy_after": report.eve_entropy_after,
        "restart_values": report.restart_values,
    }), args.out)
    return EXIT_OK


COMMANDS = {
    "verify": cmd_verify,
    "run": cmd_run,
    "sweep": cmd_sweep,
    "appendix-search": cmd_appendix_search,
}


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        expanded = _expand_config(argv)
        args = parser.parse_args(expanded)
        if getattr(args, "format", "json") != "json" and args.command != "sweep":
            raise UsageError(f"{args.command} writes JSON only")
        return COMMANDS[args.command](args)
    except SystemExit as exc:
        return EXIT_USAGE if exc.code not in (0, None) else EXIT_OK
    except (UsageError, QkdLabError) as exc:
        print(f"qkdlab: error: {exc}", file=sys.stderr)
        return EXIT_USAGE


def entry_point():
    sys.exit(main())


if __name__ == "__main__":
    entry_point()
