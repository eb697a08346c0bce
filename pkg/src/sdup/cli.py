"""Command line entry point: ``sdup run|sweep|encode|decode``.

Exit status is 0 on success, 2 on configuration errors and 1 on runtime
errors. ``SDUP_LOG=trace|info`` raises diagnostic verbosity on stderr.
"""

from __future__ import annotations

import argparse
import dataclasses
import logging
import os
import random
import sys

from .errors import ConfigurationError, ParameterError, SdupError
from .frame_codec import SessionKey, decode_frames, encode_frames, read_container, write_container
from .gf_sharing import split
from .harness import load_scenario, parse_assignment, run_trials, summarize, write_csv

log = logging.getLogger("sdup")

EXIT_OK, EXIT_RUNTIME, EXIT_CONFIG = 0, 1, 2


def _setup_logging() -> None:
    level = {"trace": logging.DEBUG, "info": logging.INFO}.get(os.environ.get("SDUP_LOG", "").lower(),
                                                               logging.WARNING)
    logging.basicConfig(stream=sys.stderr, level=level, format="%(levelname)s %(name)s: %(message)s")


def _read_scenario(path: str):
    try:
        with open(path, encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigurationError(f"cannot read scenario {path}: {exc.strerror}") from None
    return load_scenario(text), os.path.dirname(os.path.abspath(path))


def cmd_run(args) -> int:
    config, base_dir = _read_scenario(args.scenario)
    overrides = {}
    if args.seed is not None:
        overrides["seed"] = args.seed
    if args.trials is not None:
        overrides["trials"] = args.trials
    config = dataclasses.replace(config, **overrides)
    metrics = run_trials(config, base_dir)
    if args.out == "-":
        write_csv(metrics, sys.stdout)
    else:
        write_csv(metrics, args.out)
    log.info("run: %s", summarize(metrics))
    return EXIT_OK


def _value_label(text: str) -> str:
    return text.replace("/", "_").replace(os.sep, "_")


def cmd_sweep(args) -> int:
    config, base_dir = _read_scenario(args.scenario)
    values = [v.strip() for v in args.values.split(",") if v.strip()]
    if not values:
        raise ConfigurationError("--values is empty")
    points = [(v, dataclasses.replace(config, **{args.param: parse_assignment(args.param, v)})) for v in values]
    os.makedirs(args.out, exist_ok=True)
    rows = []
    for text, point in points:
        metrics = run_trials(point, base_dir)
        write_csv(metrics, os.path.join(args.out, f"{args.param}_{_value_label(text)}.csv"))
        s = summarize(metrics)
        rows.append(f"{text},{s['trials']},{s['delivery_ratio']:.6f},{s['oracle_success_rate']:.6f},"
                    f"{s['blind_success_rate']:.6f},{s['mean_collisions']:.6f},{s['mean_overhead_ratio']:.6f}\n")
        log.info("sweep %s=%s: %s", args.param, text, s)
    with open(os.path.join(args.out, "summary.csv"), "w", encoding="utf-8", newline="\n") as fh:
        fh.write(f"{args.param},trials,delivery_ratio,oracle_success_rate,blind_success_rate,"
                 "mean_collisions,mean_overhead_ratio\n")
        fh.writelines(rows)
    return EXIT_OK


def _read_input(path: str | None) -> bytes:
    if path in (None, "-"):
        return sys.stdin.buffer.read()
    with open(path, "rb") as fh:
        return fh.read()


def _write_output(path: str | None, data: bytes) -> None:
    if path in (None, "-"):
        sys.stdout.buffer.write(data)
        sys.stdout.buffer.flush()
        return
    with open(path, "wb") as fh:
        fh.write(data)


def _key(args) -> SessionKey:
    try:
        return SessionKey.from_hex(args.key, args.session_id)
    except ParameterError as exc:
        raise ConfigurationError(f"--key: {exc}") from None


def cmd_encode(args) -> int:
    key = _key(args)
    if args.k is None or args.n is None:
        raise ConfigurationError("encode needs --k and --n")
    if not 1 <= args.k <= args.n <= 255:
        raise ConfigurationError(f"need 1 <= k <= n <= 255, got k={args.k}, n={args.n}")
    message = _read_input(args.input)
    rng = random.Random(args.seed) if args.seed is not None else random.SystemRandom()
    frames = encode_frames(split(message, args.k, args.n, rng), key)
    _write_output(args.output, write_container(frames, args.n, args.k))
    return EXIT_OK


def cmd_decode(args) -> int:
    key = _key(args)
    n, k, frames = read_container(_read_input(args.input))
    if (args.n is not None and args.n != n) or (args.k is not None and args.k != k):
        raise ConfigurationError(f"container holds n={n}, k={k}; flags disagree")
    _write_output(args.output, decode_frames(frames, key, n, k))
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="sdup", description="Share-based confidentiality over ad hoc paths")
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run seeded trials of a scenario and write a CSV")
    run.add_argument("--scenario", required=True)
    run.add_argument("--seed", type=int)
    run.add_argument("--trials", type=int)
    run.add_argument("--out", required=True, help="CSV path, or - for stdout")
    run.set_defaults(func=cmd_run)

    sweep = sub.add_parser("sweep", help="run a scenario once per value of one parameter")
    sweep.add_argument("--scenario", required=True)
    sweep.add_argument("--param", required=True)
    sweep.add_argument("--values", required=True, help="comma separated values")
    sweep.add_argument("--out", required=True, help="output directory")
    sweep.set_defaults(func=cmd_sweep)

    for name, func in (("encode", cmd_encode), ("decode", cmd_decode)):
        p = sub.add_parser(name, help=f"{name} a message through the SDUP1 container")
        p.add_argument("--key", required=True, help="16-byte key as 32 hex digits")
        p.add_argument("--session-id", type=int, default=0)
        p.add_argument("--k", type=int)
        p.add_argument("--n", type=int)
        p.add_argument("--in", dest="input", help="input file (default stdin)")
        p.add_argument("--out", dest="output", help="output file (default stdout)")
        if name == "encode":
            p.add_argument("--seed", type=int, help="seed for share coefficients (default: OS randomness)")
        p.set_defaults(func=func)
    return parser


def main(argv: list[str] | None = None) -> int:
    _setup_logging()
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ConfigurationError as exc:
        log.error("%s", exc)
        return EXIT_CONFIG
    except (SdupError, OSError) as exc:
        log.error("%s", exc)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
