"""Command line entry point: ``kwidths {run,certify,estimate,selfcheck}``."""
from __future__ import annotations

import argparse
import sys

import tomli

from .errors import ConfigError, WidthsError
from .report import emit_report
from .scenarios import ScenarioConfig, run_scenario

EXIT_OK, EXIT_CONFIG, EXIT_PIPELINE, EXIT_SELFCHECK = 0, 1, 2, 3


def load_config(path, seed=None):
    try:
        with open(path, "rb") as fh:
            doc = tomli.load(fh)
    except OSError as exc:
        raise ConfigError(f"{path}: {exc.strerror or exc}") from None
    except tomli.TOMLDecodeError as exc:
        raise ConfigError(f"{path}: {exc}") from None
    if seed is not None:
        doc["seed"] = seed
    return ScenarioConfig.from_dict(doc)


def _parser():
    ap = argparse.ArgumentParser(prog="kwidths", description="Certified bounds on Kolmogorov widths.")
    sub = ap.add_subparsers(dest="command", required=True)
    for name, help_ in (("run", "certify and estimate every grid cell"),
                        ("certify", "certified lower bounds only"),
                        ("estimate", "optimized upper bounds only")):
        p = sub.add_parser(name, help=help_)
        p.add_argument("--config", required=True)
        p.add_argument("--seed", type=int)
        p.add_argument("--out")
        p.add_argument("--format", choices=("csv", "json"))
        p.add_argument("--threads", type=int, default=1)
        p.add_argument("--timings", action="store_true", help="fill runtime_ms (breaks byte determinism)")
    p = sub.add_parser("selfcheck", help="fast acceptance checks")
    p.add_argument("--perturb-cp", type=float, default=None, help=argparse.SUPPRESS)
    return ap


def _selfcheck(perturb):
    from contextlib import nullcontext

    from .certify import perturbed_khintchine
    from .checks import fast_checks

    ctx = perturbed_khintchine(perturb) if perturb is not None else nullcontext()
    with ctx:
        results = [check() for check in fast_checks()]
    for r in results:
        print(r.line())
    ok = all(r.passed for r in results)
    print(f"{sum(r.passed for r in results)}/{len(results)} checks passed")
    return EXIT_OK if ok else EXIT_SELFCHECK


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    if args.command == "selfcheck":
        return _selfcheck(args.perturb_cp)
    if args.threads < 1:
        print("error: --threads must be >= 1", file=sys.stderr)
        return EXIT_CONFIG
    if args.seed is not None and args.seed < 0:
        print("error: --seed must be non-negative", file=sys.stderr)
        return EXIT_CONFIG
    try:
        cfg = load_config(args.config, args.seed)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    if args.timings:
        cfg.timings = True
    fmt = args.format or cfg.format
    out = args.out or cfg.out
    try:
        rows = run_scenario(cfg, threads=args.threads,
                            do_certify=args.command in ("run", "certify"),
                            do_estimate=args.command in ("run", "estimate"))
        text = emit_report(rows, fmt, out)
    except WidthsError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_PIPELINE
    if out is None:
        sys.stdout.write(text)
    bad = [r for r in rows if r.status != "ok"]
    for r in bad:
        print(f"row {r.scenario} q={r.q} n={r.n}: {r.status}", file=sys.stderr)
    return EXIT_PIPELINE if bad else EXIT_OK


def entry():
    sys.exit(main())


if __name__ == "__main__":
    entry()
