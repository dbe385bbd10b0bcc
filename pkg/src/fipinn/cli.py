"""Command-line front end: ``run``, ``converge`` and ``bench``.

Values from the command line override the JSON config file, which
overrides the built-in defaults.  ``FIPINN_NUM_THREADS`` caps the BLAS
thread pools (default 1).
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

from threadpoolctl import threadpool_limits

from .adaptive import STRATEGIES
from .harness import (
    ExperimentConfig,
    convergence_study,
    load_preset,
    preset_names,
    run_comparison,
    run_experiment,
    run_suite,
)

THREADS_ENV = "FIPINN_NUM_THREADS"


def thread_cap() -> int:
    raw = os.environ.get(THREADS_ENV, "1")
    try:
        n = int(raw)
    except ValueError:
        raise SystemExit(f"{THREADS_ENV} must be an integer, got {raw!r}")
    if n < 1:
        raise SystemExit(f"{THREADS_ENV} must be >= 1")
    return n


def _load_config(path: str) -> ExperimentConfig:
    p = Path(path)
    if p.exists():
        return ExperimentConfig.load(p)
    if path in preset_names():
        return load_preset(path)
    raise SystemExit(f"config {path!r} is neither a file nor a preset ({', '.join(preset_names())})")


def _log(msg: str) -> None:
    print(msg, flush=True)


def cmd_run(args) -> int:
    cfg = _load_config(args.config).with_overrides(seed=args.seed, strategy=args.strategy, out=args.out)
    if args.compare:
        strategies = [cfg.strategy] + [s for s in STRATEGIES if s != cfg.strategy]
        res = run_comparison(cfg, strategies, seeds=[cfg.seed] if args.seed is not None else None, log=_log)
        print(json.dumps(res.summary(), indent=2))
        return 0
    report = run_experiment(cfg, log=_log)
    print(f"relative_l2={report.relative_l2:.6e} max_abs_error={report.max_abs_error:.6e} "
          f"rounds={len(report.trace['rounds'])} stop={report.trace['stop_reason']} out={cfg.out}")
    return 0


def cmd_converge(args) -> int:
    cfg = _load_config(args.config).with_overrides(out=args.out)
    default = {"eps_p": [0.3, 0.1, 0.03, 0.01], "eps_r": [0.3, 0.1, 0.03, 0.01]}[args.axis]
    tols = args.values or default
    seeds = args.seeds or cfg.seeds
    res = convergence_study(cfg, args.axis, tols, seeds=seeds, log=_log)
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    (out / f"convergence_{args.axis}.json").write_text(json.dumps(res.to_dict(), indent=2))
    print(f"axis={res.axis} slope={res.slope:.4f} residual={res.residual:.4f}")
    for t, e in zip(res.tolerances, res.errors):
        print(f"  {args.axis}={t:g} rel_l2={e:.4e}")
    return 0


def cmd_bench(args) -> int:
    summaries = run_suite(args.suite, out_root=args.out, log=_log)
    print(json.dumps(summaries, indent=2))
    return 0


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="fipinn", description=__doc__.splitlines()[0])
    sub = ap.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run one experiment from a config file or preset name")
    run.add_argument("--config", required=True)
    run.add_argument("--seed", type=int)
    run.add_argument("--strategy", choices=STRATEGIES)
    run.add_argument("--out")
    run.add_argument("--compare", action="store_true",
                     help="also run the other strategies with matched point budgets")
    run.set_defaults(func=cmd_run)

    conv = sub.add_parser("converge", help="error versus tolerance study")
    conv.add_argument("--axis", required=True, choices=("eps_p", "eps_r"))
    conv.add_argument("--config", required=True)
    conv.add_argument("--values", type=float, nargs="+")
    conv.add_argument("--seeds", type=int, nargs="+")
    conv.add_argument("--out")
    conv.set_defaults(func=cmd_converge)

    bench = sub.add_parser("bench", help="run every preset of a suite")
    bench.add_argument("--suite", required=True, choices=("desk", "full"))
    bench.add_argument("--out", default="runs/bench")
    bench.set_defaults(func=cmd_bench)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    with threadpool_limits(limits=thread_cap()):
        try:
            return args.func(args)
        except (KeyError, ValueError, OSError) as exc:
            print(f"error: {exc}", file=sys.stderr)
            return 2


if __name__ == "__main__":
    sys.exit(main())
