"""Command-line entry point: simulate, oracle, summarize, plot."""
from __future__ import annotations

import argparse
import json
import sys

from .errors import ConfigError, MtbaiError
from .harness import emit_outputs, format_summary, load_config, read_runs_csv, run_experiment, summarize
from .oracle import char_time_G, char_time_H, solve_allocation
from .plotting import PLOTTABLE, plot_series

EXIT_CONFIG, EXIT_RUNTIME = 2, 3


def _simulate(args) -> int:
    cfg = load_config(args.config).with_overrides(
        runs=args.runs, seed=args.seed, algo=args.algo, threads=args.threads,
        log_series=True if args.series else None)
    res = run_experiment(cfg)
    paths = emit_outputs(res.records, res.series, args.out, res.failures)
    print(f"{len(res.records)} records, {len(res.failures)} failed replicates -> {paths['runs.csv'].parent}")
    if res.failures:
        print(f"warning: {len(res.failures)} replicate(s) failed; see failures.csv", file=sys.stderr)
    return 0


def _oracle(args) -> int:
    cfg = load_config(args.config)
    if args.sigma is not None:
        cfg = cfg.with_overrides(sigma=args.sigma)
    opts = cfg.solver_options()
    sol = solve_allocation(cfg.instance, opts)
    out = sol.to_json()
    out["k_g"] = char_time_G(cfg.instance, opts, cfg.delta_g)
    out["k_h"] = char_time_H(cfg.instance, opts, cfg.delta_h)
    print(json.dumps(out))
    return 0


def _summarize(args) -> int:
    rows = summarize(read_runs_csv(args.inp))
    print(format_summary(rows, args.format))
    return 0


def _plot(args) -> int:
    plot_series(args.inp, args.out, args.column, args.window)
    return 0


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="mtbai", description=__doc__)
    sub = ap.add_subparsers(dest="command", required=True)

    s = sub.add_parser("simulate", help="run replicated experiments")
    s.add_argument("--config", required=True)
    s.add_argument("--runs", type=int)
    s.add_argument("--seed", type=int)
    s.add_argument("--algo", choices=["osrl", "tas", "both"])
    s.add_argument("--threads", type=int)
    s.add_argument("--series", action="store_true", help="log per-recomputation series")
    s.add_argument("--out", required=True)
    s.set_defaults(func=_simulate)

    o = sub.add_parser("oracle", help="solve the optimal allocation and print JSON")
    o.add_argument("--config", required=True)
    o.add_argument("--sigma", type=float)
    o.set_defaults(func=_oracle)

    m = sub.add_parser("summarize", help="aggregate a runs.csv")
    m.add_argument("--in", dest="inp", required=True)
    m.add_argument("--format", choices=["csv", "json", "markdown"], default="csv")
    m.set_defaults(func=_summarize)

    p = sub.add_parser("plot", help="render a series column as SVG")
    p.add_argument("--in", dest="inp", required=True)
    p.add_argument("--column", required=True, choices=PLOTTABLE)
    p.add_argument("--out", required=True)
    p.add_argument("--window", type=int, default=51)
    p.set_defaults(func=_plot)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (MtbaiError, ArithmeticError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
