"""Command-line front end.

Every run echoes its resolved configuration (seed included) as one JSON line
on stderr prefixed with ``# config``; JSON outputs carry it under "config"
as well.  Exit codes: 0 ok, 1 computation error, 2 usage error.

CSV schemas:
    curve      alpha,piece,c,c_0,...,c_k
    dp-sweep   n,ratio
    simulate   replicate,value,max   (per-replicate, via --values-csv)
"""

from __future__ import annotations

import argparse
import csv
import json
import math
import os
import sys
from pathlib import Path

import numpy as np

from . import analytics, dp_optimal, multi_test, sim
from .distributions import BUILDERS, ContinuousDistribution, DiscreteDistribution, parse_dist
from .errors import ThresholdProbeError
from .policies import TABULATED_ALPHAS, QuantilePolicy, gambler_thresholds, nonadaptive_runner, quantile_runner

SEED_ENV = "THRESHOLD_PROBE_SEED"
SWEEP_FAMILIES = ("counterexample3", "f_b", "golden_nugget")


def _default_seed() -> int:
    raw = os.environ.get(SEED_ENV)
    if raw is None:
        return 0
    try:
        return int(raw)
    except ValueError:
        raise SystemExit(f"{SEED_ENV} must be an integer, got {raw!r}")


def _policy(args) -> QuantilePolicy:
    if args.alphas:
        return QuantilePolicy.parse(args.alphas)
    if args.k in TABULATED_ALPHAS:
        return QuantilePolicy.tabulated(args.k)
    raise ThresholdProbeError(f"no tabulated parameters for k={args.k}; pass --alphas")


def _config(args) -> dict:
    cfg = {k: v for k, v in vars(args).items() if k != "func"}
    return cfg


def _open_out(args):
    if args.out in (None, "-"):
        return sys.stdout
    Path(args.out).parent.mkdir(parents=True, exist_ok=True)
    return open(args.out, "w", newline="")


def _emit_json(args, payload: dict) -> None:
    payload = dict(payload, config=_config(args))
    fh = _open_out(args)
    try:
        json.dump(payload, fh, indent=2, default=_json_default)
        fh.write("\n")
    finally:
        if fh is not sys.stdout:
            fh.close()


def _json_default(obj):
    if isinstance(obj, (np.floating, np.integer)):
        return obj.item()
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    raise TypeError(f"not JSON serializable: {type(obj).__name__}")


def _emit_csv(args, header, rows) -> None:
    fh = _open_out(args)
    try:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)
    finally:
        if fh is not sys.stdout:
            fh.close()


def _finite(x):
    return None if x is None or not math.isfinite(x) else x


# ----------------------------------------------------------------- commands


def cmd_optimize(args) -> None:
    res = analytics.optimize_alphas(args.k, starts=args.starts, seed=args.seed)
    out = res.as_dict()
    out["pieces"] = [dict(p, alpha=_finite(p["alpha"])) for p in out["pieces"]]
    _emit_json(args, out)


def _curve_alpha_max(args, curve) -> float:
    if args.alpha_max is not None:
        return args.alpha_max
    top = max(3.0, 1.5 * curve.alphas[0])
    return top if curve.n is None else min(top, float(curve.n))


def cmd_curve(args) -> None:
    from .plotting import curve_header, curve_rows, plot_curve

    policy = _policy(args)
    curve = analytics.ratio_curve(policy.alphas, args.mode, args.n if args.mode == "finite" else None)
    rows = curve_rows(curve, _curve_alpha_max(args, curve), args.points)
    title = f"k={curve.k}, {args.mode}" + (f", n={args.n}" if args.mode == "finite" else "")
    if args.format == "svg":
        if not args.out:
            raise ThresholdProbeError("--format svg needs --out")
        plot_curve(rows, curve.k, args.out, title)
    elif args.format == "json":
        _emit_json(args, {"header": curve_header(curve.k), "rows": rows, "min": analytics.min_ratio(curve).as_dict()})
    else:
        _emit_csv(args, curve_header(curve.k), rows)
    if args.plot:
        plot_curve(rows, curve.k, args.plot, title)


def cmd_dp(args) -> None:
    dist = parse_dist(args.dist)
    if not isinstance(dist, DiscreteDistribution):
        raise ThresholdProbeError("dp needs a discrete distribution")
    table = dp_optimal.solve(dist, args.n)
    from .distributions import expected_max

    emax = expected_max(dist, args.n)
    out = {"n": args.n, "value": table.value, "expected_max": emax, "ratio": table.value / emax}
    if args.table:
        out["table"] = table.to_dict()
    _emit_json(args, out)


def _sweep_builder(args):
    if args.family == "golden_nugget":
        return lambda n: BUILDERS["golden_nugget"][0](alpha=args.alpha, n=n)
    return lambda n: BUILDERS[args.family][0](n=n)


def cmd_dp_sweep(args) -> None:
    from .plotting import plot_sweep

    if args.n_min > args.n_max:
        raise ThresholdProbeError("--n-min must not exceed --n-max")
    rows = dp_optimal.ratio_sweep(_sweep_builder(args), range(args.n_min, args.n_max + 1, args.step))
    if args.format == "svg":
        if not args.out:
            raise ThresholdProbeError("--format svg needs --out")
        plot_sweep(rows, args.out, args.family)
    elif args.format == "json":
        _emit_json(args, {"header": ["n", "ratio"], "rows": rows})
    else:
        _emit_csv(args, ["n", "ratio"], rows)
    if args.plot:
        plot_sweep(rows, args.plot, args.family)


def _runner(args, dist):
    if args.policy == "quantile":
        return quantile_runner(_policy(args)), {}
    if args.policy == "gambler":
        if not isinstance(dist, DiscreteDistribution):
            raise ThresholdProbeError("gambler thresholds need a discrete distribution")
        return nonadaptive_runner(gambler_thresholds(dist, args.n)), {}
    if args.policy == "dp":
        if not isinstance(dist, DiscreteDistribution):
            raise ThresholdProbeError("dp policy needs a discrete distribution")
        table = dp_optimal.solve(dist, args.n)
        return dp_optimal.dp_runner(table), {"exact_value": table.value}
    return multi_test.multitest_runner(), {}


def cmd_simulate(args) -> None:
    dist = parse_dist(args.dist)
    runner, extra = _runner(args, dist)
    cfg = sim.SimConfig(args.reps, args.seed, args.workers)
    res = sim.estimate(runner, dist, args.n, cfg, keep_values=bool(args.values_csv))
    out = res.as_dict()
    if args.policy == "quantile" and isinstance(dist, DiscreteDistribution):
        extra["exact_value"] = analytics.exact_policy_value(_policy(args), dist, args.n)
    if "exact_value" in extra:
        extra["exact_ratio"] = extra["exact_value"] / res.expected_max
    out.update(extra)
    _emit_json(args, out)
    if args.values_csv:
        with open(args.values_csv, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["replicate", "value", "max"])
            w.writerows(zip(range(res.replicates), res.values.tolist(), res.maxes.tolist()))


def cmd_multitest(args) -> None:
    dist = parse_dist(args.dist)
    if not isinstance(dist, ContinuousDistribution):
        raise ThresholdProbeError("multitest needs a continuous distribution")
    cfg = sim.SimConfig(args.reps, args.seed, args.workers)
    res = sim.estimate(multi_test.multitest_runner(), dist, args.n, cfg)
    _emit_json(
        args,
        {
            "mean_ratio": res.ratio,
            "ratio_stderr": res.ratio_stderr,
            "p_max_hit": float(np.mean(res.extras["hit_max"])),
            "mean_budget_used": float(np.mean(res.extras["budget_used"])),
            "max_budget_used": int(np.max(res.extras["budget_used"])),
            "n": args.n,
            "replicates": args.reps,
        },
    )


def cmd_plot_data(args) -> None:
    """Write CSV + SVG for the two-threshold curve, the DP sweep and the three-threshold curve."""
    from .plotting import curve_header, curve_rows, plot_curve, plot_sweep

    outdir = Path(args.outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    written = []
    for name, k in (("curve_k2", 2), ("curve_k3", 3)):
        curve = analytics.ratio_curve(TABULATED_ALPHAS[k], "limit")
        rows = curve_rows(curve, max(3.0, 1.5 * curve.alphas[0]), args.points)
        _write_csv(outdir / f"{name}.csv", curve_header(k), rows)
        plot_curve(rows, k, str(outdir / f"{name}.svg"), f"k={k}, limit")
        written += [f"{name}.csv", f"{name}.svg"]
    rows = dp_optimal.ratio_sweep(lambda n: BUILDERS["counterexample3"][0](n=n), range(3, args.n_max + 1))
    _write_csv(outdir / "dp_sweep.csv", ["n", "ratio"], rows)
    plot_sweep(rows, str(outdir / "dp_sweep.svg"), "counterexample3")
    written += ["dp_sweep.csv", "dp_sweep.svg"]
    print(json.dumps({"outdir": str(outdir), "files": written, "config": _config(args)}))


def _write_csv(path, header, rows) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)


# ------------------------------------------------------------------- parser


def build_parser() -> argparse.ArgumentParser:
    seed = _default_seed()
    parser = argparse.ArgumentParser(prog="threshold-probe", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, fmt=("json",), default_fmt="json"):
        p.add_argument("--seed", type=int, default=seed, help=f"RNG seed (default ${SEED_ENV} or 0)")
        p.add_argument("--workers", type=int, default=1)
        p.add_argument("--out", help="output file (default stdout)")
        p.add_argument("--format", choices=fmt, default=default_fmt)

    def policy_flags(p):
        p.add_argument("--alphas", help="comma-separated decreasing alphas")
        p.add_argument("--k", type=int, default=3, help="use tabulated alphas for this k")

    p = sub.add_parser("optimize", help="optimize alphas for k thresholds")
    p.add_argument("--k", type=int, required=True)
    p.add_argument("--starts", type=int, default=20)
    common(p)
    p.set_defaults(func=cmd_optimize)

    p = sub.add_parser("curve", help="ratio curve c(alpha) as CSV/JSON/SVG")
    policy_flags(p)
    p.add_argument("--mode", choices=("limit", "finite"), default="limit")
    p.add_argument("--n", type=int, default=1000)
    p.add_argument("--points", type=int, default=2000)
    p.add_argument("--alpha-max", type=float)
    p.add_argument("--plot", help="also render an SVG/PNG chart to this path")
    common(p, ("csv", "json", "svg"), "csv")
    p.set_defaults(func=cmd_curve)

    p = sub.add_parser("dp", help="optimal policy value for a discrete distribution")
    p.add_argument("--dist", required=True)
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--table", action="store_true", help="include the full policy table")
    common(p)
    p.set_defaults(func=cmd_dp)

    p = sub.add_parser("dp-sweep", help="optimal ratio over a range of n (CSV n,ratio)")
    p.add_argument("--family", choices=SWEEP_FAMILIES, default="counterexample3")
    p.add_argument("--alpha", type=float, default=1.0, help="golden_nugget parameter")
    p.add_argument("--n-min", type=int, default=3)
    p.add_argument("--n-max", type=int, default=1000)
    p.add_argument("--step", type=int, default=1)
    p.add_argument("--plot", help="also render an SVG/PNG chart to this path")
    common(p, ("csv", "json", "svg"), "csv")
    p.set_defaults(func=cmd_dp_sweep)

    p = sub.add_parser("simulate", help="Monte Carlo estimate of a policy's ratio")
    p.add_argument("--policy", choices=("quantile", "gambler", "dp", "multitest"), default="quantile")
    policy_flags(p)
    p.add_argument("--dist", required=True)
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--reps", type=int, default=10_000)
    p.add_argument("--values-csv", help="write per-replicate values to this CSV")
    common(p)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("multitest", help="multi-test algorithm statistics")
    p.add_argument("--dist", default="uniform01")
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--reps", type=int, default=1000)
    common(p)
    p.set_defaults(func=cmd_multitest)

    p = sub.add_parser("plot-data", help="export CSV and SVG for all figures")
    p.add_argument("--outdir", default="figures")
    p.add_argument("--n-max", type=int, default=1000)
    p.add_argument("--points", type=int, default=2000)
    p.add_argument("--seed", type=int, default=seed)
    p.set_defaults(func=cmd_plot_data)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    print("# config " + json.dumps(_config(args)), file=sys.stderr)
    try:
        args.func(args)
    except (ThresholdProbeError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
