"""``qrs`` command line.

Exit codes: 0 success, 1 a check failed, 2 I/O error, 64 usage error,
65 config schema violation.
"""

from __future__ import annotations

import argparse
import json
import math
import os
import sys

import numpy as np

from . import serialization as ser
from .catalog import TestbedError, resolve
from .checks import CHECK_HEADER, run_battery
from .config import ConfigError, load_config
from .core import RngStream
from .samplers import (BudgetExhausted, NotAGlobalBound, imh_chain, imh_reset, mh_local_chain,
                       qrs_collect, qrs_incremental, rs_certified)
from .svg import line_chart
from .sweep import PROTOCOLS, SweepPlan, mcmc_compare, poisson_demo_grid, run_sweep
from .testbeds import make_poisson_pair

EXIT_OK, EXIT_CHECK, EXIT_IO, EXIT_USAGE, EXIT_CONFIG = 0, 1, 2, 64, 65

DEFAULT_MAX_DRAWS = 10 ** 9


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _positive_int(s):
    try:
        v = int(s)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not an integer: {s!r}") from None
    if v < 1:
        raise argparse.ArgumentTypeError(f"must be >= 1, got {v}")
    return v


def _nonneg_int(s):
    v = int(s)
    if v < 0:
        raise argparse.ArgumentTypeError(f"must be >= 0, got {v}")
    return v


def _positive_float(s):
    try:
        v = float(s)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not a number: {s!r}") from None
    if not (v > 0 and math.isfinite(v)):
        raise argparse.ArgumentTypeError(f"must be positive and finite, got {s}")
    return v


def _unit_float(s):
    v = _positive_float(s)
    if v > 1:
        raise argparse.ArgumentTypeError(f"must be in (0, 1], got {s}")
    return v


def _threads(args):
    if getattr(args, "threads", None):
        return args.threads
    env = os.environ.get("QRS_THREADS")
    if env:
        try:
            return max(1, int(env))
        except ValueError:
            raise UsageError(f"QRS_THREADS must be an integer, got {env!r}") from None
    return 1


def _emit(path, text):
    """Write to ``path`` or stdout when ``path`` is ``-`` or None."""
    if path in (None, "-"):
        sys.stdout.write(text)
    else:
        ser.write_text(path, text)


def _threshold_label(t):
    e = math.floor(math.log10(t))
    m = t / 10 ** e
    if abs(m - round(m)) < 1e-9:
        m = int(round(m))
        return f"1e{e}" if m == 1 else f"{m}e{e}"
    return f"{t:g}"


# -- poisson-demo -----------------------------------------------------------

def cmd_poisson_demo(args):
    P, q = make_poisson_pair(args.lambda_p, args.lambda_q)
    plan = SweepPlan(poisson_demo_grid(), args.num_draws, args.replicates, args.seed)
    report = run_sweep(plan, P, q, threads=_threads(args))
    out_dir = args.out_dir
    ser.write_text(os.path.join(out_dir, "poisson_sweep.csv"), ser.aggregate_csv(report.rows))
    ser.write_text(os.path.join(out_dir, "poisson_sweep_replicates.csv"),
                   ser.sweep_csv(report.rows))
    if args.plot:
        avg = report.averaged
        ars = [r.ar for r in avg]
        svg = line_chart({"TVD": (ars, [r.tvd for r in avg]),
                          "KL": (ars, [r.kl for r in avg]),
                          "TVD bound": (ars, [r.tvd_bound for r in avg])},
                         xlabel="acceptance rate", ylabel="divergence",
                         title=f"Poisson({args.lambda_p:g}) from Poisson({args.lambda_q:g})")
        ser.write_text(os.path.join(out_dir, "poisson_tradeoff.svg"), svg)
    avg = report.averaged
    i = min(range(len(avg)), key=lambda j: abs(avg[j].ar - args.target_ar))
    beta = avg[i].beta
    tvds = [r.tvd for r in report.rows if r.beta == beta]
    ok = all(t < args.threshold for t in tvds)
    print(f"beta={beta:g} ar={avg[i].ar:.4f} tvd_max={max(tvds):.3e} "
          f"tvd_mean={avg[i].tvd:.3e} over {len(tvds)} replicates")
    print(f"TVD@AR≈{args.target_ar:g} < {_threshold_label(args.threshold)}: "
          f"{'PASS' if ok else 'FAIL'}")
    return EXIT_OK if ok else EXIT_CHECK


# -- sweep ------------------------------------------------------------------

def cmd_sweep(args):
    cfg = load_config(args.config)
    kind = None if cfg.proposal_kind == "default" else cfg.proposal_kind
    try:
        tb = resolve(cfg.testbed, kind)
    except TestbedError as e:
        raise ConfigError(["target.testbed"], str(e)) from None
    base = tb.base if cfg.base_model == "base" else None
    plan = SweepPlan(cfg.beta_grid, cfg.n_draws, cfg.replicates, cfg.seed, base_model=base)
    report = run_sweep(plan, tb.P, tb.q, threads=_threads(args))
    fmt = args.output or cfg.output_format
    text = ser.sweep_json(report.rows) if fmt == "json" else ser.sweep_csv(report.rows)
    _emit(args.out or cfg.output_path, text)
    if report.tradeoff is None:
        print("single grid point: no trade-off curve", file=sys.stderr)
    return EXIT_OK


# -- oracle-check -----------------------------------------------------------

def cmd_oracle_check(args):
    results = run_battery(n_seeds=args.seeds, seed=args.seed, extra_beta=args.beta,
                          n_est=args.num_draws)
    by_check = {}
    for r in results:
        by_check.setdefault(r.check, []).append(r)
    for name, rs in by_check.items():
        bad = [r for r in rs if not r.passed]
        worst = max(rs, key=lambda r: r.abs_diff)
        print(f"{'PASS' if not bad else 'FAIL'} {name}: {len(rs) - len(bad)}/{len(rs)} "
              f"(worst |diff| {worst.abs_diff:.3g} on {worst.case})")
        for r in bad[:5]:
            print(f"  failed: {r.case} beta={r.beta:g} exact={r.exact:.6g} "
                  f"estimate={r.estimate:.6g}")
    if args.out:
        ser.write_text(args.out, ser.table_csv(CHECK_HEADER, [r.row() for r in results]))
    return EXIT_OK if all(r.passed for r in results) else EXIT_CHECK


# -- sample -----------------------------------------------------------------

_METHOD_FLAGS = {
    "qrs": {"beta"}, "rs": {"beta"}, "qrs-incremental": {"min_ar"},
    "imh": {"thinning"}, "imh-reset": {"reset_every"}, "mh-local": {"thinning"},
}


def cmd_sample(args):
    given = {f for f in ("beta", "min_ar", "thinning", "reset_every")
             if getattr(args, f) is not None}
    need = _METHOD_FLAGS[args.method]
    if given - need:
        flags = ", ".join("--" + f.replace("_", "-") for f in sorted(given - need))
        raise UsageError(f"{flags} not valid with --method {args.method}")
    if args.method in ("qrs", "rs", "qrs-incremental", "imh-reset") and not given & need:
        flag = "--" + next(iter(need)).replace("_", "-")
        raise UsageError(f"--method {args.method} needs {flag}")
    tb = resolve(args.testbed)
    rng = RngStream(args.seed, 0)
    meta = {"method": args.method, "testbed": args.testbed, "seed": args.seed, "n": args.n}
    max_draws = args.max_draws
    if args.method in ("qrs", "rs"):
        try:
            if args.method == "qrs":
                res = qrs_collect(tb.P, tb.q, args.beta, args.n, rng, max_draws=max_draws)
            else:
                space = tb.space if tb.enumerable and hasattr(tb.space, "points") else None
                res = rs_certified(tb.P, tb.q, args.beta, args.n, rng, space=space,
                                   max_draws=max_draws)
                meta["certified"] = res.certified
        except NotAGlobalBound as e:
            print(f"error: {e}", file=sys.stderr)
            return EXIT_CHECK
        except BudgetExhausted as e:
            print(f"error: {e} after {max_draws} draws", file=sys.stderr)
            return EXIT_CHECK
        points = res.points
        meta.update(beta=args.beta, n_draws=res.n_draws, realized_ar=res.empirical_ar)
    elif args.method == "qrs-incremental":
        try:
            res = qrs_incremental(tb.P, tb.q, args.n, args.min_ar, rng, max_draws=max_draws)
        except BudgetExhausted as e:
            print(f"error: {e} after {max_draws} draws", file=sys.stderr)
            return EXIT_CHECK
        points = res.points
        meta.update(beta=res.beta, min_ar=args.min_ar, n_draws=res.n_draws,
                    realized_ar=res.realized_ar)
    elif args.method == "imh-reset":
        res = imh_reset(tb.P, tb.q, args.reset_every, args.n, rng)
        points = res.points
        meta.update(reset_every=args.reset_every, n_draws=res.n_draws,
                    realized_ar=res.acceptance_rate, move_rate=res.move_rate)
    else:
        thin = args.thinning or 1
        if args.method == "imh":
            res = imh_chain(tb.P, tb.q, args.n, burn_in=args.burn_in, thinning=thin, rng=rng)
        else:
            if tb.kernel is None:
                raise UsageError(f"testbed {args.testbed} has no local kernel")
            init = tb.q.draw(rng)
            res = mh_local_chain(tb.P, tb.kernel, init, args.n, burn_in=args.burn_in,
                                 thinning=thin, rng=rng)
        points = res.points
        meta.update(thinning=thin, burn_in=args.burn_in, n_draws=res.n_draws,
                    realized_ar=res.acceptance_rate, move_rate=res.move_rate)
    text = "".join(tb.format_point(int(x)) + "\n" for x in np.asarray(points))
    _emit(args.out, text)
    meta_path = args.meta or (None if args.out in (None, "-") else args.out + ".meta.json")
    meta_text = json.dumps({k: (ser.fmt(v) if isinstance(v, float) else v)
                            for k, v in meta.items()}, indent=1, sort_keys=True) + "\n"
    if meta_path is None:
        sys.stderr.write(meta_text)
    else:
        ser.write_text(meta_path, meta_text)
    return EXIT_OK


# -- mcmc-compare -----------------------------------------------------------

def _ar_list(s):
    try:
        vals = [float(t) for t in s.split(",") if t.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"bad AR list {s!r}") from None
    if not vals or any(not 0 < v <= 1 for v in vals):
        raise argparse.ArgumentTypeError("AR levels must lie in (0, 1]")
    return vals


def _protocol_list(s):
    vals = [t.strip() for t in s.split(",") if t.strip()]
    bad = [v for v in vals if v not in PROTOCOLS]
    if not vals or bad:
        raise argparse.ArgumentTypeError(f"protocols must come from {', '.join(PROTOCOLS)}")
    return vals


def cmd_mcmc_compare(args):
    tb = resolve(args.testbed)
    if "mh-local" in args.protocols and tb.kernel is None:
        raise UsageError(f"testbed {args.testbed} has no local kernel for mh-local")
    rows = mcmc_compare(tb.P, tb.q, ar_levels=args.ar, protocols=args.protocols,
                        n_samples=args.n_samples, moments=tb.moments, kernel=tb.kernel,
                        burn_in=args.burn_in, n_is=args.n_is, seed=args.seed,
                        statistic=tb.statistic)
    _emit(args.out, ser.compare_csv(rows, [m.name for m in tb.moments]))
    return EXIT_OK


# -- parser -----------------------------------------------------------------

def build_parser():
    p = _Parser(prog="qrs", description="Quasi rejection sampling and diagnostics.")
    sub = p.add_subparsers(dest="command", parser_class=_Parser)
    sub.required = True

    d = sub.add_parser("poisson-demo", help="two-Poisson trade-off sweep")
    d.add_argument("--lambda-p", type=_positive_float, default=11.0)
    d.add_argument("--lambda-q", type=_positive_float, default=10.0)
    d.add_argument("--num-draws", type=_positive_int, default=10_000_000)
    d.add_argument("--replicates", type=_positive_int, default=5)
    d.add_argument("--seed", type=_nonneg_int, default=0)
    d.add_argument("--out-dir", default=".")
    d.add_argument("--plot", action="store_true", help="also write poisson_tradeoff.svg")
    d.add_argument("--target-ar", type=_unit_float, default=0.25)
    d.add_argument("--threshold", type=_positive_float, default=1e-4)
    d.add_argument("--threads", type=_positive_int)
    d.set_defaults(func=cmd_poisson_demo)

    s = sub.add_parser("sweep", help="β sweep from a config file")
    s.add_argument("config")
    s.add_argument("--output", choices=("csv", "json"))
    s.add_argument("--out", help="output path (default: config's output.path, else stdout)")
    s.add_argument("--threads", type=_positive_int)
    s.set_defaults(func=cmd_sweep)

    o = sub.add_parser("oracle-check", help="exact-vs-estimated check battery")
    o.add_argument("--seeds", type=_nonneg_int, default=20,
                   help="number of random categorical instances")
    o.add_argument("--seed", type=_nonneg_int, default=0)
    o.add_argument("--beta", type=_positive_float, help="extra β added to every ladder")
    o.add_argument("--num-draws", type=_positive_int, default=100_000)
    o.add_argument("--out", help="CSV of every check")
    o.set_defaults(func=cmd_oracle_check)

    a = sub.add_parser("sample", help="draw samples with one method")
    a.add_argument("--testbed", default="twopoint")
    a.add_argument("--method", required=True, choices=sorted(_METHOD_FLAGS))
    a.add_argument("--n", type=_positive_int, default=1000)
    a.add_argument("--beta", type=_positive_float)
    a.add_argument("--min-ar", type=_unit_float)
    a.add_argument("--thinning", type=_positive_int)
    a.add_argument("--reset-every", type=_positive_int)
    a.add_argument("--burn-in", type=_nonneg_int, default=1000)
    a.add_argument("--max-draws", type=_positive_int, default=DEFAULT_MAX_DRAWS)
    a.add_argument("--seed", type=_nonneg_int, default=0)
    a.add_argument("--out", help="sample file (default stdout)")
    a.add_argument("--meta", help="metadata JSON (default <out>.meta.json)")
    a.set_defaults(func=cmd_sample)

    m = sub.add_parser("mcmc-compare", help="QRS against IMH and local MH")
    m.add_argument("--testbed", default="constraint:toy")
    m.add_argument("--ar", type=_ar_list, default=[1e-1, 1e-2, 1e-3])
    m.add_argument("--protocols", type=_protocol_list, default=list(PROTOCOLS))
    m.add_argument("--n-samples", type=_positive_int, default=1000)
    m.add_argument("--burn-in", type=_nonneg_int, default=1000)
    m.add_argument("--n-is", type=_positive_int, default=100_000)
    m.add_argument("--seed", type=_nonneg_int, default=0)
    m.add_argument("--out")
    m.set_defaults(func=cmd_mcmc_compare)
    return p


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
        return args.func(args)
    except UsageError as e:
        print(f"usage error: {e}", file=sys.stderr)
        return EXIT_USAGE
    except ConfigError as e:
        print(str(e), file=sys.stderr)
        return EXIT_CONFIG
    except TestbedError as e:
        print(f"usage error: {e}", file=sys.stderr)
        return EXIT_USAGE
    except OSError as e:
        print(f"I/O error: {e}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
