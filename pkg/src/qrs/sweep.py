"""β sweeps over a shared draw batch, β search for a target acceptance rate,
and a side-by-side comparison of QRS with MCMC samplers."""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .core import DrawBatch, RngStream
from .estimators import DiagnosticsRow, MomentSpec, diagnose, tradeoff_curve
from .samplers import (imh_chain, imh_reset, mh_local_chain,
                       percentile_cap, qrs_incremental)

__all__ = [
    "SweepPlan",
    "SweepReport",
    "run_sweep",
    "average_rows",
    "find_beta_for_ar",
    "mcmc_compare",
    "CompareRow",
    "log_grid",
    "poisson_demo_grid",
]

PROTOCOLS = ("qrs", "imh", "imh-reset", "mh-local")


def log_grid(lo: float, hi: float, n: int = 25) -> list:
    if not 0 < lo < hi:
        raise ValueError("grid needs 0 < lo < hi")
    return [float(b) for b in np.geomspace(lo, hi, n)]


def poisson_demo_grid() -> list:
    """0.5 to 4 in steps of 1/8, then a log extension to 64."""
    lin = [0.5 + 0.125 * i for i in range(29)]
    ext = [float(b) for b in np.geomspace(4.0, 64.0, 9)[1:]]
    return lin + ext


@dataclass
class SweepPlan:
    beta_grid: Sequence[float]
    n_draws: int
    replicates: int = 1
    seed: int = 0
    moments: Sequence[MomentSpec] = ()
    base_model: object = None

    def __post_init__(self):
        grid = [float(b) for b in self.beta_grid]
        if not grid or any(b <= 0 or not math.isfinite(b) for b in grid):
            raise ValueError("beta grid must hold positive finite values")
        if any(b2 <= b1 for b1, b2 in zip(grid, grid[1:])):
            raise ValueError("beta grid must be strictly increasing")
        if self.n_draws < 1:
            raise ValueError("n_draws must be >= 1")
        if self.replicates < 1:
            raise ValueError("replicates must be >= 1")
        self.beta_grid = grid


@dataclass
class SweepReport:
    rows: list
    tradeoff: list | None
    averaged: list = field(default_factory=list)

    def rows_for(self, replicate: int):
        return [r for r in self.rows if r.replicate == replicate]


def average_rows(rows: Sequence[DiagnosticsRow]) -> list:
    """Replicate-averaged rows, one per β (ascending)."""
    by_beta = {}
    for r in rows:
        by_beta.setdefault(r.beta, []).append(r)
    out = []
    for beta in sorted(by_beta):
        group = by_beta[beta]
        mean = lambda attr: float(np.mean([getattr(g, attr) for g in group]))
        out.append(DiagnosticsRow(
            beta=beta, ar=mean("ar"), ar_se=mean("ar_se"), log_z=mean("log_z"),
            log_z_beta=mean("log_z_beta"), tvd=mean("tvd"), tvd_se=mean("tvd_se"),
            tvd_bound=mean("tvd_bound"), kl=mean("kl"), kl_se=mean("kl_se"),
            n_draws=group[0].n_draws, seed=group[0].seed, replicate=-1,
        ))
    return out


def run_sweep(plan: SweepPlan, P, q, threads: int = 1) -> SweepReport:
    """Evaluate every β of the plan on one batch per replicate.

    Replicate ``r`` draws its batch from stream ``(plan.seed, r)``; rows come
    back ordered by (β index, replicate index) whatever the thread count.
    """
    def one(r):
        batch = DrawBatch.draw(P, q, plan.n_draws, RngStream(plan.seed, r))
        return [diagnose(batch, b, plan.moments, plan.base_model, replicate=r)
                for b in plan.beta_grid]

    if threads > 1 and plan.replicates > 1:
        with ThreadPoolExecutor(max_workers=threads) as ex:
            per_rep = list(ex.map(one, range(plan.replicates)))
    else:
        per_rep = [one(r) for r in range(plan.replicates)]
    rows = [per_rep[r][i] for i in range(len(plan.beta_grid))
            for r in range(plan.replicates)]
    averaged = average_rows(rows)
    trade = tradeoff_curve(averaged) if len(plan.beta_grid) >= 2 else None
    return SweepReport(rows, trade, averaged)


def find_beta_for_ar(P, q, target_ar: float, n_probe: int, rng: RngStream) -> float:
    """β whose acceptance rate is about ``target_ar``, from a probe batch.

    Uses the same nearest-rank quantile as incremental pruning on the probe's
    ``α = (P/q)/u`` values. ``target_ar = 1`` returns the smallest probe
    ratio, so every probe draw would be accepted.
    """
    if not 0 < target_ar <= 1:
        raise ValueError("target_ar must be in (0, 1]")
    if n_probe < math.ceil(10.0 / target_ar - 1e-9):
        raise ValueError(f"n_probe must be at least 10/target_ar = {10 / target_ar:g}")
    xs = q.draw(rng, size=n_probe)
    lr = np.asarray(P.log_score(xs), dtype=float) - np.asarray(q.log_prob(xs), dtype=float)
    if target_ar == 1:
        return math.exp(float(lr.min()))
    la = np.sort(lr - np.log(rng.uniform(n_probe)))
    return math.exp(float(percentile_cap(la, target_ar)))


@dataclass
class CompareRow:
    method: str
    ar_proxy: float
    moments: dict
    pct_unique: float
    lag1_autocorr: float
    tvd: float | None = None
    kl: float | None = None
    realized_ar: float = math.nan


def _lag1(v):
    v = np.asarray(v, dtype=float)
    if v.size < 3:
        return math.nan
    c = v - v.mean()
    den = float(c @ c)
    if den == 0:
        return math.nan
    return float(c[:-1] @ c[1:]) / den


def _summarize(method, ar, points, moments, statistic, realized):
    mom = {m.name: float(np.mean(m.f(points))) for m in moments}
    stat = statistic(points) if statistic is not None else points
    uniq = 100.0 * np.unique(points).size / points.size
    return CompareRow(method, ar, mom, float(uniq), _lag1(stat), realized_ar=realized)


def mcmc_compare(P, q, ar_levels=(1e-1, 1e-3), protocols=PROTOCOLS, n_samples: int = 1000,
                 moments: Sequence[MomentSpec] = (), kernel=None, burn_in: int = 1000,
                 n_is: int = 100_000, seed: int = 0, statistic=None) -> list:
    """Collect ``n_samples`` from each protocol at each acceptance-rate proxy.

    ``qrs`` uses incremental pruning with ``ar_min`` set to the level and
    reports TVD/KL from an importance-sampling batch at the final β; the MCMC
    protocols map the level to thinning (``imh``, ``mh-local``) or chain
    length (``imh-reset``) and carry no divergence estimates.
    """
    unknown = set(protocols) - set(PROTOCOLS)
    if unknown:
        raise ValueError(f"unknown protocols: {sorted(unknown)}")
    rows = []
    sid = 0
    for ar in ar_levels:
        m = max(1, int(round(1.0 / ar)))
        for proto in protocols:
            rng = RngStream(seed, sid)
            sid += 1
            if proto == "qrs":
                res = qrs_incremental(P, q, n_samples, ar, rng)
                row = _summarize(proto, ar, res.points, moments, statistic, res.realized_ar)
                batch = DrawBatch.draw(P, q, n_is, rng)
                beta = res.beta
                if beta == 0.0:
                    # pruning never engaged, so the law is q restricted to
                    # P > 0; any β at or below the smallest finite ratio
                    # reproduces it on the batch
                    lr = batch.log_ratio[np.isfinite(batch.log_ratio)]
                    beta = math.exp(float(lr.min())) if lr.size else 1.0
                d = diagnose(batch, beta)
                row.tvd, row.kl = d.tvd, d.kl
            elif proto == "imh":
                res = imh_chain(P, q, n_samples, burn_in=burn_in, thinning=m, rng=rng)
                row = _summarize(proto, ar, res.points, moments, statistic,
                                 res.acceptance_rate)
            elif proto == "imh-reset":
                res = imh_reset(P, q, m, n_samples, rng)
                row = _summarize(proto, ar, res.points, moments, statistic,
                                 res.acceptance_rate)
            else:
                if kernel is None:
                    raise ValueError("mh-local needs a kernel")
                init = q.draw(rng)
                res = mh_local_chain(P, kernel, init, n_samples, burn_in=burn_in,
                                     thinning=m, rng=rng)
                row = _summarize(proto, ar, res.points, moments, statistic,
                                 res.acceptance_rate)
            rows.append(row)
    return rows
