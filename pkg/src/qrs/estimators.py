"""Importance-sampling diagnostics for a QRS sampler at a given β.

All estimates come from one batch of i.i.d. proposal draws. With
``w = P/q`` and ``w_β = P_β/q = min(w, β)``::

    Z   ≈ mean(w)                    Z_β ≈ mean(w_β)           AR = Z_β / β
    p(A_β) ≈ mean(w/Z · 1[w <= β])   bound = 1 - p(A_β)
    TVD ≈ ½ mean(|w/Z - w_β/Z_β|)
    KL(p, p_β) ≈ log(Z_β/Z) + mean(w/Z · log(w/w_β))
    E_{p_β} f ≈ mean(w_β/Z_β · f)
    KL(p_β, a) ≈ -log Z_β + mean(w_β/Z_β · log(P_β/a))

TVD, KL and the moments reuse the batch's own ``Ẑ`` and ``Ẑ_β`` (plug-in
ratio estimators): consistent, not unbiased. Standard errors are first-order
delta-method values built from per-draw influence terms; ``Ẑ`` and ``Ẑ_β``
get plain Monte Carlo standard errors.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .core import DrawBatch, RngStream, log_mean_exp

log = logging.getLogger(__name__)

__all__ = [
    "MomentSpec",
    "DiagnosticsRow",
    "ReplicateReport",
    "estimate_partitions",
    "estimate_ar",
    "estimate_region_mass_and_bound",
    "estimate_tvd",
    "estimate_kl",
    "estimate_moment",
    "estimate_kl_to_base",
    "partition_se",
    "diagnose",
    "replicate_stats",
    "tradeoff_curve",
]


@dataclass(frozen=True)
class MomentSpec:
    name: str
    f: Callable


@dataclass
class DiagnosticsRow:
    beta: float
    ar: float
    ar_se: float
    log_z: float
    log_z_beta: float
    tvd: float
    tvd_se: float
    tvd_bound: float
    kl: float
    kl_se: float
    kl_to_base: float | None = None
    moments: dict = field(default_factory=dict)
    n_draws: int = 0
    seed: int = 0
    replicate: int = 0
    # not serialized to CSV
    tvd_bound_se: float = 0.0
    z_se: float = 0.0
    z_beta_se: float = 0.0
    kl_to_base_se: float | None = None
    raw: dict = field(default_factory=dict)


@dataclass
class ReplicateReport:
    """Per-metric ``(mean, sd)`` over ``R`` independent batches."""

    stats: dict
    R: int
    rows: list

    def mean(self, metric):
        return self.stats[metric][0]

    def sd(self, metric):
        return self.stats[metric][1]


def _log_beta(beta):
    if not beta > 0 or math.isnan(beta):
        raise ValueError("beta must be positive")
    return math.log(beta)


def _log_w_beta(batch: DrawBatch, log_beta):
    return np.minimum(batch.log_ratio, log_beta)


def _mean(batch, v):
    return float(np.dot(batch.counts, v)) / batch.n


def _se_from_influence(batch, psi):
    if batch.n < 2:
        return math.nan
    var = float(np.dot(batch.counts, psi * psi)) / (batch.n - 1)
    return math.sqrt(max(var, 0.0) / batch.n)


def estimate_partitions(batch: DrawBatch, beta: float):
    """``(log Ẑ, log Ẑ_β)`` from the same records."""
    log_beta = _log_beta(beta)
    log_z = log_mean_exp(batch.log_ratio, batch.counts)
    log_z_beta = log_mean_exp(_log_w_beta(batch, log_beta), batch.counts)
    return log_z, min(log_z_beta, log_z)


def partition_se(batch: DrawBatch, beta: float | None = None) -> float:
    """Monte Carlo standard error of ``Ẑ`` (or ``Ẑ_β`` when β is given), in
    direct space."""
    lw = batch.log_ratio if beta is None else _log_w_beta(batch, _log_beta(beta))
    lz = log_mean_exp(lw, batch.counts)
    a = np.exp(lw - lz)
    return math.exp(lz) * _se_from_influence(batch, a - 1.0)


def estimate_ar(log_z_beta: float, beta: float) -> float:
    raw = math.exp(log_z_beta - _log_beta(beta))
    if raw > 1.0:
        log.debug("acceptance rate estimate %.6g clamped to 1", raw)
        return 1.0
    return raw


def _region(batch, log_beta, log_z):
    a = np.exp(batch.log_ratio - log_z)
    in_a = (batch.log_ratio <= log_beta).astype(float)
    pa = _mean(batch, a * in_a)
    # the bound is summed over the complement directly, so it is exactly 0
    # (not 1 - 0.999...) when every draw lies in A_β
    bound = _mean(batch, a * (1.0 - in_a))
    se = _se_from_influence(batch, a * (in_a - pa))
    return pa, bound, se


def estimate_region_mass_and_bound(batch: DrawBatch, beta: float, log_z: float):
    """``(p̂(A_β), 1 - p̂(A_β))``, both clamped to [0, 1]."""
    pa, bound, _ = _region(batch, _log_beta(beta), log_z)
    return min(max(pa, 0.0), 1.0), min(max(bound, 0.0), 1.0)


def _tvd(batch, log_beta, log_z, log_z_beta):
    a = np.exp(batch.log_ratio - log_z)
    b = np.exp(_log_w_beta(batch, log_beta) - log_z_beta)
    d = a - b
    h = 0.5 * np.abs(d)
    t = _mean(batch, h)
    s = np.sign(d)
    ea = _mean(batch, s * a)
    eb = _mean(batch, s * b)
    psi = h - t - 0.5 * ea * (a - 1.0) + 0.5 * eb * (b - 1.0)
    return t, _se_from_influence(batch, psi)


def estimate_tvd(batch: DrawBatch, beta: float, log_z: float, log_z_beta: float) -> float:
    t, _ = _tvd(batch, _log_beta(beta), log_z, log_z_beta)
    return min(max(t, 0.0), 1.0)


def _kl(batch, log_beta, log_z, log_z_beta):
    lw = batch.log_ratio
    lwb = _log_w_beta(batch, log_beta)
    a = np.exp(lw - log_z)
    b = np.exp(lwb - log_z_beta)
    # zero-score draws contribute nothing (0 · log 0/0 := 0)
    with np.errstate(invalid="ignore"):
        l = np.where(np.isneginf(lw), 0.0, lw - lwb)
    L = _mean(batch, a * l)
    k = log_z_beta - log_z + L
    psi = (b - 1.0) - (a - 1.0) + (a * l - L) - L * (a - 1.0)
    return k, _se_from_influence(batch, psi)


def estimate_kl(batch: DrawBatch, beta: float, log_z: float, log_z_beta: float) -> float:
    """Raw ``KL(p, p_β)`` estimate in nats (may be slightly negative from noise)."""
    k, _ = _kl(batch, _log_beta(beta), log_z, log_z_beta)
    return k


def estimate_moment(batch: DrawBatch, beta: float, log_z_beta: float, spec) -> tuple:
    """Self-normalized ``E_{p_β} f`` and its delta-method standard error."""
    f = spec.f if isinstance(spec, MomentSpec) else spec
    b = np.exp(_log_w_beta(batch, _log_beta(beta)) - log_z_beta)
    fx = np.asarray(f(batch.points), dtype=float)
    # normalize by the realized weight sum so f ≡ 1 gives exactly 1
    wsum = float(np.dot(batch.counts, b))
    mu = float(np.dot(batch.counts, b * fx)) / wsum
    psi = b * (fx - mu)
    return mu, _se_from_influence(batch, psi)


def _kl_to_base(batch, log_beta, log_z_beta, base):
    lwb = _log_w_beta(batch, log_beta)
    lpb = lwb + batch.log_q
    la = np.asarray(base.log_score(batch.points), dtype=float)
    live = ~np.isneginf(lpb)
    if np.any(np.isneginf(la) & live):
        raise ValueError("base model support violation")
    b = np.exp(lwb - log_z_beta)
    g = np.where(live, lpb - np.where(live, la, 0.0), 0.0)
    G = _mean(batch, b * g)
    val = -log_z_beta + G
    psi = -(b - 1.0) + (b * g - G) - G * (b - 1.0)
    return val, _se_from_influence(batch, psi)


def estimate_kl_to_base(batch: DrawBatch, beta: float, log_z_beta: float, a) -> float:
    """``KL(p_β, a)`` in nats; ``a.log_score`` must be normalized."""
    val, _ = _kl_to_base(batch, _log_beta(beta), log_z_beta, a)
    return val


def diagnose(batch: DrawBatch, beta: float, moments: Sequence[MomentSpec] = (),
             base=None, replicate: int = 0) -> DiagnosticsRow:
    """Every estimate at one β, with standard errors, as a row."""
    log_beta = _log_beta(beta)
    log_z, log_z_beta = estimate_partitions(batch, beta)
    raw_ar = math.exp(log_z_beta - log_beta)
    ar = estimate_ar(log_z_beta, beta)
    z_se = partition_se(batch)
    z_beta_se = partition_se(batch, beta)
    ar_se = z_beta_se / beta
    pa, bound, pa_se = _region(batch, log_beta, log_z)
    tvd, tvd_se = _tvd(batch, log_beta, log_z, log_z_beta)
    kl, kl_se = _kl(batch, log_beta, log_z, log_z_beta)
    raw = {"ar": raw_ar, "tvd": tvd, "tvd_bound": bound, "kl": kl}
    for name, v, lo, hi in (("tvd", tvd, 0.0, 1.0), ("tvd_bound", bound, 0.0, 1.0),
                            ("kl", kl, 0.0, math.inf)):
        if v < lo or v > hi:
            log.debug("%s estimate %.6g clamped at beta=%g", name, v, beta)
    row = DiagnosticsRow(
        beta=float(beta), ar=ar, ar_se=ar_se, log_z=log_z, log_z_beta=log_z_beta,
        tvd=min(max(tvd, 0.0), 1.0), tvd_se=tvd_se,
        tvd_bound=min(max(bound, 0.0), 1.0),
        kl=max(kl, 0.0), kl_se=kl_se, n_draws=batch.n,
        seed=batch.seed if batch.seed is not None else 0,
        replicate=replicate, tvd_bound_se=pa_se, z_se=z_se, z_beta_se=z_beta_se,
        raw=raw,
    )
    for spec in moments:
        row.moments[spec.name] = estimate_moment(batch, beta, log_z_beta, spec)
    if base is not None:
        row.kl_to_base, row.kl_to_base_se = _kl_to_base(batch, log_beta, log_z_beta, base)
    return row


def _row_metrics(row: DiagnosticsRow) -> dict:
    out = {
        "ar": row.ar, "log_z": row.log_z, "z": math.exp(row.log_z),
        "log_z_beta": row.log_z_beta, "z_beta": math.exp(row.log_z_beta),
        "tvd": row.tvd, "tvd_bound": row.tvd_bound, "kl": row.kl,
    }
    if row.kl_to_base is not None:
        out["kl_to_base"] = row.kl_to_base
    for name, (v, _) in row.moments.items():
        out[f"moment_{name}"] = v
    return out


def replicate_stats(run: Callable[[RngStream], DiagnosticsRow], R: int,
                    base_seed: int, seed: int = 0) -> ReplicateReport:
    """Run ``R`` independent batches (stream ids ``base_seed .. base_seed+R-1``)
    and report each metric's mean and sample standard deviation."""
    if R < 2:
        raise ValueError("replicate statistics need R >= 2")
    rows = [run(RngStream(seed, base_seed + r)) for r in range(R)]
    metrics = [_row_metrics(r) for r in rows]
    stats = {}
    for key in metrics[0]:
        v = np.array([m[key] for m in metrics])
        stats[key] = (float(v.mean()), float(v.std(ddof=1)))
    return ReplicateReport(stats, R, rows)


def _pav_nonincreasing(y):
    """Pool-adjacent-violators fit of a nonincreasing sequence."""
    blocks = []  # (value, weight, length)
    for v in y:
        blocks.append([float(v), 1.0, 1])
        while len(blocks) > 1 and blocks[-2][0] < blocks[-1][0]:
            v2, w2, n2 = blocks.pop()
            v1, w1, n1 = blocks.pop()
            w = w1 + w2
            blocks.append([(v1 * w1 + v2 * w2) / w, w, n1 + n2])
    out = []
    for v, _, n in blocks:
        out.extend([v] * n)
    return out


def tradeoff_curve(rows: Sequence[DiagnosticsRow]):
    """Quality-vs-efficiency triples ``(ar, tvd, kl)`` ordered by β.

    Noise-induced increases of AR in β are repaired by isotonic regression on
    the returned values only; the rows are left untouched.
    """
    rows = sorted(rows, key=lambda r: r.beta)
    if len(rows) < 2 or len({r.beta for r in rows}) < 2:
        raise ValueError("trade-off curve needs at least two distinct beta values")
    ar = [r.ar for r in rows]
    fixed = _pav_nonincreasing(ar)
    if fixed != ar:
        log.info("acceptance rate not monotone in beta; isotonic repair applied")
    return [(a, r.tvd, r.kl) for a, r in zip(fixed, rows)]
