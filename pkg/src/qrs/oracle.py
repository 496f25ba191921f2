"""Exact computations on finite or truncated countable spaces.

Everything here is ground truth for the samplers and estimators: the
truncated target ``p_β``, its partition function and acceptance rate, the
TVD bound ``1 - p(A_β)``, divergences between tables, and dense MCMC
transition kernels for stationarity / detailed-balance checks.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy.special import logsumexp

from .core import log_sub_ratio

__all__ = [
    "FiniteSpace",
    "CountableSpace",
    "ExactTable",
    "ExactKernel",
    "enumerate_target",
    "exact_p_beta",
    "exact_divergences",
    "tvd_one_sided_identity",
    "exact_ar",
    "exact_region_mass",
    "exact_log_z",
    "exact_moment",
    "exact_kl_to_base",
    "exact_beta_for_ar",
    "sup_log_ratio",
    "imh_exact_kernel",
    "mh_local_exact_kernel",
    "kernel_tvd_path",
    "imh_tvd_bound",
]

KERNEL_MAX_POINTS = 1000


@dataclass(frozen=True)
class FiniteSpace:
    points: np.ndarray

    def __post_init__(self):
        pts = np.unique(np.asarray(self.points, dtype=np.int64))
        object.__setattr__(self, "points", pts)

    def enumerate(self, P, mass_tol: float = 1e-15):
        return self.points, 0.0

    def __len__(self):
        return self.points.size


@dataclass(frozen=True)
class CountableSpace:
    """The nonnegative integers with a monotone tail bound.

    ``tail_mass(k)`` must upper-bound ``Σ_{x > k} P(x)`` for the score being
    enumerated; ``total_mass`` is ``Σ P`` when known.
    """

    tail_mass: Callable[[int], float]
    total_mass: float | None = None
    max_points: int = 1_000_000

    def enumerate(self, P, mass_tol: float = 1e-15):
        block = 64
        start = 0
        scores = []
        cum = 0.0
        while True:
            k = np.arange(start, start + block, dtype=np.int64)
            s = np.exp(np.asarray(P.log_score(k), dtype=float))
            scores.append(s)
            for j, term in enumerate(s):
                cum += term
                if cum <= 0:
                    continue
                kk = start + j
                if self.total_mass is not None and cum < (1 - mass_tol) * self.total_mass:
                    continue
                tail = self.tail_mass(kk)
                if term < mass_tol * cum and tail <= mass_tol * cum:
                    return np.arange(kk + 1, dtype=np.int64), tail / (cum + tail)
            start += block
            block *= 2
            if start > self.max_points:
                raise ValueError("tail bound never dropped below the tolerance")


@dataclass(frozen=True)
class ExactTable:
    """Normalized probabilities over enumerated points (sorted)."""

    points: np.ndarray
    probs: np.ndarray
    truncation_mass: float = 0.0
    log_z: float = 0.0

    def prob_of(self, x):
        idx = np.searchsorted(self.points, x)
        idx = np.clip(idx, 0, self.points.size - 1)
        return np.where(self.points[idx] == x, self.probs[idx], 0.0)

    def __len__(self):
        return self.points.size


def _require_space(space):
    if space is None:
        raise ValueError("infinite space needs a tail bound to enumerate")
    return space


def _normalize(points, log_scores, truncation_mass) -> ExactTable:
    log_scores = np.asarray(log_scores, dtype=float)
    if not np.any(np.isfinite(log_scores)) or np.any(np.isposinf(log_scores)):
        raise ValueError("zero partition function")
    log_z = float(logsumexp(log_scores))
    probs = np.exp(log_scores - log_z)
    return ExactTable(np.asarray(points), probs, float(truncation_mass), log_z)


def enumerate_target(P, space, mass_tol: float = 1e-15) -> ExactTable:
    """Enumerate and normalize ``P`` over ``space``."""
    points, trunc = _require_space(space).enumerate(P, mass_tol)
    return _normalize(points, P.log_score(points), trunc)


def _log_p_beta(P, q, log_beta, points):
    log_p = np.asarray(P.log_score(points), dtype=float)
    log_q = np.asarray(q.log_prob(points), dtype=float)
    return np.minimum(log_p, log_beta + log_q), log_p, log_q


def _check_beta(beta):
    if not beta > 0 or not math.isfinite(beta):
        raise ValueError("beta must be positive")
    return math.log(beta)


def exact_p_beta(P, q, beta: float, space, mass_tol: float = 1e-15) -> ExactTable:
    """Exact ``p_β = min(P, βq) / Z_β``; ``log_z`` holds ``log Z_β``."""
    log_beta = _check_beta(beta)
    points, trunc = _require_space(space).enumerate(P, mass_tol)
    lpb, lp, _ = _log_p_beta(P, q, log_beta, points)
    if not np.any(np.isfinite(lpb)):
        raise ValueError("Z_beta is zero")
    table = _normalize(points, lpb, 0.0)
    if trunc > 0:
        # P_β ≤ P, so the P tail bounds the P_β tail; renormalize by Z_β
        z_full = float(logsumexp(lp))
        trunc = trunc * math.exp(z_full - table.log_z)
    return ExactTable(table.points, table.probs, min(1.0, trunc), table.log_z)


def exact_log_z(P, space, mass_tol: float = 1e-15) -> float:
    return enumerate_target(P, space, mass_tol).log_z


def exact_ar(P, q, beta: float, space, mass_tol: float = 1e-15) -> float:
    """Exact acceptance rate ``Z_β / β``."""
    log_beta = _check_beta(beta)
    points, _ = _require_space(space).enumerate(P, mass_tol)
    lpb, _, _ = _log_p_beta(P, q, log_beta, points)
    if not np.any(np.isfinite(lpb)):
        return 0.0
    return float(min(1.0, math.exp(logsumexp(lpb) - log_beta)))


def exact_region_mass(P, q, beta: float, space, mass_tol: float = 1e-15) -> float:
    """Exact ``p(A_β)`` with ``A_β = {x : P(x) <= β q(x)}``.

    ``1 - exact_region_mass`` is the TVD upper bound.
    """
    log_beta = _check_beta(beta)
    table = enumerate_target(P, space, mass_tol)
    lp = np.asarray(P.log_score(table.points), dtype=float)
    lq = np.asarray(q.log_prob(table.points), dtype=float)
    in_a = lp <= log_beta + lq
    return float(table.probs[in_a].sum())


def exact_moment(P, q, beta: float, f, space, mass_tol: float = 1e-15) -> float:
    """Exact ``E_{p_β} f``."""
    t = exact_p_beta(P, q, beta, space, mass_tol)
    return float(np.dot(t.probs, np.asarray(f(t.points), dtype=float)))


def exact_kl_to_base(P, q, beta: float, base, space, mass_tol: float = 1e-15) -> float:
    """Exact ``KL(p_β, a)`` for a normalized base model ``a``."""
    t = exact_p_beta(P, q, beta, space, mass_tol)
    la = np.asarray(base.log_score(t.points), dtype=float)
    m = t.probs > 0
    if np.any(np.isneginf(la[m])):
        return math.inf
    return float(np.sum(t.probs[m] * (np.log(t.probs[m]) - la[m])))


def _align(p1: ExactTable, p2: ExactTable):
    pts = np.union1d(p1.points, p2.points)
    return pts, p1.prob_of(pts), p2.prob_of(pts)


def exact_divergences(p1: ExactTable, p2: ExactTable):
    """``(TVD(p1, p2), KL(p1, p2))``; KL is ``inf`` off ``p2``'s support."""
    _, a, b = _align(p1, p2)
    tvd = 0.5 * float(np.abs(a - b).sum())
    m = a > 0
    if np.any(b[m] == 0):
        return tvd, math.inf
    kl = float(np.sum(a[m] * (np.log(a[m]) - np.log(b[m]))))
    return tvd, kl


def tvd_one_sided_identity(p1: ExactTable, p2: ExactTable) -> float:
    """TVD as the one-sided sum ``Σ_{p1 >= p2} (p1 - p2)``."""
    _, a, b = _align(p1, p2)
    m = a >= b
    return float((a[m] - b[m]).sum())


def sup_log_ratio(P, q, space=None, mass_tol: float = 1e-15) -> float:
    """``sup_x log P(x)/q(x)``.

    Two Poissons are handled in closed form (the log ratio is affine in
    ``x``). Otherwise the space must be finite.
    """
    lam_p = getattr(P, "lam", None)
    lam_q = getattr(q, "lam", None)
    if lam_p is not None and lam_q is not None:
        if lam_p > lam_q:
            return math.inf
        return lam_q - lam_p
    if not isinstance(space, FiniteSpace):
        raise ValueError("sup ratio needs a finite space or a closed form")
    lr = log_sub_ratio(P.log_score(space.points), q.log_prob(space.points))
    return float(np.max(lr))


def exact_beta_for_ar(P, q, target_ar: float, space, rtol: float = 1e-13) -> float:
    """β at which the exact acceptance rate equals ``target_ar``.

    ``target_ar = 1`` returns the smallest importance ratio over the
    proposal support (the largest β with AR = 1).
    """
    if not 0 < target_ar <= 1:
        raise ValueError("target acceptance rate must be in (0, 1]")
    points, _ = space.enumerate(P)
    lq = np.asarray(q.log_prob(points), dtype=float)
    lr = log_sub_ratio(P.log_score(points), lq)[np.isfinite(lq)]
    lr = lr[np.isfinite(lr)]
    lo, hi = float(lr.min()), float(lr.max())
    if target_ar == 1:
        return math.exp(lo)
    ar_hi = exact_ar(P, q, math.exp(hi), space)
    if ar_hi > target_ar:
        # past the largest ratio Z_β is constant and AR falls as 1/β
        return math.exp(hi) * ar_hi / target_ar
    while hi - lo > rtol:
        mid = 0.5 * (lo + hi)
        if exact_ar(P, q, math.exp(mid), space) > target_ar:
            lo = mid
        else:
            hi = mid
    return math.exp(0.5 * (lo + hi))


@dataclass(frozen=True)
class ExactKernel:
    """Dense row-stochastic matrix; ``matrix[i, j] = K(points[i], points[j])``."""

    points: np.ndarray
    matrix: np.ndarray

    def row_sums(self):
        return self.matrix.sum(axis=1)

    def stationarity_residual(self, p: np.ndarray) -> float:
        return float(np.max(np.abs(p @ self.matrix - p)))

    def detailed_balance_residual(self, p: np.ndarray) -> float:
        flow = p[:, None] * self.matrix
        return float(np.max(np.abs(flow - flow.T)))


def _finite_points(space):
    if not isinstance(space, FiniteSpace):
        raise ValueError("kernel analysis needs a finite space")
    if len(space) > KERNEL_MAX_POINTS:
        raise ValueError(f"kernel analysis is capped at {KERNEL_MAX_POINTS} points")
    return space.points


def _mh_matrix(log_p, log_k):
    """MH kernel from target log-scores and a proposal log-kernel matrix."""
    n = log_p.size
    with np.errstate(invalid="ignore"):
        log_acc = (log_p[None, :] + log_k.T) - (log_p[:, None] + log_k)
    # source with zero score: always move; nan arises only from inf - inf
    log_acc = np.where(np.isneginf(log_p)[:, None], 0.0, log_acc)
    log_acc = np.where(np.isnan(log_acc), -np.inf, log_acc)
    acc = np.exp(np.minimum(0.0, log_acc))
    K = np.exp(log_k) * acc
    np.fill_diagonal(K, 0.0)
    K[np.arange(n), np.arange(n)] = 1.0 - K.sum(axis=1)
    return K


def imh_exact_kernel(P, q, space) -> ExactKernel:
    """IMH transition matrix: ``K(x, y) = q(y) min(1, w(y)/w(x))`` for
    ``y != x`` with ``w = P/q``; the diagonal takes the residual mass."""
    pts = _finite_points(space)
    log_p = np.asarray(P.log_score(pts), dtype=float)
    log_q = np.asarray(q.log_prob(pts), dtype=float)
    lw = log_sub_ratio(log_p, log_q)
    n = pts.size
    with np.errstate(invalid="ignore"):
        log_acc = lw[None, :] - lw[:, None]
    log_acc = np.where(np.isneginf(lw)[:, None], 0.0, log_acc)
    log_acc = np.where(np.isnan(log_acc), -np.inf, log_acc)
    K = np.exp(log_q)[None, :] * np.exp(np.minimum(0.0, log_acc))
    K[np.arange(n), np.arange(n)] = 0.0
    K[np.arange(n), np.arange(n)] = 1.0 - K.sum(axis=1)
    return ExactKernel(pts, K)


def mh_local_exact_kernel(P, kernel, space) -> ExactKernel:
    """General MH matrix with acceptance ``min(1, P(y)k(y,x) / P(x)k(x,y))``."""
    pts = _finite_points(space)
    log_p = np.asarray(P.log_score(pts), dtype=float)
    log_k = np.asarray(kernel.log_prob(pts[:, None], pts[None, :]), dtype=float)
    live = np.isfinite(log_p)
    fwd = np.isfinite(log_k)
    bad = (fwd != fwd.T) & live[:, None] & live[None, :]
    if np.any(bad):
        raise ValueError("kernel violates MH support condition")
    return ExactKernel(pts, _mh_matrix(log_p, log_k))


def kernel_tvd_path(kernel: ExactKernel, init: np.ndarray, p: np.ndarray, n_max: int):
    """``TVD(p, init K^n)`` for ``n = 0..n_max``."""
    out = np.empty(n_max + 1)
    mu = np.asarray(init, dtype=float).copy()
    for n in range(n_max + 1):
        out[n] = 0.5 * np.abs(mu - p).sum()
        mu = mu @ kernel.matrix
    return out


def imh_tvd_bound(beta_global: float, n):
    """``2 (1 - 1/β)^n`` for a global bound β on the normalized ratio ``p/q``."""
    return 2.0 * (1.0 - 1.0 / beta_global) ** np.asarray(n, dtype=float)
