"""A battery of exact-versus-estimated checks run on enumerable testbeds.

Each check yields a :class:`CheckResult`; ``qrs oracle-check`` prints them
and writes them as CSV. The same battery backs part of the test suite.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .core import DrawBatch, RngStream, log_sub_ratio
from .estimators import diagnose
from .oracle import (FiniteSpace, KERNEL_MAX_POINTS, enumerate_target, exact_ar,
                     exact_beta_for_ar, exact_divergences, exact_p_beta, exact_region_mass,
                     imh_exact_kernel, mh_local_exact_kernel, tvd_one_sided_identity)
from .samplers import SingleSiteKernel
from .testbeds import make_poisson_pair, make_random_categorical, make_two_point, poisson_space

CHECK_HEADER = ["check", "case", "beta", "exact", "estimate", "abs_diff", "pass"]

LIMIT_BETA = 2.0 ** 20


@dataclass
class CheckResult:
    check: str
    case: str
    beta: float
    exact: float
    estimate: float
    abs_diff: float
    passed: bool

    def row(self):
        return [self.check, self.case, self.beta, self.exact, self.estimate, self.abs_diff,
                "pass" if self.passed else "FAIL"]


@dataclass
class OracleCase:
    name: str
    P: object
    q: object
    space: object
    k: int | None = None
    v: int | None = None
    holes: bool = False


def default_cases(n_seeds: int = 20, seed: int = 0) -> list:
    """Built-in cases plus ``n_seeds`` random categorical instances.

    Random instances cycle through one- and two-position layouts, both
    weight laws, and every fourth one has proposal holes.
    """
    tp = make_two_point()
    ten = make_random_categorical(1, 10, seed)
    P, q = make_poisson_pair()
    cases = [OracleCase("twopoint", tp.target, tp.proposal, tp.space, 1, 2),
             OracleCase("ten-point", ten.target, ten.proposal, ten.space, 1, 10),
             OracleCase("poisson:11:10", P, q, poisson_space(11.0))]
    layouts = [(1, 12), (2, 5), (1, 30), (2, 7)]
    for i in range(n_seeds):
        k, v = layouts[i % len(layouts)]
        law = "heavy-tail" if i % 2 else "uniform-dirichlet"
        holes = 0.2 if i % 4 == 3 else 0.0
        s = seed + i
        c = make_random_categorical(k, v, s, law, holes=holes)
        name = f"categorical:{k}:{v}:{s}:{law}" + (":0.2" if holes else "")
        cases.append(OracleCase(name, c.target, c.proposal, c.space, k, v, holes > 0))
    return cases


def beta_ladder(case: OracleCase, n: int = 25) -> list:
    """Log-spaced β values spanning the case's importance ratios."""
    if not isinstance(case.space, FiniteSpace):
        return [float(b) for b in np.geomspace(0.5, 64.0, n)]
    pts = case.space.points
    lr = log_sub_ratio(case.P.log_score(pts), case.q.log_prob(pts))
    lr = lr[np.isfinite(lr)]
    lo, hi = math.exp(lr.min()) / 4, math.exp(lr.max()) * 4
    return [float(b) for b in np.geomspace(lo, hi, n)]


def _cmp(check, case, beta, exact, est, tol):
    d = abs(exact - est)
    return CheckResult(check, case, beta, exact, est, d, bool(d <= tol))


def check_case(case: OracleCase, betas, n_est: int = 100_000, seed: int = 0):
    out = []
    name = case.name
    p = enumerate_target(case.P, case.space)
    for b in betas:
        pb = exact_p_beta(case.P, case.q, b, case.space)
        tvd, _ = exact_divergences(p, pb)
        bound = 1.0 - exact_region_mass(case.P, case.q, b, case.space)
        out.append(CheckResult("tvd-bound", name, b, tvd, bound, max(0.0, tvd - bound),
                               tvd <= bound + 1e-12))
        out.append(_cmp("tvd-one-sided", name, b, tvd, tvd_one_sided_identity(p, pb), 1e-12))
        # AR two ways: Z_β/β against Σ q min(1, ratio/β) summed directly
        pts = pb.points
        lq = np.asarray(case.q.log_prob(pts), dtype=float)
        lr = log_sub_ratio(case.P.log_score(pts), lq)
        direct = float(np.sum(np.exp(lq) * np.minimum(1.0, np.exp(lr - math.log(b)))))
        out.append(_cmp("ar-identity", name, b, exact_ar(case.P, case.q, b, case.space),
                        direct, 1e-12))

    # limit behavior
    pb = exact_p_beta(case.P, case.q, LIMIT_BETA, case.space)
    tvd, _ = exact_divergences(p, pb)
    if case.holes:
        lq = np.asarray(case.q.log_prob(p.points), dtype=float)
        expected = 1.0 - float(p.probs[np.isfinite(lq)].sum())
        out.append(_cmp("tvd-limit-holes", name, LIMIT_BETA, expected, tvd, 1e-10))
    else:
        out.append(CheckResult("tvd-limit", name, LIMIT_BETA, 0.0, tvd, tvd, tvd < 1e-10))

    # chains
    if isinstance(case.space, FiniteSpace) and len(case.space) <= 50:
        K = imh_exact_kernel(case.P, case.q, case.space)
        res = K.stationarity_residual(p.prob_of(K.points))
        out.append(CheckResult("imh-stationary", name, math.nan, 0.0, res, res, res <= 1e-12))
    if (case.k is not None and isinstance(case.space, FiniteSpace)
            and len(case.space) <= KERNEL_MAX_POINTS):
        K = mh_local_exact_kernel(case.P, SingleSiteKernel(case.k, case.v), case.space)
        res = K.detailed_balance_residual(p.prob_of(K.points))
        out.append(CheckResult("mh-detailed-balance", name, math.nan, 0.0, res, res,
                               res <= 1e-12))

    # estimators at the β with exact AR 1/2
    b = exact_beta_for_ar(case.P, case.q, 0.5, case.space)
    batch = DrawBatch.draw(case.P, case.q, n_est, RngStream(seed, 0))
    row = diagnose(batch, b)
    pb = exact_p_beta(case.P, case.q, b, case.space)
    tvd, kl = exact_divergences(p, pb)
    exact = {"ar": exact_ar(case.P, case.q, b, case.space), "tvd": tvd, "kl": kl,
             "z": math.exp(p.log_z)}
    est = {"ar": (row.ar, row.ar_se), "tvd": (row.tvd, row.tvd_se), "kl": (row.kl, row.kl_se),
           "z": (math.exp(row.log_z), row.z_se)}
    if case.holes:
        # Z and the divergences to p are not identifiable from q draws
        exact.pop("z"), exact.pop("tvd"), exact.pop("kl")
    for key in exact:
        v, se = est[key]
        out.append(_cmp(f"estimate-{key}", name, b, exact[key], v, max(0.01, 5 * se)))
    return out


def run_battery(n_seeds: int = 20, seed: int = 0, extra_beta=None, n_est: int = 100_000):
    """All checks over :func:`default_cases`; ``extra_beta`` is added to
    every ladder."""
    results = []
    for case in default_cases(n_seeds, seed):
        betas = beta_ladder(case)
        if extra_beta is not None:
            betas = betas + [float(extra_beta)]
        results += check_case(case, betas, n_est=n_est, seed=seed)
    return results
