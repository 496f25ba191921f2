"""Concrete target/proposal families.

* two Poissons (``Poisson(11)`` target, ``Poisson(10)`` proposal),
* finite categorical tables and product ("per position") distributions over
  small integer-vector spaces,
* constraint EBMs ``P(x) = a(x) b(x)`` in pointwise and exponential-tilt form,
* the projected proposal ``q_proj(x) ∝ q(x) b(x)``,
* seeded random categorical instances for fuzzing the oracle checks.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy import optimize, special

from .core import Proposal, RngStream, ScorableDistribution
from .oracle import CountableSpace, FiniteSpace

__all__ = [
    "PoissonDist",
    "TableEbm",
    "Categorical",
    "ProductCategorical",
    "CategoricalSpace",
    "ConstraintEbm",
    "ProjectedProposal",
    "make_poisson_pair",
    "make_two_point",
    "make_constraint_ebm",
    "make_constraint_testbed",
    "ConstraintTestbed",
    "make_projected_proposal",
    "make_random_categorical",
    "position_in",
    "count_at_least",
    "fit_tilt",
    "poisson_space",
]

ORACLE_MAX_POINTS = 10_000


class PoissonDist(Proposal):
    """Poisson(λ) over the nonnegative integers.

    Draws use inversion: a cumulative table is precomputed over the bulk of
    the mass and lookups fall back to sequential search past its end.
    """

    def __init__(self, lam: float):
        lam = float(lam)
        if not lam > 0 or not math.isfinite(lam):
            raise ValueError(f"Poisson rate must be positive, got {lam}")
        self.lam = lam
        kmax = int(lam + 40 * math.sqrt(lam) + 40)
        k = np.arange(kmax + 1)
        self._cdf = np.cumsum(np.exp(self.log_prob(k)))

    def log_prob(self, x):
        x = np.asarray(x)
        with np.errstate(divide="ignore", invalid="ignore"):
            out = -self.lam + x * math.log(self.lam) - special.gammaln(x + 1.0)
        out = np.where(x < 0, -np.inf, out)
        return out[()] if out.ndim == 0 else out

    def draw(self, rng: RngStream, size=None):
        u = rng.uniform(1 if size is None else size)
        k = np.searchsorted(self._cdf, u, side="left")
        tail = np.flatnonzero(k >= self._cdf.size)
        for i in tail:
            k[i] = self._sequential_tail(u[i])
        k = k.astype(np.int64)
        return int(k[0]) if size is None else k

    def _sequential_tail(self, u):
        k = self._cdf.size - 1
        cum = self._cdf[-1]
        term = math.exp(float(self.log_prob(k)))
        while cum < u:
            k += 1
            term *= self.lam / k
            if cum + term == cum:
                break
            cum += term
        return k

    def __repr__(self):
        return f"PoissonDist({self.lam:g})"


def poisson_space(lam: float) -> CountableSpace:
    """Nonnegative integers with the exact Poisson(λ) upper-tail bound."""
    lam = float(lam)
    return CountableSpace(tail_mass=lambda k: float(special.pdtrc(k, lam)),
                          total_mass=1.0)


def make_poisson_pair(lambda_p: float = 11.0, lambda_q: float = 10.0):
    """Target ``Poisson(lambda_p)`` (scores are the pmf, so Z = 1) and
    proposal ``Poisson(lambda_q)``.

    The log importance ratio is ``(λq - λp) + x log(λp/λq)``; for
    ``(11, 10)`` that is ``-1 + x log 1.1``, unbounded in ``x``.
    """
    return PoissonDist(lambda_p), PoissonDist(lambda_q)


class TableEbm(ScorableDistribution):
    """Unnormalized scores over codes ``0..n-1`` given by a weight table."""

    def __init__(self, weights):
        w = np.asarray(weights, dtype=float)
        if np.any(w < 0) or not np.all(np.isfinite(w)):
            raise ValueError("weights must be finite and nonnegative")
        self.weights = w
        with np.errstate(divide="ignore"):
            self._log_w = np.log(w)

    @property
    def size(self):
        return self.weights.size

    def log_score(self, x):
        x = np.asarray(x)
        out = self._log_w[np.clip(x, 0, self.size - 1)]
        out = np.where((x < 0) | (x >= self.size), -np.inf, out)
        return out[()] if out.ndim == 0 else out


class Categorical(Proposal):
    """Normalized categorical distribution over codes ``0..n-1``."""

    def __init__(self, weights):
        w = np.asarray(weights, dtype=float)
        if np.any(w < 0) or not np.all(np.isfinite(w)):
            raise ValueError("weights must be finite and nonnegative")
        total = w.sum()
        if not total > 0:
            raise ValueError("categorical weights sum to zero")
        self.probs = w / total
        with np.errstate(divide="ignore"):
            self._log_p = np.log(self.probs)
        self._cdf = np.cumsum(self.probs)
        self._cdf[-1] = 1.0
        self._last = int(np.flatnonzero(self.probs > 0)[-1])

    @property
    def size(self):
        return self.probs.size

    def log_prob(self, x):
        x = np.asarray(x)
        out = self._log_p[np.clip(x, 0, self.size - 1)]
        out = np.where((x < 0) | (x >= self.size), -np.inf, out)
        return out[()] if out.ndim == 0 else out

    def draw(self, rng: RngStream, size=None):
        u = rng.uniform(1 if size is None else size)
        k = np.minimum(np.searchsorted(self._cdf, u, side="left"), self._last)
        k = k.astype(np.int64)
        return int(k[0]) if size is None else k


class ProductCategorical(Proposal):
    """Independent categorical marginals over ``k`` positions of ``v`` symbols.

    Points are mixed-radix codes with position 0 most significant. Useful as a
    stand-in for an autoregressive model over short sequences: it scores and
    samples exactly and scales to spaces too large to tabulate.
    """

    def __init__(self, marginals):
        m = np.asarray(marginals, dtype=float)
        if m.ndim != 2:
            raise ValueError("marginals must be a (k, v) array")
        if np.any(m < 0) or np.any(m.sum(axis=1) <= 0):
            raise ValueError("each marginal needs nonnegative weights with positive sum")
        self.marginals = m / m.sum(axis=1, keepdims=True)
        self.k, self.v = m.shape
        with np.errstate(divide="ignore"):
            self._log_m = np.log(self.marginals)
        self._cdfs = np.cumsum(self.marginals, axis=1)
        self._cdfs[:, -1] = 1.0
        self._radix = self.v ** np.arange(self.k - 1, -1, -1, dtype=np.int64)

    @property
    def size(self):
        return self.v ** self.k

    def decode(self, x):
        x = np.asarray(x, dtype=np.int64)
        return (x[..., None] // self._radix) % self.v

    def encode(self, digits):
        return np.asarray(digits, dtype=np.int64) @ self._radix

    def log_prob(self, x):
        x = np.asarray(x, dtype=np.int64)
        valid = (x >= 0) & (x < self.size)
        d = self.decode(np.where(valid, x, 0))
        out = self._log_m[np.arange(self.k), d].sum(axis=-1)
        out = np.where(valid, out, -np.inf)
        return out[()] if out.ndim == 0 else out

    def draw(self, rng: RngStream, size=None):
        n = 1 if size is None else int(size)
        u = rng.uniform((n, self.k))
        digits = np.empty((n, self.k), dtype=np.int64)
        for j in range(self.k):
            digits[:, j] = np.searchsorted(self._cdfs[j], u[:, j], side="left")
        digits = np.minimum(digits, self.v - 1)
        codes = digits @ self._radix
        return int(codes[0]) if size is None else codes


@dataclass
class CategoricalSpace:
    """A finite space of ``k`` positions × ``v`` symbols with a target and a
    proposal table. Codes are mixed-radix with position 0 most significant."""

    k: int
    v: int
    target: ScorableDistribution
    proposal: Proposal
    seed: int | None = None
    law: str | None = None
    meta: dict = field(default_factory=dict)

    @property
    def size(self) -> int:
        return self.v ** self.k

    @property
    def space(self) -> FiniteSpace:
        return FiniteSpace(np.arange(self.size, dtype=np.int64))

    def decode(self, x):
        radix = self.v ** np.arange(self.k - 1, -1, -1, dtype=np.int64)
        return (np.asarray(x, dtype=np.int64)[..., None] // radix) % self.v

    def encode(self, digits):
        radix = self.v ** np.arange(self.k - 1, -1, -1, dtype=np.int64)
        return np.asarray(digits, dtype=np.int64) @ radix


def make_two_point() -> CategoricalSpace:
    """The two-point running example: ``q = (0.5, 0.5)``, ``P = (0.2, 0.6)``.

    Point ``a`` is code 0 and ``b`` is code 1; ``p = (0.25, 0.75)``.
    """
    return CategoricalSpace(1, 2, TableEbm([0.2, 0.6]), Categorical([0.5, 0.5]),
                            law="two-point")


WEIGHT_LAWS = ("uniform-dirichlet", "heavy-tail")


def make_random_categorical(k: int, v: int, seed: int, law: str = "uniform-dirichlet",
                            holes: float = 0.0, oracle: bool = True) -> CategoricalSpace:
    """Seeded random target/proposal tables over ``v**k`` points.

    ``uniform-dirichlet`` draws both tables from a flat Dirichlet.
    ``heavy-tail`` draws independent log-normal weights (σ = 2.5) so that
    importance ratios spread over several orders of magnitude.
    ``holes`` zeroes that fraction of proposal weights (at least one point
    keeps positive proposal mass and at least one hole is made when
    ``holes > 0``), producing a proposal whose support misses part of the
    target's.
    """
    if k < 1 or v < 1:
        raise ValueError("k and v must be positive")
    size = v ** k
    if oracle and size > ORACLE_MAX_POINTS:
        raise ValueError(f"space of {size} points is too large for the oracle "
                         f"(max {ORACLE_MAX_POINTS})")
    if law not in WEIGHT_LAWS:
        raise ValueError(f"unknown weight law {law!r}; expected one of {WEIGHT_LAWS}")
    rng = np.random.default_rng(np.random.SeedSequence(int(seed), spawn_key=(k, v)))
    if law == "uniform-dirichlet":
        target_w = rng.dirichlet(np.ones(size))
        proposal_w = rng.dirichlet(np.ones(size))
    else:
        target_w = np.exp(rng.normal(0.0, 2.5, size))
        proposal_w = np.exp(rng.normal(0.0, 2.5, size))
        target_w /= target_w.sum()
        proposal_w /= proposal_w.sum()
    if holes > 0:
        if size < 2:
            raise ValueError("cannot make holes in a one-point space")
        n_holes = min(size - 1, max(1, int(round(holes * size))))
        idx = rng.choice(size, n_holes, replace=False)
        proposal_w[idx] = 0.0
    return CategoricalSpace(k, v, TableEbm(target_w), Categorical(proposal_w),
                            seed=seed, law=law, meta={"holes": holes})


# features over integer-vector codes; each returns a vectorized callable

def position_in(space, position: int, symbols: Sequence[int]) -> Callable:
    """Binary feature: symbol at ``position`` is one of ``symbols``."""
    symbols = np.asarray(list(symbols), dtype=np.int64)

    def phi(x):
        d = space.decode(x)
        return np.isin(d[..., position], symbols).astype(float)

    phi.__name__ = f"pos{position}_in_{'_'.join(map(str, symbols.tolist()))}"
    return phi


def count_at_least(space, symbol: int, n: int) -> Callable:
    """Binary feature: ``symbol`` occurs at least ``n`` times."""

    def phi(x):
        d = space.decode(x)
        return ((d == symbol).sum(axis=-1) >= n).astype(float)

    phi.__name__ = f"count_{symbol}_ge_{n}"
    return phi


class ConstraintEbm(ScorableDistribution):
    """``P(x) = a(x) b(x)`` with ``b = Π φ_i`` (pointwise) or
    ``b = exp(λ·φ)`` (exponential)."""

    def __init__(self, base: ScorableDistribution, features: Sequence[Callable],
                 lambdas=None, mode: str = "pointwise", moment_targets=None):
        if mode not in ("pointwise", "exponential"):
            raise ValueError(f"unknown constraint mode {mode!r}")
        self.base = base
        self.features = list(features)
        self.mode = mode
        if mode == "exponential":
            if lambdas is None or len(lambdas) != len(self.features):
                raise ValueError("exponential mode needs one lambda per feature")
            self.lambdas = np.asarray(lambdas, dtype=float)
        else:
            if lambdas is not None:
                raise ValueError("pointwise mode takes no lambdas")
            self.lambdas = None
        self.moment_targets = moment_targets

    def log_b(self, x):
        phis = np.stack([np.asarray(f(x), dtype=float) for f in self.features], axis=-1)
        if self.mode == "pointwise":
            if np.any((phis != 0) & (phis != 1)):
                raise ValueError("pointwise features must be binary")
            with np.errstate(divide="ignore"):
                return np.log(phis).sum(axis=-1)
        return phis @ self.lambdas

    def log_score(self, x):
        out = np.asarray(self.base.log_score(x)) + self.log_b(x)
        return out[()] if out.ndim == 0 else out


def make_constraint_ebm(base, features, lambdas_or_pointwise="pointwise",
                        moment_targets=None) -> ConstraintEbm:
    """Build ``P = a·b``. Pass the string ``"pointwise"`` or a lambda vector."""
    if isinstance(lambdas_or_pointwise, str):
        if lambdas_or_pointwise != "pointwise":
            raise ValueError(f"unknown constraint mode {lambdas_or_pointwise!r}")
        return ConstraintEbm(base, features, mode="pointwise",
                             moment_targets=moment_targets)
    lambdas = list(np.atleast_1d(lambdas_or_pointwise))
    if len(lambdas) != len(features):
        raise ValueError(f"{len(features)} features but {len(lambdas)} lambdas")
    return ConstraintEbm(base, features, lambdas, mode="exponential",
                         moment_targets=moment_targets)


class ProjectedProposal(Proposal):
    """``q`` restricted to ``{x: b(x) = 1}`` and renormalized.

    The normalizer ``Z_qproj = Σ q(x) b(x)`` is exact when a finite ``space``
    is given, otherwise estimated from ``n_estimate`` draws of ``q``.
    """

    def __init__(self, base_proposal: Proposal, filter_feature: Callable, space=None,
                 rng: RngStream | None = None, n_estimate: int = 100_000,
                 max_draws: int = 10_000_000):
        self.base = base_proposal
        self.filter = filter_feature
        self.max_draws = max_draws
        if space is not None:
            pts = space.points
            b = np.asarray(filter_feature(pts), dtype=float)
            self._check_binary(b)
            z = float(np.exp(base_proposal.log_prob(pts))[b == 1].sum())
            self.z_exact = True
        else:
            if rng is None:
                raise ValueError("an RngStream is needed to estimate Z_qproj")
            xs = base_proposal.draw(rng, size=n_estimate)
            b = np.asarray(filter_feature(xs), dtype=float)
            self._check_binary(b)
            z = float(b.mean())
            self.z_exact = False
        if z <= 0:
            raise ValueError("filter never satisfied")
        self.z = z
        self.log_z = math.log(z)

    @staticmethod
    def _check_binary(b):
        if np.any((b != 0) & (b != 1)):
            raise ValueError("projection filter must be binary")

    def log_prob(self, x):
        b = np.asarray(self.filter(x), dtype=float)
        out = np.where(b == 1, np.asarray(self.base.log_prob(x)) - self.log_z, -np.inf)
        return out[()] if out.ndim == 0 else out

    def draw(self, rng: RngStream, size=None):
        n = 1 if size is None else int(size)
        out = np.empty(0, dtype=np.int64)
        used = 0
        chunk = max(64, n)
        while out.size < n:
            if used >= self.max_draws:
                raise RuntimeError("filter never satisfied")
            # chunk sized from the acceptance estimate
            want = int(min(self.max_draws - used,
                           max(chunk, 1.2 * (n - out.size) / max(self.z, 1e-12))))
            xs = np.asarray(self.base.draw(rng, size=want), dtype=np.int64)
            used += want
            keep = np.asarray(self.filter(xs)) == 1
            out = np.concatenate([out, xs[keep]])
        out = out[:n]
        return int(out[0]) if size is None else out


def make_projected_proposal(q: Proposal, filter_feature: Callable, space=None,
                            rng: RngStream | None = None, **kwargs) -> ProjectedProposal:
    return ProjectedProposal(q, filter_feature, space=space, rng=rng, **kwargs)


def fit_tilt(base: ScorableDistribution, features: Sequence[Callable], targets,
             space, tol: float = 1e-12, max_iter: int = 200) -> np.ndarray:
    """Solve for λ such that ``E_p φ = targets`` under ``p ∝ a·exp(λ·φ)``.

    Exact on an enumerated finite space. One feature uses a bracketing root
    find; two or more use damped Newton steps on the convex log-partition.
    Test utility only.
    """
    pts = space.points
    log_a = np.asarray(base.log_score(pts), dtype=float)
    phi = np.stack([np.asarray(f(pts), dtype=float) for f in features], axis=-1)
    mu = np.asarray(targets, dtype=float)

    def moments(lam):
        s = log_a + phi @ lam
        s = s - s[np.isfinite(s)].max()
        w = np.exp(s)
        w /= w.sum()
        m = w @ phi
        return w, m

    if phi.shape[1] == 1:
        def g(l):
            return moments(np.array([l]))[1][0] - mu[0]
        lo, hi = -1.0, 1.0
        while g(lo) > 0:
            lo *= 2
            if lo < -1e4:
                raise ValueError("moment target not reachable")
        while g(hi) < 0:
            hi *= 2
            if hi > 1e4:
                raise ValueError("moment target not reachable")
        return np.array([optimize.brentq(g, lo, hi, xtol=tol)])

    lam = np.zeros(phi.shape[1])
    for _ in range(max_iter):
        w, m = moments(lam)
        grad = m - mu
        if np.max(np.abs(grad)) < tol:
            return lam
        centered = phi - m
        hess = (centered * w[:, None]).T @ centered
        step = np.linalg.solve(hess + 1e-12 * np.eye(len(lam)), grad)
        t = 1.0
        # log-partition minus λ·μ is convex; backtrack on it
        def obj(l):
            s = log_a + phi @ l
            mx = s[np.isfinite(s)].max()
            return mx + np.log(np.exp(s - mx).sum()) - l @ mu
        f0 = obj(lam)
        # near the optimum the decrease is below the objective's rounding, so a
        # full step that does not visibly worsen it is taken as is
        if obj(lam - step) > f0 + 1e-13 * (1.0 + abs(f0)):
            while obj(lam - t * step) > f0 - 1e-4 * t * grad @ step and t > 1e-8:
                t *= 0.5
        lam = lam - t * step
    raise RuntimeError("tilt fit did not converge")


@dataclass
class ConstraintTestbed:
    """A constraint EBM over ``v**k`` integer vectors with its proposal.

    ``base`` is the normalized product model ``a``; ``proposal`` is either
    ``a`` itself or ``a`` projected onto the pointwise constraints.
    """

    k: int
    v: int
    base: ProductCategorical
    target: ScorableDistribution
    proposal: Proposal
    features: list
    seed: int = 0

    @property
    def size(self) -> int:
        return self.v ** self.k

    @property
    def space(self) -> FiniteSpace:
        if self.size > ORACLE_MAX_POINTS:
            raise ValueError(f"space of {self.size} points is too large for the oracle")
        return FiniteSpace(np.arange(self.size, dtype=np.int64))

    def decode(self, x):
        return self.base.decode(x)

    def encode(self, digits):
        return self.base.encode(digits)


def make_constraint_testbed(k: int = 6, v: int = 8, seed: int = 0,
                            pointwise=((0, (0, 1)),), exponential=((3, 2, 1.5),),
                            proposal: str = "base", concentration: float = 3.0):
    """Random product base ``a`` times pointwise and exponential constraints.

    ``pointwise`` lists ``(position, symbols)`` pairs, each a binary
    :func:`position_in` factor. ``exponential`` lists ``(symbol, n, λ)``
    triples, each contributing ``exp(λ·[count(symbol) >= n])``. The marginals
    of ``a`` are Dirichlet(``concentration``) draws, seeded.
    """
    if proposal not in ("base", "projected"):
        raise ValueError(f"unknown proposal kind {proposal!r}")
    rng = np.random.default_rng(np.random.SeedSequence(int(seed), spawn_key=(k, v, 7)))
    marg = rng.dirichlet(np.full(v, concentration), size=k)
    # keep every symbol reachable so local kernels stay irreducible
    marg = 0.98 * marg + 0.02 / v
    base = ProductCategorical(marg)
    hard = [position_in(base, pos, syms) for pos, syms in pointwise]
    soft = [count_at_least(base, sym, n) for sym, n, _ in exponential]
    target = base
    if hard:
        target = ConstraintEbm(target, hard, mode="pointwise")
    if soft:
        target = ConstraintEbm(target, soft, [lam for _, _, lam in exponential],
                               mode="exponential")
    q = base
    if proposal == "projected" and hard:
        def both(x, _hard=hard):
            return np.prod([np.asarray(f(x)) for f in _hard], axis=0)
        space = FiniteSpace(np.arange(v ** k, dtype=np.int64)) if v ** k <= ORACLE_MAX_POINTS else None
        q = ProjectedProposal(base, both, space=space,
                              rng=None if space is not None else RngStream(seed, 1))
    return ConstraintTestbed(k, v, base, target, q, hard + soft, seed)
