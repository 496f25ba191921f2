"""Samplers: quasi rejection sampling (QRS), certified rejection sampling,
QRS with incremental pruning, independent Metropolis-Hastings (thinned and
reset variants) and Metropolis-Hastings with a local kernel.

Proposal draws and uniforms are generated in fixed-size vectorized chunks;
the accept/reject logic is applied in draw order, so a run is a deterministic
function of its :class:`~qrs.core.RngStream`.
"""

from __future__ import annotations

import heapq
import logging
import math
from dataclasses import dataclass, field

import numpy as np

from .core import Proposal, RngStream, ScorableDistribution, log_sub_ratio

log = logging.getLogger(__name__)

__all__ = [
    "QrsConfig",
    "AcceptedSample",
    "ChainSample",
    "QrsResult",
    "ChainResult",
    "IncrementalResult",
    "BudgetExhausted",
    "NotAGlobalBound",
    "qrs_acceptance_prob",
    "qrs_collect",
    "rs_certified",
    "qrs_incremental",
    "percentile_cap",
    "imh_chain",
    "imh_reset",
    "mh_local_chain",
    "SingleSiteKernel",
    "UniformKernel",
    "DiracKernel",
    "GlobalKernel",
    "RandomWalkKernel",
]

CHUNK = 65536


class BudgetExhausted(RuntimeError):
    """Raised when a draw budget runs out; ``partial`` holds what was collected."""

    def __init__(self, partial):
        super().__init__("acceptance budget exhausted")
        self.partial = partial


class NotAGlobalBound(ValueError):
    def __init__(self, msg="beta is not a global bound"):
        super().__init__(msg)


@dataclass(frozen=True)
class QrsConfig:
    beta: float

    def __post_init__(self):
        if not (0 < self.beta < math.inf):
            raise ValueError("beta must be positive")

    @property
    def log_beta(self):
        return math.log(self.beta)


@dataclass(frozen=True)
class AcceptedSample:
    point: int
    log_ratio: float
    uniform: float
    draw_index: int


@dataclass(frozen=True)
class ChainSample:
    point: int
    step_index: int
    was_move: bool


@dataclass
class QrsResult:
    """Accepted samples stored column-wise."""

    points: np.ndarray
    log_ratio: np.ndarray
    uniform: np.ndarray
    draw_index: np.ndarray
    n_draws: int
    beta: float
    certified: bool = False

    @property
    def empirical_ar(self) -> float:
        return self.points.size / self.n_draws if self.n_draws else 0.0

    def __len__(self):
        return self.points.size

    def __getitem__(self, i) -> AcceptedSample:
        return AcceptedSample(int(self.points[i]), float(self.log_ratio[i]),
                              float(self.uniform[i]), int(self.draw_index[i]))

    def __iter__(self):
        for i in range(len(self)):
            yield self[i]

    def metadata(self) -> dict:
        return {"beta": self.beta, "n_draws": self.n_draws, "n_accepted": len(self),
                "realized_ar": self.empirical_ar, "certified": self.certified}


@dataclass
class ChainResult:
    """Chain outputs plus cost accounting.

    ``acceptance_rate`` is the cost proxy (outputs per proposal draw);
    ``move_rate`` is the fraction of Metropolis steps that moved.
    """

    points: np.ndarray
    step_index: np.ndarray
    was_move: np.ndarray
    n_draws: int
    n_moves: int
    n_steps: int

    @property
    def acceptance_rate(self) -> float:
        return self.points.size / self.n_draws if self.n_draws else 0.0

    @property
    def move_rate(self) -> float:
        return self.n_moves / self.n_steps if self.n_steps else 0.0

    def __len__(self):
        return self.points.size

    def __getitem__(self, i) -> ChainSample:
        return ChainSample(int(self.points[i]), int(self.step_index[i]),
                           bool(self.was_move[i]))

    def __iter__(self):
        for i in range(len(self)):
            yield self[i]


def qrs_acceptance_prob(record, beta: float) -> float:
    """``min(1, P(x) / (β q(x)))`` for a draw record."""
    if not beta > 0:
        raise ValueError("beta must be positive")
    lr = record.log_ratio
    if lr == math.inf:
        return 1.0
    if lr == -math.inf:
        return 0.0
    return math.exp(min(0.0, lr - math.log(beta)))


def _log_ratios(P, q, xs):
    return log_sub_ratio(P.log_score(xs), q.log_prob(xs))


def qrs_collect(P: ScorableDistribution, q: Proposal, beta: float, n: int,
                rng: RngStream, max_draws: int | None = None,
                chunk: int = CHUNK) -> QrsResult:
    """Run QRS until ``n`` samples are accepted.

    Draw ``x ~ q`` and ``u ~ U(0, 1]``; accept when ``u <= min(1, P(x)/βq(x))``.
    Accepted points are i.i.d. from ``p_β ∝ min(P, βq)``.
    """
    cfg = QrsConfig(beta)
    if n < 1:
        raise ValueError("n must be >= 1")
    pts, lrs, us, idx = [], [], [], []
    got = 0
    drawn = 0
    while got < n:
        m = chunk if max_draws is None else min(chunk, max_draws - drawn)
        if m <= 0:
            partial = _qrs_result(pts, lrs, us, idx, drawn, beta)
            raise BudgetExhausted(partial)
        xs = np.asarray(q.draw(rng, size=m))
        u = rng.uniform(m)
        lr = _log_ratios(P, q, xs)
        r = np.exp(np.minimum(0.0, lr - cfg.log_beta))
        acc = np.flatnonzero(u <= r)
        if acc.size > n - got:
            acc = acc[: n - got]
            used = int(acc[-1]) + 1
        else:
            used = m
        pts.append(xs[acc])
        lrs.append(lr[acc])
        us.append(u[acc])
        idx.append(drawn + acc + 1)
        drawn += used
        got += acc.size
    return _qrs_result(pts, lrs, us, idx, drawn, beta)


def _qrs_result(pts, lrs, us, idx, drawn, beta, certified=False):
    cat = (lambda a, dt: np.concatenate(a) if a else np.empty(0, dtype=dt))
    return QrsResult(cat(pts, np.int64), cat(lrs, float), cat(us, float),
                     cat(idx, np.int64), drawn, beta, certified)


def rs_certified(P, q, beta_bound: float, n: int, rng: RngStream, space=None,
                 max_draws: int | None = None) -> QrsResult:
    """Exact rejection sampling with a bound verified against the oracle.

    Raises :class:`NotAGlobalBound` when some ``P(x)/q(x)`` exceeds the bound.
    Verification needs a finite ``space`` or a closed-form pair (two
    Poissons); otherwise the bound is taken on trust and the result is not
    marked certified.
    """
    from .oracle import sup_log_ratio
    certified = False
    try:
        sup = sup_log_ratio(P, q, space)
    except ValueError:
        sup = None
    if sup is not None:
        if sup > math.log(beta_bound) + 1e-12:
            raise NotAGlobalBound()
        certified = True
    res = qrs_collect(P, q, beta_bound, n, rng, max_draws=max_draws)
    res.certified = certified
    return res


CAP_Z = 3.0


def cap_rank(m: int, ar_min: float, z: float = 0.0) -> int:
    """1-based rank of the β cap among ``m`` sorted α values, 0 if none yet.

    The cap is the largest α with ``ar_min·m + z·sqrt(ar_min(1-ar_min)m)``
    values above it: with ``z = 0`` this is the nearest-rank
    ``(1 - ar_min)``-quantile; ``z > 0`` lowers it by ``z`` binomial standard
    deviations, which matters while ``m`` is small. No rank exists before
    ``m >= ceil(1/ar_min)``, nor ever for ``ar_min = 1``.
    """
    if m < 1 or m < math.ceil(1.0 / ar_min - 1e-12):
        return 0
    above = ar_min * m + z * math.sqrt(ar_min * (1.0 - ar_min) * m)
    return max(0, m - math.ceil(above - 1e-12))


def percentile_cap(sorted_alphas, ar_min: float, z: float = 0.0) -> float:
    """Largest observed α with at least ``ar_min`` of the history above it
    (see :func:`cap_rank`); ``-inf`` when the history cannot support a cap."""
    j = cap_rank(len(sorted_alphas), ar_min, z)
    return sorted_alphas[j - 1] if j else -math.inf


class RunningCap:
    """Streaming :func:`percentile_cap`: two heaps split the history so the
    lower one always holds the ``j`` smallest values; the cap is its max."""

    def __init__(self, ar_min: float, z: float = 0.0):
        self.ar_min = ar_min
        self.z = z
        self.lower = []   # max-heap via negation
        self.upper = []   # min-heap
        self.m = 0

    def push(self, a: float):
        self.m += 1
        if self.lower and a < -self.lower[0]:
            heapq.heappush(self.lower, -a)
        else:
            heapq.heappush(self.upper, a)
        j = cap_rank(self.m, self.ar_min, self.z)
        while len(self.lower) < j:
            heapq.heappush(self.lower, -heapq.heappop(self.upper))
        while len(self.lower) > j:
            heapq.heappush(self.upper, -heapq.heappop(self.lower))

    def cap(self) -> float:
        return -self.lower[0] if self.lower else -math.inf


@dataclass
class IncrementalResult:
    points: np.ndarray
    draw_index: np.ndarray
    log_alpha: np.ndarray
    log_beta: float
    n_draws: int
    beta_history: list = field(default_factory=list)
    # replay data: every draw's log α, in draw order
    all_log_alpha: np.ndarray | None = None

    @property
    def beta(self):
        return math.exp(self.log_beta)

    @property
    def realized_ar(self):
        return self.points.size / self.n_draws


def qrs_incremental(P, q, n: int, ar_min: float, rng: RngStream,
                    chunk: int = 4096, max_draws: int | None = None,
                    cap_z: float = CAP_Z) -> IncrementalResult:
    """QRS that raises β online under a minimum acceptance-rate target.

    Each draw gets ``β_x = P(x)/q(x)`` and ``α_x = β_x/u_x``. β tracks the
    largest ``min(β_x, β_max)`` seen, where ``β_max`` is
    :func:`percentile_cap` of all earlier α values with margin ``cap_z``.
    A draw is kept while ``α >= β`` (the single-pass QRS test
    ``u <= β_x/β`` rewritten; the boundary matters because β is often set to
    an observed α), zero-score draws never. Kept draws are pruned whenever β
    rises. The run stops once ``n`` draws are kept. Everything is computed
    with log α and log β.

    β stays at zero until the history can support a cap. Because β is a
    running maximum it never undoes an early overshoot, so the cap is taken
    ``cap_z`` binomial standard deviations below the plain quantile; with
    ``cap_z = 0`` early noisy caps routinely push the realized acceptance
    rate well under ``ar_min``.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    if not 0 < ar_min <= 1:
        raise ValueError("ar_min must be in (0, 1]")
    log_beta = -math.inf
    history = RunningCap(ar_min, cap_z)   # log α of all draws so far
    kept = []             # min-heap of (log α, draw index, point)
    all_alpha = []
    beta_hist = []
    drawn = 0
    while len(kept) < n:
        if max_draws is not None and drawn >= max_draws:
            raise BudgetExhausted(None)
        xs = np.asarray(q.draw(rng, size=chunk))
        lbx = _log_ratios(P, q, xs).tolist()
        lu = np.log(rng.uniform(chunk)).tolist()
        xs = xs.tolist()
        for x, lb, l_u in zip(xs, lbx, lu):
            drawn += 1
            cap = history.cap()
            cand = min(lb, cap)
            if cand > log_beta:
                log_beta = cand
                beta_hist.append((drawn, log_beta))
                while kept and kept[0][0] < log_beta:
                    heapq.heappop(kept)
            la = lb - l_u
            if la >= log_beta and la > -math.inf:
                heapq.heappush(kept, (la, drawn, x))
            history.push(la)
            all_alpha.append(la)
            if len(kept) >= n:
                break
    kept.sort(key=lambda t: t[1])
    return IncrementalResult(
        points=np.array([t[2] for t in kept], dtype=np.int64),
        draw_index=np.array([t[1] for t in kept], dtype=np.int64),
        log_alpha=np.array([t[0] for t in kept]),
        log_beta=log_beta, n_draws=drawn, beta_history=beta_hist,
        all_log_alpha=np.array(all_alpha),
    )


def _chunks(q, rng, chunk):
    """Endless stream of proposal-draw chunks paired with uniforms."""
    while True:
        xs = np.asarray(q.draw(rng, size=chunk))
        u = rng.uniform(chunk)
        yield xs, u


def imh_chain(P, q, n_outputs: int, burn_in: int = 1000, thinning: int = 1,
              rng: RngStream | None = None, chunk: int = 8192) -> ChainResult:
    """Independent Metropolis-Hastings with burn-in and thinning.

    Moves from ``x`` to ``x' ~ q`` with probability
    ``min(1, w(x')/w(x))``, ``w = P/q``. The first ``burn_in`` steps are
    discarded, then every ``thinning``-th state is output.
    """
    if thinning < 1:
        raise ValueError("thinning must be >= 1")
    if n_outputs < 1:
        raise ValueError("n_outputs must be >= 1")
    rng = rng or RngStream()
    x = q.draw(rng)
    lw = float(_log_ratios(P, q, np.array([x]))[0])
    draws = 1
    total_steps = burn_in + n_outputs * thinning
    out_pts = np.empty(n_outputs, dtype=np.int64)
    out_step = np.empty(n_outputs, dtype=np.int64)
    out_move = np.empty(n_outputs, dtype=bool)
    moves = 0
    step = 0
    k = 0
    for xs, u in _chunks(q, rng, chunk):
        lws = _log_ratios(P, q, xs).tolist()
        lu = np.log(u).tolist()
        xs = xs.tolist()
        for xp, lwp, l_u in zip(xs, lws, lu):
            step += 1
            draws += 1
            moved = _accept(lwp, lw, l_u)
            if moved:
                x, lw = xp, lwp
                moves += 1
            if step > burn_in and (step - burn_in) % thinning == 0:
                out_pts[k] = x
                out_step[k] = step
                out_move[k] = moved
                k += 1
            if step >= total_steps:
                return ChainResult(out_pts, out_step, out_move, draws, moves, step)


def _accept(lw_new, lw_cur, log_u):
    """MH test ``u <= min(1, exp(lw_new - lw_cur))`` with zero/inf handling."""
    if lw_cur == -math.inf:
        return True
    if lw_new == -math.inf:
        return False
    if lw_new == math.inf:
        return True
    if lw_cur == math.inf:
        return False
    d = lw_new - lw_cur
    return d >= 0 or log_u <= d


def imh_reset(P, q, steps_per_sample: int, n: int, rng: RngStream) -> ChainResult:
    """IMH restarted from a fresh ``q`` draw for every output.

    Each output costs ``steps_per_sample`` proposal draws: the seed draw plus
    ``steps_per_sample - 1`` IMH steps; the final state is emitted, so outputs
    are i.i.d. All ``n`` chains advance together, vectorized.
    """
    if steps_per_sample < 1:
        raise ValueError("steps_per_sample must be >= 1")
    if n < 1:
        raise ValueError("n must be >= 1")
    x = np.asarray(q.draw(rng, size=n))
    lw = _log_ratios(P, q, x)
    moved_last = np.zeros(n, dtype=bool)
    moves = 0
    for _ in range(steps_per_sample - 1):
        xp = np.asarray(q.draw(rng, size=n))
        u = rng.uniform(n)
        lwp = _log_ratios(P, q, xp)
        with np.errstate(invalid="ignore"):
            d = lwp - lw
        d = np.where(np.isneginf(lw), 0.0, d)
        d = np.where(np.isnan(d), -np.inf, d)
        acc = np.log(u) <= np.minimum(0.0, d)
        x = np.where(acc, xp, x)
        lw = np.where(acc, lwp, lw)
        moved_last = acc
        moves += int(acc.sum())
    steps = n * (steps_per_sample - 1)
    return ChainResult(x.astype(np.int64), np.full(n, steps_per_sample, dtype=np.int64),
                       moved_last, n * steps_per_sample, moves, steps)


# local kernels; log_prob broadcasts over arrays of points


class SingleSiteKernel:
    """Pick one of ``k`` positions uniformly and resample its symbol uniformly
    from ``v`` values (possibly the same one). Symmetric."""

    symmetric = True

    def __init__(self, k: int, v: int):
        self.k, self.v = k, v
        self._radix = v ** np.arange(k - 1, -1, -1, dtype=np.int64)
        self._radix_list = [int(r) for r in self._radix]

    @property
    def n_points(self):
        return self.v ** self.k

    def draw_noise(self, rng: RngStream, n: int):
        """Pre-drawn (position, symbol) pairs for :meth:`apply`."""
        pos = rng.integers(0, self.k, size=n)
        sym = rng.integers(0, self.v, size=n)
        return list(zip(pos.tolist(), sym.tolist()))

    def apply(self, x, noise):
        pos, sym = noise
        r = self._radix_list[pos]
        return x + (sym - (x // r) % self.v) * r

    def propose(self, x, rng: RngStream):
        pos = int(rng.integers(0, self.k))
        sym = int(rng.integers(0, self.v))
        r = int(self._radix[pos])
        cur = (x // r) % self.v
        return int(x + (sym - cur) * r)

    def log_prob(self, frm, to):
        frm = np.asarray(frm, dtype=np.int64)
        to = np.asarray(to, dtype=np.int64)
        df = (frm[..., None] // self._radix) % self.v
        dt = (to[..., None] // self._radix) % self.v
        diff = (df != dt).sum(axis=-1)
        same = math.log(1.0 / self.v)
        one = math.log(1.0 / (self.k * self.v))
        out = np.where(diff == 0, same, np.where(diff == 1, one, -np.inf))
        return out[()] if out.ndim == 0 else out


class UniformKernel:
    """Uniform proposal over a fixed finite point set, ignoring the current point."""

    def __init__(self, points):
        self.points = np.asarray(points, dtype=np.int64)
        self._lp = -math.log(self.points.size)

    def propose(self, x, rng):
        return int(self.points[rng.integers(0, self.points.size)])

    def log_prob(self, frm, to):
        to = np.asarray(to)
        inside = np.isin(to, self.points)
        out = np.broadcast_to(np.where(inside, self._lp, -np.inf),
                              np.broadcast_shapes(np.shape(frm), np.shape(to)))
        out = np.array(out, dtype=float)
        return out[()] if out.ndim == 0 else out


class DiracKernel:
    """Always proposes the current point."""

    def propose(self, x, rng):
        return x

    def log_prob(self, frm, to):
        out = np.where(np.asarray(frm) == np.asarray(to), 0.0, -np.inf)
        return out[()] if out.ndim == 0 else out


class RandomWalkKernel:
    """Step ``±1`` with equal probability on the integers. Symmetric; moves
    off the target's support are proposed and then rejected."""

    symmetric = True

    def draw_noise(self, rng, n):
        return (rng.uniform(n) <= 0.5).tolist()

    def apply(self, x, up):
        return x + 1 if up else x - 1

    def propose(self, x, rng):
        return int(x) + (1 if rng.uniform() <= 0.5 else -1)

    def log_prob(self, frm, to):
        d = np.abs(np.asarray(to, dtype=np.int64) - np.asarray(frm, dtype=np.int64))
        out = np.where(d == 1, math.log(0.5), -np.inf)
        return out[()] if out.ndim == 0 else out


class GlobalKernel:
    """A global proposal used as a local kernel: ``k(x, y) = q(y)``."""

    def __init__(self, q: Proposal):
        self.q = q

    def propose(self, x, rng):
        return self.q.draw(rng)

    def log_prob(self, frm, to):
        out = np.broadcast_to(np.asarray(self.q.log_prob(to), dtype=float),
                              np.broadcast_shapes(np.shape(frm), np.shape(to)))
        out = np.array(out)
        return out[()] if out.ndim == 0 else out


def _score_lookup(P, kernel):
    """Scalar log-score function, backed by a dense table when the kernel
    lives on a finite code range small enough to score up front."""
    n = getattr(kernel, "n_points", None)
    if n is not None and n <= DENSE_SCORE_MAX:
        table = np.asarray(P.log_score(np.arange(n, dtype=np.int64)), dtype=float).tolist()

        def score(x):
            return table[x] if 0 <= x < n else -math.inf
        return score
    cache = {}

    def score(x):
        v = cache.get(x)
        if v is None:
            v = cache[x] = float(P.log_score(x))
        return v
    return score


DENSE_SCORE_MAX = 1 << 22


def mh_local_chain(P, kernel, init, n_outputs: int, burn_in: int = 1000,
                   thinning: int = 1, rng: RngStream | None = None,
                   space=None) -> ChainResult:
    """Metropolis-Hastings with a user-supplied local kernel.

    Acceptance is ``min(1, P(x') k(x'→x) / (P(x) k(x→x')))``. When a finite
    ``space`` is given the kernel's support symmetry is checked up front.
    Output accounting matches :func:`imh_chain`; the initial point counts as
    one proposal draw.

    Kernels flagged ``symmetric`` skip the density ratio. Kernels that offer
    ``draw_noise``/``apply`` get their randomness pre-drawn in bulk.
    """
    if thinning < 1:
        raise ValueError("thinning must be >= 1")
    rng = rng or RngStream()
    if space is not None:
        from .oracle import mh_local_exact_kernel
        mh_local_exact_kernel(P, kernel, space)
    score = _score_lookup(P, kernel)
    symmetric = getattr(kernel, "symmetric", False)
    bulk = hasattr(kernel, "draw_noise")
    x = int(init)
    lp = score(x)
    total = burn_in + n_outputs * thinning
    out_pts = np.empty(n_outputs, dtype=np.int64)
    out_step = np.empty(n_outputs, dtype=np.int64)
    out_move = np.empty(n_outputs, dtype=bool)
    log_us = np.log(rng.uniform(total)).tolist()
    noise = kernel.draw_noise(rng, total) if bulk else None
    moves = 0
    k = 0
    for step in range(1, total + 1):
        xp = int(kernel.apply(x, noise[step - 1]) if bulk else kernel.propose(x, rng))
        moved = False
        if xp != x:
            if symmetric:
                fwd = bwd = 0.0
            else:
                fwd = float(kernel.log_prob(x, xp))
                bwd = float(kernel.log_prob(xp, x))
                if fwd == -math.inf or bwd == -math.inf:
                    raise ValueError("kernel violates MH support condition")
            lpp = score(xp)
            moved = _accept(lpp + bwd, lp + fwd, log_us[step - 1])
            if moved:
                x, lp = xp, lpp
                moves += 1
        if step > burn_in and (step - burn_in) % thinning == 0:
            out_pts[k] = x
            out_step[k] = step
            out_move[k] = moved
            k += 1
    return ChainResult(out_pts, out_step, out_move, total + 1, moves, total)
