"""Shared building blocks: distribution contracts, log-domain helpers, draw
records and the seeded random stream.

Scores and probabilities are plain floats (or float arrays) holding natural
logs; ``-inf`` encodes zero. Points are integers. Spaces of small integer
vectors are addressed by their mixed-radix code (see
:class:`qrs.testbeds.CategoricalSpace`), so numeric order on codes is
lexicographic order on vectors.
"""

from __future__ import annotations

import abc
from dataclasses import dataclass

import numpy as np

__all__ = [
    "ScorableDistribution",
    "Proposal",
    "DrawRecord",
    "DrawBatch",
    "RngStream",
    "log_add",
    "log_mean_exp",
    "log_sub_ratio",
    "make_draw_record",
]


def log_add(a, b):
    """log(exp(a) + exp(b)) without leaving log space."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    hi = np.maximum(a, b)
    lo = np.minimum(a, b)
    with np.errstate(invalid="ignore"):
        out = hi + np.log1p(np.exp(lo - hi))
    # -inf + -inf gives nan through lo - hi
    out = np.where(np.isneginf(hi), -np.inf, out)
    return out[()] if out.ndim == 0 else out


def log_mean_exp(values, counts=None) -> float:
    """Return ``log(mean(exp(values)))`` with a single max shift.

    ``counts`` gives the multiplicity of each value when the batch has been
    compressed; the mean is then taken over ``counts.sum()`` items.
    """
    v = np.asarray(values, dtype=float).ravel()
    if v.size == 0:
        raise ValueError("empty estimator batch")
    if counts is None:
        n = v.size
        w = None
    else:
        w = np.asarray(counts, dtype=float).ravel()
        n = w.sum()
        if n <= 0:
            raise ValueError("empty estimator batch")
    m = v.max()
    if np.isneginf(m):
        return -np.inf
    if np.isposinf(m):
        return np.inf
    e = np.exp(v - m)
    s = e.sum() if w is None else np.dot(w, e)
    return float(m + np.log(s) - np.log(n))


def log_sub_ratio(log_num, log_den):
    """Elementwise ``log_num - log_den`` with the support-mismatch convention.

    ``-inf - -inf`` (zero score at a zero-probability point) is ``-inf``;
    a positive score where the denominator is zero is ``+inf``.
    """
    log_num = np.asarray(log_num, dtype=float)
    log_den = np.asarray(log_den, dtype=float)
    with np.errstate(invalid="ignore"):
        out = log_num - log_den
    out = np.where(np.isneginf(log_num), -np.inf, out)
    return out[()] if out.ndim == 0 else out


class ScorableDistribution(abc.ABC):
    """An unnormalized, deterministic log-score over a discrete space."""

    @abc.abstractmethod
    def log_score(self, x):
        """Unnormalized log-score of a point or an integer array of points."""


class Proposal(ScorableDistribution):
    """A normalized distribution that can be scored and sampled from."""

    @abc.abstractmethod
    def log_prob(self, x):
        """Normalized log-probability of a point or array of points."""

    @abc.abstractmethod
    def draw(self, rng: "RngStream", size=None):
        """Draw one point (``size=None``) or an int64 array of ``size`` points."""

    def log_score(self, x):
        return self.log_prob(x)


@dataclass(frozen=True)
class DrawRecord:
    point: int
    log_q: float
    log_p_unnorm: float
    log_ratio: float


def make_draw_record(P: ScorableDistribution, q: Proposal, x) -> DrawRecord:
    log_q = float(q.log_prob(x))
    log_p = float(P.log_score(x))
    return DrawRecord(
        point=int(x),
        log_q=log_q,
        log_p_unnorm=log_p,
        log_ratio=float(log_sub_ratio(log_p, log_q)),
    )


class DrawBatch:
    """Columnar batch of i.i.d. proposal draws with cached scores.

    When built with ``compress=True`` identical points are merged and
    ``counts`` carries their multiplicities; every estimator weights by
    ``counts``, so results match the uncompressed batch up to summation order.
    """

    def __init__(self, points, log_q, log_p, counts=None, seed=None, stream_id=None):
        self.points = np.asarray(points)
        self.log_q = np.asarray(log_q, dtype=float)
        self.log_p = np.asarray(log_p, dtype=float)
        self.log_ratio = log_sub_ratio(self.log_p, self.log_q)
        if counts is None:
            counts = np.ones(self.points.shape[0], dtype=np.int64)
        self.counts = np.asarray(counts, dtype=np.int64)
        self.n = int(self.counts.sum())
        if self.n < 1:
            raise ValueError("empty estimator batch")
        self.seed = seed
        self.stream_id = stream_id

    @classmethod
    def draw(cls, P: ScorableDistribution, q: Proposal, n: int, rng: "RngStream",
             compress: bool = True) -> "DrawBatch":
        if n < 1:
            raise ValueError("n must be >= 1")
        points = np.asarray(q.draw(rng, size=n))
        counts = None
        if compress:
            if points.min() >= 0 and points.max() < 4 * n + 1_000_000:
                c = np.bincount(points)
                points = np.flatnonzero(c)
                counts = c[points]
            else:
                points, counts = np.unique(points, return_counts=True)
        return cls(points, q.log_prob(points), P.log_score(points), counts,
                   seed=rng.seed, stream_id=rng.stream_id)

    def __len__(self):
        return self.points.shape[0]

    def __getitem__(self, i) -> DrawRecord:
        return DrawRecord(int(self.points[i]), float(self.log_q[i]),
                          float(self.log_p[i]), float(self.log_ratio[i]))

    def records(self):
        """Iterate over the distinct records (one per stored row)."""
        for i in range(len(self)):
            yield self[i]


class RngStream:
    """Seeded random stream identified by ``(seed, stream_id)``.

    Backed by numpy's counter-based Philox generator keyed through
    ``SeedSequence(seed, spawn_key=(stream_id,))``. Identical pairs give
    identical sequences; distinct stream ids are independent streams.
    """

    def __init__(self, seed: int = 0, stream_id: int = 0):
        self.seed = int(seed)
        self.stream_id = int(stream_id)
        ss = np.random.SeedSequence(self.seed, spawn_key=(self.stream_id,))
        self.generator = np.random.Generator(np.random.Philox(ss))

    def substream(self, stream_id: int) -> "RngStream":
        return RngStream(self.seed, stream_id)

    def uniform(self, size=None):
        """Uniform variates on (0, 1].

        Zero is excluded so ``u <= r`` never accepts a zero-score point and
        ``log(u)`` is always finite.
        """
        return 1.0 - self.generator.random(size)

    def integers(self, low, high=None, size=None):
        return self.generator.integers(low, high, size=size)

    def __repr__(self):
        return f"RngStream(seed={self.seed}, stream_id={self.stream_id})"
