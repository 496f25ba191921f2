import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from qrs.core import DrawBatch, RngStream
from qrs.estimators import (DiagnosticsRow, MomentSpec, diagnose, estimate_ar, estimate_kl,
                            estimate_kl_to_base, estimate_moment, estimate_partitions,
                            estimate_region_mass_and_bound, estimate_tvd, replicate_stats,
                            tradeoff_curve)
from qrs.oracle import (enumerate_target, exact_divergences, exact_p_beta, exact_region_mass)
from qrs.testbeds import (Categorical, TableEbm, make_constraint_ebm, make_random_categorical,
                          position_in)


def exact_batch(two_point):
    """One draw of each point: q is uniform, so batch means are exact."""
    pts = np.array([0, 1])
    return DrawBatch(pts, two_point.proposal.log_prob(pts), two_point.target.log_score(pts))


def is_b(x):
    return (np.asarray(x) == 1).astype(float)


class TestExactLimit:
    def test_partitions(self, two_point):
        lz, lzb = estimate_partitions(exact_batch(two_point), 1.0)
        assert math.exp(lz) == pytest.approx(0.8)
        assert math.exp(lzb) == pytest.approx(0.7)
        lz, lzb = estimate_partitions(exact_batch(two_point), 1.2)
        assert lzb == lz

    def test_ar(self, two_point):
        b = exact_batch(two_point)
        for beta, want in [(1.0, 0.7), (2.0, 0.4), (0.1, 1.0)]:
            _, lzb = estimate_partitions(b, beta)
            assert estimate_ar(lzb, beta) == pytest.approx(want)

    def test_tvd_kl_bound(self, two_point):
        b = exact_batch(two_point)
        lz, lzb = estimate_partitions(b, 1.0)
        assert estimate_tvd(b, 1.0, lz, lzb) == pytest.approx(1 / 28)
        assert estimate_kl(b, 1.0, lz, lzb) == pytest.approx(0.0032098, abs=1e-7)
        pa, bound = estimate_region_mass_and_bound(b, 1.0, lz)
        assert (pa, bound) == (pytest.approx(0.25), pytest.approx(0.75))
        lz, lzb = estimate_partitions(b, 1.2)
        assert estimate_tvd(b, 1.2, lz, lzb) == pytest.approx(0.0, abs=1e-15)
        assert estimate_kl(b, 1.2, lz, lzb) == pytest.approx(0.0, abs=1e-15)
        assert estimate_region_mass_and_bound(b, 1.2, lz)[1] == 0.0

    def test_moments(self, two_point):
        b = exact_batch(two_point)
        _, lzb = estimate_partitions(b, 1.0)
        assert estimate_moment(b, 1.0, lzb, MomentSpec("b", is_b))[0] == pytest.approx(5 / 7)
        one = estimate_moment(b, 1.0, lzb, MomentSpec("one", lambda x: np.ones(np.shape(x))))
        assert one[0] == 1.0
        _, lzb = estimate_partitions(b, 5.0)
        assert estimate_moment(b, 5.0, lzb, MomentSpec("b", is_b))[0] == pytest.approx(0.75)

    def test_kl_to_base(self, two_point):
        b = exact_batch(two_point)
        _, lzb = estimate_partitions(b, 1.0)
        got = estimate_kl_to_base(b, 1.0, lzb, two_point.proposal)
        assert got == pytest.approx((2 / 7) * math.log(4 / 7) + (5 / 7) * math.log(10 / 7))


def test_constant_weights_zero_variance():
    w = np.array([0.2, 0.3, 0.5])
    P, q = TableEbm(3 * w), Categorical(w)
    batch = DrawBatch.draw(P, q, 1000, RngStream(0, 0))
    row = diagnose(batch, 10.0)
    assert math.exp(row.log_z) == pytest.approx(3.0)
    assert row.z_se == pytest.approx(0.0, abs=1e-12)


def test_kl_to_base_identity_ebm(cat100):
    q = cat100.proposal
    batch = DrawBatch.draw(q, q, 1000, RngStream(0, 0))
    _, lzb = estimate_partitions(batch, 1.0)
    assert estimate_kl_to_base(batch, 1.0, lzb, q) == pytest.approx(0.0, abs=1e-12)


def test_kl_to_base_binary_filter():
    # P = a·b with binary b and q = a: KL(p, a) = -log a(constraint set)
    a = Categorical(np.full(100, 0.01))
    space = make_random_categorical(2, 10, 0)
    phi = position_in(space, 0, [0])   # 10 of 100 points
    P = make_constraint_ebm(a, [phi])
    batch = DrawBatch.draw(P, a, 200_000, RngStream(0, 0))
    lz, lzb = estimate_partitions(batch, 1e6)
    got = estimate_kl_to_base(batch, 1e6, lzb, a)
    # the plug-in estimate is exactly -log Ẑ here; Ẑ itself is random
    assert got == pytest.approx(-lz, rel=1e-12)
    assert got == pytest.approx(-math.log(0.1), abs=0.03)


def test_kl_to_base_support_violation(two_point):
    b = exact_batch(two_point)
    _, lzb = estimate_partitions(b, 1.0)
    with pytest.raises(ValueError, match="base model support violation"):
        estimate_kl_to_base(b, 1.0, lzb, Categorical([1.0, 0.0]))


def test_bad_beta(two_point):
    with pytest.raises(ValueError, match="beta must be positive"):
        estimate_partitions(exact_batch(two_point), -1.0)


@pytest.mark.parametrize("seed", range(4))
def test_consistency_vs_oracle(seed):
    c = make_random_categorical(2, 10, seed, "heavy-tail" if seed % 2 else "uniform-dirichlet")
    P, q, sp = c.target, c.proposal, c.space
    p = enumerate_target(P, sp)
    # heavy-tail instances put real p-mass on points with q ~ 1e-6, so the
    # batch has to be large enough to see them
    batch = DrawBatch.draw(P, q, 1_000_000, RngStream(seed, 0))
    for beta in (0.5, 1.0, 3.0):
        row = diagnose(batch, beta)
        tvd, kl = exact_divergences(p, exact_p_beta(P, q, beta, sp))
        bound = 1 - exact_region_mass(P, q, beta, sp)
        assert abs(row.tvd - tvd) <= max(0.01, 5 * row.tvd_se)
        assert abs(row.kl - kl) <= max(0.01, 5 * row.kl_se)
        assert abs(row.tvd_bound - bound) <= max(0.01, 5 * row.tvd_bound_se)


def test_replicate_stats(two_point):
    spec = MomentSpec("one", lambda x: np.ones(np.shape(x)))

    def run(rng):
        return diagnose(DrawBatch.draw(two_point.target, two_point.proposal, 2000, rng), 1.0,
                        moments=[spec])

    rep = replicate_stats(run, 5, base_seed=0)
    assert rep.R == 5 and len(rep.rows) == 5
    assert rep.sd("moment_one") == 0.0
    assert rep.mean("ar") == pytest.approx(0.7, abs=0.03)
    with pytest.raises(ValueError):
        replicate_stats(run, 1, base_seed=0)


def _row(beta, ar, tvd, kl=0.0):
    return DiagnosticsRow(beta=beta, ar=ar, ar_se=0, log_z=0, log_z_beta=0, tvd=tvd, tvd_se=0,
                          tvd_bound=tvd, kl=kl, kl_se=0)


class TestTradeoff:
    def test_two_rows(self):
        curve = tradeoff_curve([_row(1.0, 0.7, 1 / 28), _row(2.0, 0.4, 0.0)])
        assert [(a, t) for a, t, _ in curve] == [(0.7, 1 / 28), (0.4, 0.0)]

    def test_errors(self):
        with pytest.raises(ValueError):
            tradeoff_curve([_row(1.0, 0.7, 0.1)])
        with pytest.raises(ValueError):
            tradeoff_curve([_row(1.0, 0.7, 0.1), _row(1.0, 0.7, 0.1)])

    @settings(max_examples=50)
    @given(st.lists(st.floats(0, 1), min_size=2, max_size=30))
    def test_isotonic_repair(self, ars):
        rows = [_row(1.0 + i, a, 0.1) for i, a in enumerate(ars)]
        curve = tradeoff_curve(rows)
        fixed = [a for a, _, _ in curve]
        assert all(b <= a + 1e-12 for a, b in zip(fixed, fixed[1:]))
        assert sum(fixed) == pytest.approx(sum(ars))
        # rows themselves are untouched
        assert [r.ar for r in rows] == ars
