import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy import stats

from qrs.core import RngStream
from qrs.oracle import FiniteSpace, enumerate_target, exact_log_z, sup_log_ratio
from qrs.testbeds import (Categorical, ProductCategorical, TableEbm, count_at_least,
                          fit_tilt, make_constraint_ebm, make_constraint_testbed,
                          make_poisson_pair, make_projected_proposal, make_random_categorical,
                          position_in)


class TestPoisson:
    def test_draws_match_pmf(self):
        _, q = make_poisson_pair(11, 10)
        xs = q.draw(RngStream(0, 0), size=500_000)
        f = np.bincount(xs, minlength=40)[:40] / xs.size
        assert np.abs(f - stats.poisson.pmf(np.arange(40), 10)).max() < 0.003

    def test_log_prob(self):
        P, _ = make_poisson_pair()
        assert math.exp(P.log_prob(11)) == pytest.approx(stats.poisson.pmf(11, 11))
        assert P.log_prob(-1) == -math.inf

    def test_ratio_formula(self):
        P, q = make_poisson_pair(11, 10)
        x = np.arange(30)
        assert np.allclose(P.log_score(x) - q.log_prob(x), -1 + x * math.log(1.1))

    def test_bad_rate(self):
        with pytest.raises(ValueError):
            make_poisson_pair(0.0, 10)

    def test_tail_draw_path(self):
        _, q = make_poisson_pair(11, 0.5)
        # past the precomputed table the sequential search still lands on a count
        assert q._sequential_tail(1.0) >= q._cdf.size - 1


class TestProductCategorical:
    @given(st.lists(st.integers(0, 4), min_size=3, max_size=3))
    def test_encode_decode(self, digits):
        pc = ProductCategorical(np.ones((3, 5)))
        assert list(pc.decode(pc.encode(digits))) == digits

    def test_normalized_and_draws(self):
        m = np.array([[0.2, 0.8], [0.5, 0.5], [0.9, 0.1]])
        pc = ProductCategorical(m)
        pts = np.arange(pc.size)
        assert np.exp(pc.log_prob(pts)).sum() == pytest.approx(1.0)
        xs = pc.draw(RngStream(0, 0), size=200_000)
        f = np.bincount(xs, minlength=8) / xs.size
        assert np.abs(f - np.exp(pc.log_prob(pts))).max() < 0.005
        assert pc.log_prob(8) == -math.inf


class TestConstraints:
    def test_projected_uniform(self):
        q = Categorical(np.ones(100))
        sp = FiniteSpace(np.arange(100))
        filt = lambda x: np.isin(np.asarray(x), [3, 10, 20, 30, 40, 50, 60]).astype(float)
        pq = make_projected_proposal(q, filt, space=sp)
        assert pq.z == pytest.approx(0.07)
        assert math.exp(pq.log_prob(10)) == pytest.approx(1 / 7)
        assert pq.log_prob(11) == -math.inf
        xs = pq.draw(RngStream(0, 0), size=7000)
        assert set(np.unique(xs)) == {3, 10, 20, 30, 40, 50, 60}

    def test_projected_estimated(self):
        q = Categorical(np.ones(100))
        filt = lambda x: (np.asarray(x) < 7).astype(float)
        pq = make_projected_proposal(q, filt, rng=RngStream(0, 0))
        assert not pq.z_exact and pq.z == pytest.approx(0.07, abs=0.003)

    def test_pointwise_and_exponential(self):
        cat = make_random_categorical(2, 3, 0)
        a = cat.proposal
        phi = position_in(cat, 0, [0])
        hard = make_constraint_ebm(a, [phi])
        pts = cat.space.points
        lp = hard.log_score(pts)
        assert np.all(np.isinf(lp[cat.decode(pts)[:, 0] != 0]))
        assert np.allclose(lp[:3], a.log_prob(pts[:3]))
        soft = make_constraint_ebm(a, [phi], [2.0])
        assert np.allclose(soft.log_score(pts) - a.log_score(pts), 2.0 * phi(pts))

    def test_zero_lambda_is_base(self):
        cat = make_random_categorical(2, 3, 1)
        P = make_constraint_ebm(cat.proposal, [count_at_least(cat, 0, 1)], [0.0])
        p = enumerate_target(P, cat.space)
        assert np.allclose(p.probs, np.exp(cat.proposal.log_prob(cat.space.points)))
        assert exact_log_z(P, cat.space) == pytest.approx(0.0, abs=1e-14)

    def test_lambda_count_mismatch(self):
        cat = make_random_categorical(1, 3, 0)
        with pytest.raises(ValueError):
            make_constraint_ebm(cat.proposal, [position_in(cat, 0, [0])], [1.0, 2.0])

    def test_fit_tilt(self):
        cat = make_random_categorical(2, 4, 2)
        feats = [position_in(cat, 0, [0, 1]), count_at_least(cat, 3, 1)]
        lam = fit_tilt(cat.proposal, feats, [0.7, 0.4], cat.space)
        p = enumerate_target(make_constraint_ebm(cat.proposal, feats, lam), cat.space)
        for f, mu in zip(feats, [0.7, 0.4]):
            assert float(p.probs @ f(p.points)) == pytest.approx(mu, abs=1e-9)

    def test_constraint_testbed(self):
        tb = make_constraint_testbed(k=3, v=4, seed=0)
        p = enumerate_target(tb.target, tb.space)
        assert np.all(np.isin(tb.decode(p.points[p.probs > 0])[:, 0], [0, 1]))
        proj = make_constraint_testbed(k=3, v=4, seed=0, proposal="projected")
        pts = proj.space.points
        assert np.all(np.isinf(proj.proposal.log_prob(pts)[~np.isin(tb.decode(pts)[:, 0],
                                                                       [0, 1])]))


class TestRandomCategorical:
    def test_deterministic(self):
        a = make_random_categorical(2, 5, 3)
        b = make_random_categorical(2, 5, 3)
        assert np.array_equal(a.target.weights, b.target.weights)
        c = make_random_categorical(2, 5, 4)
        assert not np.array_equal(a.target.weights, c.target.weights)

    def test_heavy_tail_spread(self):
        big = 0
        for s in range(20):
            c = make_random_categorical(1, 30, s, "heavy-tail")
            big += math.exp(sup_log_ratio(c.target, c.proposal, c.space)) > 1e3
        assert big >= 10

    def test_holes(self):
        c = make_random_categorical(1, 20, 0, holes=0.2)
        w = np.exp(c.proposal.log_prob(c.space.points))
        assert (w == 0).sum() == 4 and w.sum() == pytest.approx(1.0)

    def test_limits(self):
        with pytest.raises(ValueError, match="too large"):
            make_random_categorical(5, 10, 0)
        with pytest.raises(ValueError, match="weight law"):
            make_random_categorical(1, 5, 0, "zipf")

    def test_table_ebm_rejects_negative(self):
        with pytest.raises(ValueError):
            TableEbm([0.1, -0.2])
