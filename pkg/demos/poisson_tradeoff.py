"""Trade-off between acceptance rate and sampling quality for Poisson(11)
targeted through a Poisson(10) proposal.

The importance ratio of this pair grows without bound, so exact rejection
sampling is impossible, yet QRS gets within 1e-4 in TVD at a quarter of the
draws accepted. Estimates come from one batch of proposal draws and are set
against the exact values next to them.

    python3 demos/poisson_tradeoff.py [n_draws]
"""

import sys

from qrs import RngStream, SweepPlan, make_poisson_pair, run_sweep
from qrs.oracle import enumerate_target, exact_ar, exact_divergences, exact_p_beta
from qrs.testbeds import poisson_space


def main(n_draws=1_000_000):
    P, q = make_poisson_pair(11, 10)
    space = poisson_space(11)
    p = enumerate_target(P, space)
    grid = [0.5, 1.0, 1.5, 2.0, 3.0, 4.0, 6.0, 8.0]
    report = run_sweep(SweepPlan(grid, n_draws, seed=0), P, q)
    print(f"{'beta':>5} {'AR est':>9} {'AR exact':>9} {'TVD est':>10} {'TVD exact':>10} "
          f"{'bound':>10}")
    for row in report.rows:
        tvd, _ = exact_divergences(p, exact_p_beta(P, q, row.beta, space))
        print(f"{row.beta:5g} {row.ar:9.4f} {exact_ar(P, q, row.beta, space):9.4f} "
              f"{row.tvd:10.2e} {tvd:10.2e} {row.tvd_bound:10.2e}")

    # the sampler itself at β = 4, where about one draw in four is kept
    from qrs import qrs_collect
    res = qrs_collect(P, q, 4.0, 20_000, RngStream(1, 0))
    print(f"\nqrs_collect at beta=4: {len(res)} samples from {res.n_draws} draws, "
          f"sample mean {res.points.mean():.3f} (target mean 11)")


if __name__ == "__main__":
    main(int(float(sys.argv[1])) if len(sys.argv) > 1 else 1_000_000)
