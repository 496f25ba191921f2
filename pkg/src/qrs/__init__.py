"""Quasi rejection sampling for discrete energy-based models.

QRS trades sampling quality against efficiency through a single scalar β and
comes with importance-sampling estimates of its own acceptance rate, TVD and
KL to the target. The :mod:`qrs.oracle` module computes the same quantities
exactly on enumerable spaces.
"""

from .core import (DrawBatch, DrawRecord, Proposal, RngStream, ScorableDistribution,
                   log_add, log_mean_exp, make_draw_record)
from .estimators import (DiagnosticsRow, MomentSpec, ReplicateReport, diagnose,
                         estimate_ar, estimate_kl, estimate_kl_to_base, estimate_moment,
                         estimate_partitions, estimate_region_mass_and_bound,
                         estimate_tvd, replicate_stats, tradeoff_curve)
from .samplers import (BudgetExhausted, NotAGlobalBound, imh_chain, imh_reset,
                       mh_local_chain, qrs_acceptance_prob, qrs_collect, qrs_incremental,
                       rs_certified)
from .sweep import SweepPlan, find_beta_for_ar, mcmc_compare, run_sweep
from .testbeds import (make_constraint_ebm, make_poisson_pair, make_projected_proposal,
                       make_random_categorical, make_two_point)

__version__ = "0.1.0"
