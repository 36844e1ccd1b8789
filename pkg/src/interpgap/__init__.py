"""Exact worst-case generalization gaps of norm-bounded interpolators in a
linear model with many low-variance junk features, plus Monte Carlo
experiments around them."""

__version__ = "0.1.0"

from .errors import (DimensionError, DomainError, InfeasibleBudgetError, InterpGapError,  # noqa: E402
                     MonteCarloError, NumericalError, PreconditionError, RankError,
                     UnsupportedDimensionError)
from .gap import (GapResult, KernelView, ball_gap_lower_bound, ball_gap_witness,  # noqa: E402
                  brute_force_gap_oracle, classical_bounds, gap_decomposition_ball,
                  gap_decomposition_mr, kappa_limit_formula, kernel_basis, restricted_eigenvalue,
                  worst_case_gap)
from .interpolators import Predictor, flip_junk, min_norm, min_risk, ridge_signal  # noqa: E402
from .model import (CovarianceView, ProblemSpec, SampleSet, cov_deviation_norms,  # noqa: E402
                    empirical_risk, empirical_risk_terms, population_risk, sample_dataset)
from .montecarlo import McEstimate, run_monte_carlo, run_trials  # noqa: E402
from .rng import substream  # noqa: E402
