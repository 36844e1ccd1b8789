"""Monte Carlo experiments on the junk-feature model.

Every experiment takes ``(seed, trials, workers)``; grid points draw from
substreams keyed by the grid value, so adding or reordering grid points does
not change the numbers reported for the others.
"""

from dataclasses import dataclass
from typing import Callable, Optional, Sequence

import numpy as np

from .errors import DomainError, PreconditionError
from .gap import gap_decomposition_ball, restricted_eigenvalue, KernelView
from .interpolators import flip_junk, min_norm, min_risk, ridge_signal
from .model import ProblemSpec, cov_deviation_norms, empirical_risk, population_risk, sample_dataset
from .montecarlo import McEstimate, run_monte_carlo, run_trials, summarize

LAMBDA_SCHEDULES: dict = {
    "sqrt": lambda n: float(np.sqrt(n)),
    "log": lambda n: float(np.log(n)),
    "pow0.8": lambda n: float(n ** 0.8),
}


def lambda_schedule(name: str) -> Callable[[int], float]:
    try:
        return LAMBDA_SCHEDULES[name]
    except KeyError:
        raise ValueError(f"unknown lambda schedule {name!r}; choose from {sorted(LAMBDA_SCHEDULES)}") from None


# ---------------------------------------------------------------- minimal-risk risk


def mr_risk_formula(n: int, p: int, sigma2: float) -> float:
    """``E L_D(w_mr) = (p - 1) / (p - 1 - n) * sigma^2``, finite only for ``p > n + 1``."""
    if p <= n + 1:
        raise DomainError(f"expected risk is infinite for p={p} <= n + 1 = {n + 1}")
    return (p - 1) / (p - 1 - n) * sigma2


def mr_risk_check(n: int, p: int, sigma2: float, trials: int, seed: int, *, keys=(),
                  workers: int = 1):
    """Monte Carlo ``E L_D(w_mr)`` under ``Sigma = I`` against its closed form."""
    formula = mr_risk_formula(n, p, sigma2)
    spec = ProblemSpec(d_S=0, d_J=p, lam=float(p), sigma2=sigma2)  # junk variance 1: Sigma = I

    def task(rng, _):
        S = sample_dataset(spec, n, rng)
        return population_risk(min_risk(S, spec).w, spec)

    return run_monte_carlo(task, trials, seed, keys=keys, workers=workers), formula


@dataclass(frozen=True)
class DoubleDescentRow:
    p: int
    formula: float
    estimate: McEstimate


def double_descent_curve(n: int, p_grid: Sequence[int], sigma2: float, trials: int, seed: int,
                         *, workers: int = 1) -> list:
    bad = [p for p in p_grid if p <= n + 1]
    if bad:
        raise DomainError(f"grid entries {bad} do not exceed n + 1 = {n + 1}")
    rows = []
    for p in p_grid:
        est, formula = mr_risk_check(n, int(p), sigma2, trials, seed, keys=(int(p),), workers=workers)
        rows.append(DoubleDescentRow(int(p), formula, est))
    return rows


# ---------------------------------------------------------------------- norm limits


@dataclass(frozen=True)
class NormLimits:
    mr_norm2: float
    mn_norm2: float
    diff: float
    beta_n: float
    mn_size_product: float


def norm_limits(spec: ProblemSpec, n: int, beta_n: float) -> NormLimits:
    """Large-``d_J`` limits of ``E||w_mr||^2`` and ``E||w_mn||^2`` (``spec.d_J`` is ignored)."""
    s2, lam, d_S, ws2 = spec.sigma2, spec.lam, spec.d_S, spec.w_star_norm2
    mr = ws2 + s2 * n / lam
    mn = ws2 + s2 * (n - d_S) / lam + beta_n * (s2 * d_S - lam * ws2) / n
    diff = s2 * d_S / lam + beta_n * (lam * ws2 - s2 * d_S) / n
    return NormLimits(mr, mn, diff, beta_n, mn * (d_S + lam) / n)


def beta_statistic(X_S: np.ndarray, lam: float) -> float:
    """``tr((X_S^T X_S / n + (lam/n) I)^{-1}) / d_S``; taken as 1 when ``d_S = 0``."""
    n, d_S = X_S.shape
    if d_S == 0:
        return 1.0
    ev = np.linalg.eigvalsh(X_S.T @ X_S / n)
    return float(np.mean(1.0 / (ev + lam / n)))


@dataclass(frozen=True)
class NormLimitRow:
    d_J: int
    mr_norm2: McEstimate
    mn_norm2: McEstimate


@dataclass(frozen=True)
class NormLimitResult:
    limits: NormLimits
    beta_estimate: McEstimate
    rows: list
    size_product: float  # (MC E||w_mn||^2 at the largest d_J) * tr(Sigma) / n

    @property
    def final(self) -> NormLimitRow:
        return self.rows[-1]


def norm_limit_check(spec: ProblemSpec, n: int, d_J_grid: Sequence[int], trials: int, seed: int,
                     *, workers: int = 1) -> NormLimitResult:
    rows, betas = [], None
    for d_J in d_J_grid:
        sp = spec.with_(d_J=int(d_J))

        def task(rng, _, sp=sp):
            S = sample_dataset(sp, n, rng)
            return (min_risk(S, sp).norm ** 2, min_norm(S).norm ** 2,
                    beta_statistic(S.X_S, sp.lam))

        mr, mn, beta = summarize(run_trials(task, trials, seed, keys=(int(d_J),), workers=workers), seed)
        rows.append(NormLimitRow(int(d_J), mr, mn))
        betas = beta
    limits = norm_limits(spec, n, betas.mean)
    return NormLimitResult(limits, betas, rows, rows[-1].mn_norm2.mean * spec.trace_sigma / n)


# -------------------------------------------------------------------------- alpha law


@dataclass(frozen=True)
class AlphaRow:
    alpha: float
    estimate: McEstimate
    target: float
    tolerance: float

    @property
    def passed(self) -> bool:
        return abs(self.estimate.mean - self.target) <= self.tolerance


def alpha_sweep(spec: ProblemSpec, n: int, alphas: Sequence[float], trials: int, seed: int, *,
                rel_tol: float = 0.15, workers: int = 1) -> list:
    """Mean worst-case gap over ``||w|| <= alpha ||w_mn||`` against ``alpha^2 sigma^2``.

    All alphas share each trial's sample.
    """
    alphas = [float(a) for a in alphas]
    if not alphas or min(alphas) < 1.0:
        raise PreconditionError("every alpha must be >= 1")

    def task(rng, _):
        S = sample_dataset(spec, n, rng)
        mn = min_norm(S)
        return [gap_decomposition_ball(S, spec, a * mn.norm, anchor=mn).value for a in alphas]

    ests = summarize(run_trials(task, trials, seed, workers=workers), seed)
    rows = []
    for a, est in zip(alphas, ests):
        target = a * a * spec.sigma2
        rows.append(AlphaRow(a, est, target, est.tolerance(target, rel_tol)))
    return rows


# ------------------------------------------------------------------- flip adversary


@dataclass(frozen=True)
class FlipResult:
    L_S_tilde: McEstimate
    L_D_tilde: McEstimate
    L_D_mn: McEstimate
    L_S_target: float
    identity_max_rel: Optional[float]  # max_t |L_S - 4||Y||^2/n| / (4||Y||^2/n), d_S = 0 only


def flip_experiment(spec: ProblemSpec, n: int, trials: int, seed: int, *, workers: int = 1) -> FlipResult:
    """Minimum-norm fit to the junk-flipped sample, scored on the original sample."""

    def task(rng, _):
        S = sample_dataset(spec, n, rng)
        w_t = min_norm(flip_junk(S)).w
        ls = empirical_risk(w_t, S)
        ref = 4.0 * float(S.Y @ S.Y) / n
        ident = abs(ls - ref) / ref if ref > 0 else abs(ls)
        return ls, population_risk(w_t, spec), population_risk(min_norm(S).w, spec), ident

    out = run_trials(task, trials, seed, workers=workers)
    ls, ld, ldmn, _ = summarize(out, seed)
    ident = max(r[3] for r in out) if spec.d_S == 0 else None
    return FlipResult(ls, ld, ldmn, 4.0 * spec.sigma2 * (n - spec.d_S) / n, ident)


# ----------------------------------------------------- consistency vs. divergence sweep


@dataclass(frozen=True)
class SweepRow:
    n: int
    lam: float
    d_J: int
    excess_mn: McEstimate
    excess_ridge: McEstimate
    dev_norm_product: McEstimate   # ||Sigma - Sigma_hat|| * ||w_mn||^2
    kappa_product: McEstimate      # kappa * ||w_mn||^2


def consistency_divergence_sweep(template: ProblemSpec, n_grid: Sequence[int], schedule: str = "sqrt",
                                 trials: int = 100, seed: int = 0, *, d_J_factor: int = 10,
                                 workers: int = 1) -> list:
    lam_of = lambda_schedule(schedule)
    if list(n_grid) != sorted(set(n_grid)):
        raise ValueError("n grid must be strictly ascending")
    rows = []
    for n in n_grid:
        n = int(n)
        spec = template.with_(lam=lam_of(n), d_J=d_J_factor * n)

        def task(rng, _, spec=spec, n=n):
            S = sample_dataset(spec, n, rng)
            mn = min_norm(S)
            ridge = ridge_signal(S, spec.lam) if spec.d_S else mn
            dev = cov_deviation_norms(S, spec, method="lowrank")
            kappa = restricted_eigenvalue(KernelView(S, "matrix-free"), spec, method="structured")
            m2 = mn.norm ** 2
            return (population_risk(mn.w, spec) - spec.sigma2,
                    population_risk(ridge.w, spec) - spec.sigma2,
                    dev.opnorm * m2, kappa * m2)

        ests = summarize(run_trials(task, trials, seed, keys=(n,), workers=workers), seed)
        rows.append(SweepRow(n, spec.lam, spec.d_J, *ests))
    return rows


# --------------------------------------------------------------- ridge equivalence


@dataclass(frozen=True)
class RidgeEquivRow:
    d_J: int
    signal_gap: McEstimate       # ||w_mn,S - w_ridge||
    rel_signal_gap: McEstimate   # ||w_mn,S - w_ridge|| / ||w_ridge||
    junk_prediction: McEstimate  # |<w_mn,J, x_J>| on a fresh junk draw


def ridge_equivalence_curve(spec: ProblemSpec, n: int, d_J_grid: Sequence[int], trials: int, seed: int,
                            *, workers: int = 1) -> list:
    if spec.d_S < 1:
        raise PreconditionError("ridge equivalence needs d_S >= 1")
    rows = []
    for d_J in d_J_grid:
        sp = spec.with_(d_J=int(d_J))

        def task(rng, _, sp=sp):
            S = sample_dataset(sp, n, rng)
            w = min_norm(S).w
            r = ridge_signal(S, sp.lam).w[: sp.d_S]
            gap = float(np.linalg.norm(w[: sp.d_S] - r))
            x_J = rng.standard_normal(sp.d_J) * np.sqrt(sp.junk_var)
            return gap, gap / max(float(np.linalg.norm(r)), 1e-300), abs(float(w[sp.d_S:] @ x_J))

        ests = summarize(run_trials(task, trials, seed, keys=(int(d_J),), workers=workers), seed)
        rows.append(RidgeEquivRow(int(d_J), *ests))
    return rows
