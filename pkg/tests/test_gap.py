import numpy as np
import pytest
from hypothesis import given, strategies as st

from interpgap import (CovarianceView, DimensionError, DomainError, InfeasibleBudgetError,
                       PreconditionError, ProblemSpec, RankError, SampleSet,
                       UnsupportedDimensionError, ball_gap_lower_bound, ball_gap_witness,
                       brute_force_gap_oracle, classical_bounds, empirical_risk,
                       gap_decomposition_ball, gap_decomposition_mr, kappa_limit_formula,
                       kernel_basis, min_norm, min_risk, population_risk, restricted_eigenvalue,
                       sample_dataset, worst_case_gap)
from interpgap.gap import (KernelView, _phi, dual_spectrum, max_sq_norm_bound,
                           star_bound_high_prob)
from interpgap.interpolators import make_predictor
from oracles import primal_gap, restricted_eig_dense, sigma_dense
from strategies import problems


def _instance_a():
    """Hand-checkable: X = [[1, 2, 0], [0, 1, 1]], one signal coordinate, junk variance 1/2.

    w_mn = (0.4, 0.3, -0.5), w_mr = (0.8, 0.1, -0.3), ker X = span (2, -1, 1),
    kappa = 5/6, L_D(w_mn) = 0.76, L_D(w_mr) = 0.56.
    """
    spec = ProblemSpec(1, 2, 1.0, 0.5, [0.7])
    E = np.array([0.3, -0.2])
    X = np.array([[1.0, 2.0, 0.0], [0.0, 1.0, 1.0]])
    return spec, SampleSet(X, X[:, :1] @ spec.w_star_S + E, E, 1)


# ---------------------------------------------------------------- frozen values


def test_instance_a_closed_forms():
    spec, S = _instance_a()
    mn, mr = min_norm(S), min_risk(S, spec)
    np.testing.assert_allclose(mn.w, [0.4, 0.3, -0.5], atol=1e-14)
    np.testing.assert_allclose(mr.w, [0.8, 0.1, -0.3], atol=1e-14)
    assert population_risk(mn.w, spec) == pytest.approx(0.76, rel=1e-14)
    assert population_risk(mr.w, spec) == pytest.approx(0.56, rel=1e-14)
    assert restricted_eigenvalue(kernel_basis(S), spec) == pytest.approx(5 / 6, rel=1e-14)


@pytest.mark.parametrize("alpha,expected", [
    (1.0, 0.76),
    # boundary point t = -r along (2,-1,1)/sqrt(6): 0.76 + 2 r / sqrt(6) + (5/6) r^2
    (1.5, 0.76 + 2 * np.sqrt(0.625 / 6) + 5 * 0.625 / 6),
    (2.0, 3.01),
])
def test_instance_a_gap_values(alpha, expected):
    spec, S = _instance_a()
    mn = min_norm(S)
    for method in ("dense", "structured"):
        r = worst_case_gap(S, spec, mn, alpha * mn.norm, method=method)
        assert r.value == pytest.approx(expected, rel=1e-12)


def test_instance_a_mr_decomposition_hits_upper_bracket():
    spec, S = _instance_a()
    d = gap_decomposition_mr(S, spec)
    assert d.value == pytest.approx(1.36, rel=1e-12)
    assert d.gamma_n == pytest.approx(4.0, rel=1e-10)


def test_frozen_three_dimensional_kernel():
    spec = ProblemSpec(2, 3, 3.0, 1.0, [1.0, -0.5])
    X = np.array([[1.0, 0.0, 1.0, 0.0, 2.0], [0.0, 1.0, -1.0, 1.0, 0.0]])
    E = np.array([0.5, 0.1])
    S = SampleSet(X, X[:, :2] @ spec.w_star_S + E, E, 2)
    mn = min_norm(S)
    assert restricted_eigenvalue(kernel_basis(S), spec) == pytest.approx(1.0, rel=1e-12)
    # trust-region oracle value, frozen
    assert worst_case_gap(S, spec, mn, 1.3 * mn.norm).value == pytest.approx(3.4123746223153133, rel=1e-10)


# ------------------------------------------------------------------ kernel view


def test_kernel_basis_one_dimensional():
    S = SampleSet(np.array([[1.0, 0.0]]), [1.0], [1.0], 0)
    F = kernel_basis(S).F
    np.testing.assert_allclose(np.abs(F[:, 0]), [0.0, 1.0], atol=1e-15)


@given(problems(max_n=12, max_kernel=12))
def test_kernel_basis_properties(inst):
    _, S = inst
    K = kernel_basis(S)
    assert np.linalg.norm(S.X @ K.F, 2) <= 1e-8
    assert np.abs(K.F.T @ K.F - np.eye(S.p - S.n)).max() <= 1e-10
    v = np.random.default_rng(0).standard_normal(S.p)
    M = kernel_basis(S, "matrix-free")
    once = M.project(v)
    np.testing.assert_allclose(M.project(once), once, atol=1e-10 * np.linalg.norm(v))
    np.testing.assert_allclose(once, K.F @ (K.F.T @ v), atol=1e-9 * np.linalg.norm(v))


def test_kernel_basis_errors():
    with pytest.raises(PreconditionError):
        kernel_basis(SampleSet(np.eye(2), [1, 1], [1, 1], 0))
    with pytest.raises(RankError):
        kernel_basis(SampleSet(np.array([[1.0, 1.0, 0.0], [2.0, 2.0, 0.0]]), [1, 2], [1, 2], 0))
    with pytest.raises(DimensionError):
        kernel_basis(SampleSet(np.ones((1, 10)), [1.0], [1.0], 0), dense_ceiling=5)
    with pytest.raises(ValueError):
        kernel_basis(SampleSet(np.ones((1, 3)), [1.0], [1.0], 0), mode="sparse")


# ----------------------------------------------------------- restricted eigenvalue


def test_kappa_identity_covariance_is_one():
    spec = ProblemSpec(0, 7, 7.0, 1.0)
    S = sample_dataset(spec, 4, seed=0)
    for method in ("dense", "lanczos", "power", "structured"):
        assert restricted_eigenvalue(kernel_basis(S), spec, method=method) == pytest.approx(1.0, rel=1e-9)


def test_kappa_without_samples_is_sigma_norm():
    spec = ProblemSpec(2, 5, 20.0, 1.0)
    S = SampleSet(np.zeros((0, 7)), np.zeros(0), np.zeros(0), 2)
    assert restricted_eigenvalue(kernel_basis(S), spec) == pytest.approx(4.0)
    assert restricted_eigenvalue(kernel_basis(S, "matrix-free"), spec) == pytest.approx(4.0)


@given(problems(max_n=15, max_kernel=15))
def test_kappa_paths_match_dense_oracle(inst):
    spec, S = inst
    ref = restricted_eig_dense(S.X, sigma_dense(spec.d_S, spec.d_J, spec.lam))
    K = kernel_basis(S)
    for method in ("dense", "lanczos", "structured"):
        assert restricted_eigenvalue(K, spec, method=method) == pytest.approx(ref, rel=1e-8)
    assert 0 < ref <= spec.covariance().norm * (1 + 1e-12)
    U = K.F @ np.random.default_rng(1).standard_normal((S.p - S.n, 200))
    U /= np.linalg.norm(U, axis=0)
    quad = np.einsum("ij,ij->j", U, spec.covariance().apply(U))
    assert quad.max() <= ref + 1e-8


def test_kappa_power_on_separated_spectrum():
    spec = ProblemSpec(2, 2000, np.sqrt(50), 1.0, [1.0, 0.0])
    S = sample_dataset(spec, 50, seed=5)
    K = kernel_basis(S, "matrix-free")
    exact = restricted_eigenvalue(K, spec, method="structured")
    assert restricted_eigenvalue(K, spec, method="power") == pytest.approx(exact, rel=1e-8)


def test_kappa_limit_formula():
    spec = ProblemSpec(1, 30, 4.0, 1.0, [1.0])
    S = sample_dataset(spec, 10, seed=2)
    s = float(S.X_S[:, 0] @ S.X_S[:, 0]) / 10
    assert kappa_limit_formula(S, spec) == pytest.approx((0.4) / (s + 0.4), rel=1e-13)
    tiny = spec.with_(lam=1e-9)
    assert kappa_limit_formula(S, tiny) < 1e-8
    with pytest.raises(DomainError):
        kappa_limit_formula(sample_dataset(ProblemSpec(0, 5, 1.0, 1.0), 2), ProblemSpec(0, 5, 1.0, 1.0))


# ------------------------------------------------------------------- duality


# budgets start just above ||w_mn||: the gap has a square-root singularity at the
# singleton budget, which test_singleton_budget_equals_anchor_risk_exactly covers
ALPHAS = st.floats(1.001, 3.0)


@given(problems(max_n=4, max_kernel=2), ALPHAS)
def test_strong_duality_against_brute_force(inst, alpha):
    spec, S = inst
    mn = min_norm(S)
    B = alpha * mn.norm
    ref = brute_force_gap_oracle(S, spec, spec.w_star, B)
    for method in ("dense", "structured"):
        assert worst_case_gap(S, spec, mn, B, method=method).value == pytest.approx(ref, rel=1e-8)


@given(problems(max_n=12, max_kernel=12), st.floats(1.001, 4.0))
def test_strong_duality_against_trust_region_oracle(inst, alpha):
    spec, S = inst
    mn = min_norm(S)
    B = alpha * mn.norm
    ref = primal_gap(S.X, S.Y, sigma_dense(spec.d_S, spec.d_J, spec.lam), spec.w_star, spec.sigma2, B)
    for method in ("dense", "structured"):
        r = worst_case_gap(S, spec, mn, B, method=method)
        assert r.value == pytest.approx(ref, rel=1e-8)
        assert r.lambda_star >= r.kappa * (1 - 1e-12)
        assert r.value >= r.anchor_risk * (1 - 1e-14)


@given(problems(max_n=10, max_kernel=10), st.floats(1.0, 3.0))
def test_weak_duality_random_feasible_points(inst, alpha):
    spec, S = inst
    mn = min_norm(S)
    B = alpha * mn.norm
    value = worst_case_gap(S, spec, mn, B).value
    K = kernel_basis(S)
    rng = np.random.default_rng(2)
    r = np.sqrt(max(B * B - mn.norm ** 2, 0.0))
    for _ in range(100):
        u = K.F @ rng.standard_normal(S.p - S.n)
        u *= r * rng.uniform() ** (1 / (S.p - S.n)) / max(np.linalg.norm(u), 1e-300)
        assert population_risk(mn.w + u, spec) <= value * (1 + 1e-10)


def test_general_diagonal_covariance():
    rng = np.random.default_rng(8)
    for _ in range(30):
        n, k = int(rng.integers(1, 8)), int(rng.integers(1, 8))
        p = n + k
        diag = rng.uniform(0.1, 3.0, p)
        spec = ProblemSpec(2, p - 2, 1.0, 0.7, rng.standard_normal(2))
        cov = CovarianceView.from_diag(diag, d_S=2)
        X = rng.standard_normal((n, p)) * np.sqrt(diag)
        E = rng.standard_normal(n) * np.sqrt(0.7)
        S = SampleSet(X, X @ spec.w_star + E, E, 2)
        mn = min_norm(S)
        ref = primal_gap(X, S.Y, np.diag(diag), spec.w_star, 0.7, 1.7 * mn.norm)
        got = worst_case_gap(S, spec, mn, 1.7 * mn.norm, cov=cov)
        assert got.method == "dense"
        assert got.value == pytest.approx(ref, rel=1e-8)
        with pytest.raises(ValueError):
            worst_case_gap(S, spec, mn, 1.7 * mn.norm, cov=cov, method="structured")


@given(problems(max_n=8, max_kernel=8, sigma2_zero=False))
def test_dual_objective_is_convex(inst):
    spec, S = inst
    mn = min_norm(S)
    sp = dual_spectrum(S, spec, mn.w, method="dense")
    e = 0.5 * mn.norm ** 2
    rng = np.random.default_rng(4)
    for _ in range(50):
        x, y = sp.kappa + rng.exponential(1.0, 2) + 1e-6
        mid = 0.5 * (x + y)
        lhs = _phi(mid, sp, e)
        rhs = 0.5 * (_phi(x, sp, e) + _phi(y, sp, e))
        assert lhs <= rhs + 1e-9 * (abs(rhs) + 1)


@given(problems(max_n=8, max_kernel=8))
def test_gap_monotone_and_continuous_in_budget(inst):
    spec, S = inst
    mn = min_norm(S)
    Bs = mn.norm * np.linspace(1.0, 3.0, 25)
    vals = [worst_case_gap(S, spec, mn, B).value for B in Bs]
    assert all(b >= a * (1 - 1e-12) for a, b in zip(vals, vals[1:]))
    for B, v in zip(Bs[::6], vals[::6]):
        nudged = worst_case_gap(S, spec, mn, B * (1 + 1e-10)).value
        assert abs(nudged - v) <= 1e-3 * v


def test_hard_case_returns_pole():
    # Sigma = I, no signal, no noise: every kernel direction is on the top eigenspace
    spec = ProblemSpec(0, 6, 6.0, 0.0)
    S = sample_dataset(spec, 3, seed=1)
    mn = min_norm(S)
    assert mn.norm == 0.0
    r = worst_case_gap(S, spec, mn, 2.0)
    assert r.hard_case
    assert r.lambda_star == pytest.approx(1.0)
    assert r.value == pytest.approx(4.0, rel=1e-12)
    ref = primal_gap(S.X, S.Y, np.eye(6), np.zeros(6), 0.0, 2.0)
    assert ref == pytest.approx(4.0, rel=1e-12)


def test_gap_preconditions():
    spec, S = _instance_a()
    mn = min_norm(S)
    with pytest.raises(PreconditionError):
        worst_case_gap(S, spec, mn.w + 0.1, 10.0)
    with pytest.raises(PreconditionError):
        worst_case_gap(S, spec, mn, 0.9 * mn.norm)
    with pytest.raises(DimensionError):
        worst_case_gap(S, spec, np.zeros(4), 1.0)
    with pytest.raises(InfeasibleBudgetError):
        gap_decomposition_ball(S, spec, 0.5 * mn.norm)
    big = sample_dataset(ProblemSpec(1, 5, 1.0, 1.0, [1.0]), 2, seed=0)
    with pytest.raises(UnsupportedDimensionError):
        brute_force_gap_oracle(big, ProblemSpec(1, 5, 1.0, 1.0, [1.0]), np.zeros(6), 5.0)


def test_singleton_budget_equals_anchor_risk_exactly():
    spec, S = _instance_a()
    mn = min_norm(S)
    r = worst_case_gap(S, spec, mn, mn.norm)
    assert r.value == population_risk(mn.w, spec)
    assert brute_force_gap_oracle(S, spec, spec.w_star, mn.norm) == pytest.approx(0.76, rel=1e-12)


# -------------------------------------------------------------- decompositions


@given(problems(max_n=15, max_kernel=15, sigma2_zero=False))
def test_mr_decomposition(inst):
    spec, S = inst
    d = gap_decomposition_mr(S, spec, method="dense")
    assert d.orthogonality <= 1e-8
    if not d.degenerate:
        slack = 1e-9 * (1 + d.value) / (d.result.kappa * (d.result.excess_budget + 1e-300))
        assert 1 - slack <= d.gamma_n <= 4 + slack
    if S.p - S.n == 1 and not d.degenerate:
        assert d.gamma_n == pytest.approx(4.0, rel=1e-9)


def test_mr_decomposition_zero_noise():
    spec = ProblemSpec(2, 6, 3.0, 0.0, [1.0, 2.0])
    S = sample_dataset(spec, 4, seed=3)
    d = gap_decomposition_mr(S, spec)
    np.testing.assert_allclose(min_risk(S, spec).w, spec.w_star, atol=1e-12)
    assert d.result.anchor_risk == pytest.approx(0.0, abs=1e-20)
    expect = d.result.kappa * d.gamma_n * (spec.w_star_norm2 - min_norm(S).norm ** 2)
    assert d.value == pytest.approx(expect, rel=1e-10)


@given(problems(max_n=15, max_kernel=15), st.floats(1.0, 3.0))
def test_ball_decomposition(inst, alpha):
    spec, S = inst
    mn = min_norm(S)
    d = gap_decomposition_ball(S, spec, alpha * mn.norm)
    tol = 1e-10 * (1 + d.value)
    assert -tol <= d.remainder <= d.remainder_bound + tol
    assert d.kernel_residual <= 1e-8 * (1 + mn.norm)
    k = d.result.kappa
    rebuilt = population_risk(mn.w, spec) + k * ((alpha * mn.norm) ** 2 - mn.norm ** 2) + d.remainder
    assert rebuilt == pytest.approx(d.value, rel=1e-10)


def test_ball_decomposition_at_minimum_norm():
    spec, S = _instance_a()
    mn = min_norm(S)
    d = gap_decomposition_ball(S, spec, mn.norm)
    assert d.remainder == 0.0 and d.value == population_risk(mn.w, spec)


# ---------------------------------------------------------- ball lower bounds


@given(problems(max_n=20, max_kernel=20, sigma2_zero=False))
def test_ball_witness_attains_one_sided_bound(inst):
    spec, S = inst
    bound = ball_gap_lower_bound(S, spec, method="dense")
    w = ball_gap_witness(S, spec)
    mn = min_norm(S)
    assert np.linalg.norm(w - spec.w_star) == pytest.approx(abs(mn.norm - np.sqrt(spec.w_star_norm2)),
                                                             rel=1e-9, abs=1e-12)
    gap = population_risk(w, spec) - empirical_risk(w, S)
    assert gap >= bound.one_sided - 1e-9 * (1 + abs(bound.one_sided))
    assert bound.two_sided <= max(abs(bound.one_sided), bound.two_sided)


def test_ball_bound_with_matched_norm_is_noise_term():
    spec = ProblemSpec(2, 8, 3.0, 1.0, [0.6, 0.8])
    S = sample_dataset(spec, 5, seed=6)
    fake = make_predictor(spec.w_star, S, "custom")
    b = ball_gap_lower_bound(S, spec, mn=fake)
    assert b.one_sided == pytest.approx(1.0 - S.E @ S.E / 5, rel=1e-12)
    assert b.two_sided == pytest.approx(-abs(1.0 - S.E @ S.E / 5), rel=1e-12)


def test_two_sided_bound_grows_with_n():
    from interpgap.rng import substream
    means = []
    for n in (50, 100, 200, 400):
        spec = ProblemSpec(1, 10 * n, np.sqrt(n), 1.0, [1.0])
        vals = [ball_gap_lower_bound(S, spec, method="lowrank").two_sided
                for S in (sample_dataset(spec, n, substream(77, t, n)) for t in range(30))]
        means.append(np.mean(vals))
    assert means == sorted(means) and len(set(means)) == 4


# ------------------------------------------------------------ classical bounds


def test_classical_bounds():
    spec = ProblemSpec(2, 100, 400.0, 1.5)
    assert classical_bounds(0.0, spec, 50, 0.3) == (0.0, 0.0, 0.0)
    B2 = 1.5 * 50 / 400.0
    rad, star, kap = classical_bounds(np.sqrt(B2), spec, 50, 0.3)
    assert rad == pytest.approx(np.sqrt(1.5) * np.sqrt(1 + 2 / 400), rel=1e-12)
    assert star == pytest.approx(rad ** 2)
    assert kap == pytest.approx(0.3 * B2)
    with pytest.raises(ValueError):
        classical_bounds(-1.0, spec, 50, 0.3)


def test_star_kappa_tracks_min_norm_risk():
    from interpgap.rng import substream
    spec = ProblemSpec(1, 20_000, np.sqrt(200), 1.0, [1.0])
    ratios = []
    for t in range(10):
        S = sample_dataset(spec, 200, substream(3, t))
        mn = min_norm(S)
        kappa = restricted_eigenvalue(KernelView(S, "matrix-free"), spec, method="structured")
        ratios.append(classical_bounds(mn.norm, spec, 200, kappa).star_kappa / population_risk(mn.w, spec))
    assert abs(np.mean(ratios) - 1) <= 0.1


def test_high_probability_row_norm_bound():
    from interpgap.rng import substream
    spec = ProblemSpec(3, 50, 10.0, 1.0)
    xi = max_sq_norm_bound(spec, 40, 0.05)
    hits = sum(np.max(np.sum(sample_dataset(spec, 40, substream(9, t)).X ** 2, axis=1)) <= xi
               for t in range(400))
    assert hits / 400 >= 0.95
    assert star_bound_high_prob(2.0, spec, 40, 0.05) == pytest.approx(4 * xi / 40)
    with pytest.raises(ValueError):
        max_sq_norm_bound(spec, 40, 1.5)
