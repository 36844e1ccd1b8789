"""Worst-case generalization gap of norm-bounded interpolators.

The supremum of ``L_D(w)`` over interpolators with ``||w|| <= B`` is a
quadratic maximisation under one quadratic constraint. Strong duality turns it
into a convex one-dimensional problem over ``lam > kappa``::

    value = L_D(w_hat) + inf_lam  g(lam)^T (lam I - F^T Sigma F)^{-1} g(lam)
                                  + lam (B^2 - ||w_hat||^2),
    g(lam) = F^T (lam w_hat - Sigma (w_hat - w*)),

with ``F`` an orthonormal basis of ``ker X`` and ``kappa = ||F^T Sigma F||``.

The dual only needs the spectrum of ``F^T Sigma F`` and the coordinates of
``F^T w_hat`` and ``F^T Sigma (w_hat - w*)`` in its eigenbasis. Two builders
produce that summary: a dense one (explicit ``F``) and a structured one for
two-level diagonal covariances, which works in ``O(n^2 p)`` without ``F``.
"""

from dataclasses import dataclass, field
from typing import NamedTuple, Optional

import numpy as np
import scipy.linalg as sla
from scipy.optimize import brentq, minimize_scalar

from .errors import (DimensionError, DomainError, InfeasibleBudgetError, NumericalError,
                     PreconditionError, RankError, UnsupportedDimensionError)
from .interpolators import Predictor, min_norm, min_risk
from .linalg import lanczos_extreme, power_iteration
from .model import DENSE_CEILING, ProblemSpec, SampleSet, population_risk, resolve_cov
from .model import top_deviation_direction, cov_deviation_norms, empirical_risk

INTERP_TOL = 1e-8


# --------------------------------------------------------------------------- kernel


@dataclass(frozen=True, eq=False)
class KernelView:
    """The null space of ``X``: an explicit basis (dense) or a projector (matrix-free)."""

    S: SampleSet
    mode: str
    F: Optional[np.ndarray] = None

    def project(self, v):
        """Orthogonal projection onto ``ker X``: ``v - X^T (X X^T)^{-1} X v``."""
        v = np.asarray(v, dtype=float)
        if self.S.n == 0:
            return v.copy()
        X = self.S.X
        return v - X.T @ self.S.gram.solve(X @ v)

    @property
    def dim(self) -> int:
        return self.S.p - self.S.n


def kernel_basis(S: SampleSet, mode: str = "dense", dense_ceiling: int = DENSE_CEILING) -> KernelView:
    if not S.n < S.p:
        raise PreconditionError(f"kernel of X is trivial-or-undefined for n={S.n} >= p={S.p}")
    if mode == "matrix-free":
        if S.n:
            S.gram  # surfaces RankError now rather than on first use
        return KernelView(S, mode)
    if mode != "dense":
        raise ValueError(f"unknown kernel mode {mode!r}")
    if S.p > dense_ceiling:
        raise DimensionError(f"dense kernel basis refused for p={S.p} > {dense_ceiling}")
    if S.n == 0:
        return KernelView(S, mode, np.eye(S.p))
    _, s, Vt = np.linalg.svd(S.X, full_matrices=True)
    tol = max(S.X.shape) * np.finfo(float).eps * s[0]
    rank = int((s > tol).sum())
    if rank < S.n:
        raise RankError(f"X has numerical rank {rank} < n={S.n}")
    F = Vt[S.n:].T.copy()
    F.setflags(write=False)
    return KernelView(S, mode, F)


# ------------------------------------------------------------------ spectral summary


@dataclass(frozen=True)
class DualSpectrum:
    """Pole groups of the dual objective.

    Group ``k`` is an eigenspace of ``F^T Sigma F`` with eigenvalue ``mu[k]``
    and multiplicity ``mult[k]``; ``A = ||a_k||^2``, ``C = <a_k, c_k>``,
    ``N = ||mu_k a_k + c_k||^2`` where ``a``/``c`` are the eigenspace
    components of ``F^T w_hat`` and ``-F^T Sigma (w_hat - w*)``.
    """

    mu: np.ndarray
    mult: np.ndarray
    A: np.ndarray
    C: np.ndarray
    N: np.ndarray

    @property
    def kappa(self) -> float:
        live = self.mult > 0
        return float(self.mu[live].max()) if live.any() else 0.0


def _dense_spectrum(K: KernelView, cov, anchor, w_star) -> DualSpectrum:
    F = K.F
    M = F.T @ cov.apply(F)
    mu, Q = np.linalg.eigh((M + M.T) / 2)
    a = Q.T @ (F.T @ anchor)
    c = -Q.T @ (F.T @ cov.apply(anchor - w_star))
    return DualSpectrum(mu, np.ones(mu.size, dtype=int), a * a, a * c, (mu * a + c) ** 2)


def _structured_parts(S: SampleSet, cov):
    """Eigen-structure of ``P Sigma P`` for ``Sigma = b I + (a - b) E_S E_S^T``.

    With ``H = P E_S`` and ``H^T H = Q diag(s) Q^T``, the kernel splits into the
    directions ``u_j = H q_j / sqrt(s_j)`` (eigenvalue ``b + (a - b) s_j``) and
    their complement in ``ker X`` (eigenvalue ``b``).
    """
    a_lvl, b_lvl = cov.two_level()
    d_S, n, p = S.d_S, S.n, S.p
    if d_S == 0 or a_lvl == b_lvl:
        return b_lvl, np.zeros(0), np.zeros((p, 0))
    H = np.zeros((p, d_S))
    H[:d_S] = np.eye(d_S)
    if n:
        H -= S.X.T @ S.gram.solve(S.X_S)
    HtH = H[:d_S]  # rows of the signal block: E_S^T P E_S
    s, Q = np.linalg.eigh((HtH + HtH.T) / 2)
    keep = s > 1e-12
    s, Q = s[keep], Q[:, keep]
    U = (H @ Q) / np.sqrt(s)
    return b_lvl, b_lvl + (a_lvl - b_lvl) * s, U


def _structured_spectrum(S: SampleSet, cov, anchor, w_star) -> DualSpectrum:
    K = KernelView(S, "matrix-free")
    b, mu_sig, U = _structured_parts(S, cov)
    av = K.project(anchor)
    cv = -K.project(cov.apply(anchor - w_star))
    alpha, gamma = U.T @ av, U.T @ cv
    ar, cr = av - U @ alpha, cv - U @ gamma
    rest_mult = (S.p - S.n) - mu_sig.size
    mu = np.append(mu_sig, b)
    mult = np.append(np.ones(mu_sig.size, dtype=int), max(rest_mult, 0))
    A = np.append(alpha * alpha, ar @ ar)
    C = np.append(alpha * gamma, ar @ cr)
    top = b * ar + cr
    N = np.append((mu_sig * alpha + gamma) ** 2, top @ top)
    if rest_mult <= 0:
        A[-1] = C[-1] = N[-1] = 0.0
    return DualSpectrum(mu, mult, A, C, N)


def _pick_method(S, cov, method):
    if method == "auto":
        return "structured" if cov.two_level() is not None else "dense"
    if method not in ("dense", "structured"):
        raise ValueError(f"unknown gap method {method!r}")
    if method == "structured" and cov.two_level() is None:
        raise ValueError("structured gap path needs a two-level covariance")
    return method


def dual_spectrum(S: SampleSet, spec: ProblemSpec, anchor, *, cov=None, method="auto",
                  kernel: Optional[KernelView] = None) -> DualSpectrum:
    cov = resolve_cov(spec, cov)
    method = _pick_method(S, cov, method)
    anchor = np.asarray(anchor, dtype=float)
    if method == "dense":
        K = kernel if kernel is not None and kernel.F is not None else kernel_basis(S, "dense")
        return _dense_spectrum(K, cov, anchor, spec.w_star)
    return _structured_spectrum(S, cov, anchor, spec.w_star)


# ---------------------------------------------------------------- restricted eigenvalue


def restricted_eigenvalue(K: KernelView, spec: ProblemSpec, *, cov=None, method=None,
                          tol=1e-10, max_iter=10_000) -> float:
    """``kappa = sup { w^T Sigma w : ||w|| = 1, X w = 0 } = ||F^T Sigma F||``.

    ``method`` defaults to ``"dense"`` for a dense view and ``"lanczos"`` for a
    matrix-free one. ``"power"`` runs power iteration on ``v -> P Sigma P v``;
    ``"structured"`` is exact for two-level covariances.
    """
    S = K.S
    S.check_spec(spec)
    cov = resolve_cov(spec, cov)
    if S.n == 0:
        return cov.norm
    method = method or ("dense" if K.mode == "dense" else "lanczos")
    if method == "dense":
        F = K.F if K.F is not None else kernel_basis(S, "dense").F
        return float(np.linalg.eigvalsh(F.T @ cov.apply(F))[-1])
    if method == "structured":
        if cov.two_level() is None:
            raise ValueError("structured restricted eigenvalue needs a two-level covariance")
        b, mu_sig, _ = _structured_parts(S, cov)
        live = list(mu_sig)
        if S.p - S.n > mu_sig.size:
            live.append(b)
        return float(max(live))
    if method not in ("power", "lanczos"):
        raise ValueError(f"unknown method {method!r}")

    def op(v):
        u = K.project(v)
        return K.project(cov.apply(u))

    if method == "lanczos":
        return lanczos_extreme(op, S.p, which="LA", tol=tol * 1e-2)[0]

    x0 = K.project(np.random.default_rng(0x5EED).standard_normal(S.p))
    try:
        val, _, _ = power_iteration(op, S.p, x0=x0, tol=tol, max_iter=max_iter)
    except NumericalError as exc:
        raise NumericalError(f"restricted_eigenvalue: {exc}", exc.diagnostics) from exc
    return float(val)


def kappa_limit_formula(S: SampleSet, spec: ProblemSpec) -> float:
    """Large-``d_J`` limit of the restricted eigenvalue:
    ``(lam/n) || (X_S^T X_S / n + (lam/n) I)^{-1} ||``."""
    if S.d_S < 1:
        raise DomainError("limit formula needs d_S >= 1")
    r = spec.lam / S.n
    rho_min = np.linalg.eigvalsh(S.X_S.T @ S.X_S / S.n)[0]
    return float(r / (rho_min + r))


# ----------------------------------------------------------------------- dual solver


class DualSolution(NamedTuple):
    inf_value: float
    lambda_star: float
    hard_case: bool


def _phi(lmb, sp: DualSpectrum, e):
    # N/(l - mu) + A (l + mu) + 2C equals ||l a + c||^2 / (l - mu) without the pole cancellation
    with np.errstate(divide="ignore", invalid="ignore"):
        pole = np.where(sp.N > 0, sp.N / (lmb - sp.mu), 0.0)
    return float(np.sum(pole + sp.A * (lmb + sp.mu) + 2.0 * sp.C) + lmb * e)


def _dphi(lmb, sp: DualSpectrum, e):
    with np.errstate(divide="ignore", invalid="ignore"):
        pole = np.where(sp.N > 0, sp.N / (lmb - sp.mu) ** 2, 0.0)
    return float(np.sum(sp.A - pole) + e)


def solve_dual(sp: DualSpectrum, excess: float, hard_tol=1e-10) -> DualSolution:
    """Minimise the dual objective over ``lam > kappa``.

    The objective is convex there, so its minimiser is the root of the
    (increasing) derivative, bracketed analytically and refined by Brent.
    """
    live = sp.mult > 0
    sp = DualSpectrum(sp.mu[live], sp.mult[live], sp.A[live], sp.C[live], sp.N[live])
    kappa = sp.kappa
    e = max(float(excess), 0.0)
    A_tot, N_tot = float(sp.A.sum()), float(sp.N.sum())
    top = sp.mu >= kappa - 1e-14 * max(abs(kappa), 1.0)
    hard = bool(np.sqrt(sp.N[top].sum()) <= hard_tol * (1.0 + np.sqrt(N_tot)))
    if hard:
        N = sp.N.copy()
        N[top] = 0.0
        sp = DualSpectrum(sp.mu, sp.mult, sp.A, sp.C, N)
        N_tot = float(N.sum())
        lo = kappa
    else:
        lo = kappa + 1e-10 * (1.0 + abs(kappa))
    slope = A_tot + e
    if slope <= 0.0:
        # F^T w_hat = 0 and no spare budget: the objective decreases to its limit sum(2C) = 0
        return DualSolution(float(np.sum(2.0 * sp.C)), np.inf, hard)
    if _dphi(lo, sp, e) >= 0.0:
        return DualSolution(_phi(lo, sp, e), lo, hard)
    # phi'(l) >= slope - N_tot / (l - kappa)^2, so this hi has phi'(hi) > 0
    hi = kappa + 1.01 * np.sqrt(N_tot / slope) + (lo - kappa)
    for _ in range(200):
        if _dphi(hi, sp, e) > 0.0:
            break
        hi = kappa + 2.0 * (hi - kappa)
    else:
        raise NumericalError("dual bracket expansion failed",
                             {"kappa": kappa, "hi": hi, "slope": slope, "N_tot": N_tot})
    lam = brentq(_dphi, lo, hi, args=(sp, e), xtol=1e-15 * hi, rtol=4 * np.finfo(float).eps,
                 maxiter=500)
    return DualSolution(_phi(lam, sp, e), float(lam), hard)


# ---------------------------------------------------------------------- public gap API


@dataclass(frozen=True)
class GapResult:
    value: float
    lambda_star: float
    kappa: float
    anchor_risk: float
    excess_budget: float
    remainder: Optional[float] = None
    hard_case: bool = False
    method: str = ""
    extra: dict = field(default_factory=dict)
    increment: Optional[float] = None  # value - anchor_risk, computed without cancellation

    def __post_init__(self):
        if self.increment is None:
            object.__setattr__(self, "increment", self.value - self.anchor_risk)


def _anchor_vector(anchor):
    return np.asarray(anchor.w if isinstance(anchor, Predictor) else anchor, dtype=float)


def worst_case_gap(S: SampleSet, spec: ProblemSpec, anchor, B: float, *, cov=None,
                   method: str = "auto", kernel: Optional[KernelView] = None) -> GapResult:
    """Exact ``sup { L_D(w) - L_S(w) : X w = Y, ||w|| <= B }`` through the 1-D dual.

    ``anchor`` is any interpolator (a ``Predictor`` or a vector) with
    ``||anchor|| <= B``. ``method``: ``"dense"``, ``"structured"`` or ``"auto"``.
    """
    S.check_spec(spec)
    cov = resolve_cov(spec, cov)
    w = _anchor_vector(anchor)
    if w.shape != (S.p,):
        raise DimensionError(f"anchor has shape {w.shape}, expected ({S.p},)")
    resid = np.linalg.norm(S.X @ w - S.Y)
    if resid > INTERP_TOL * (1.0 + np.linalg.norm(S.Y)):
        raise PreconditionError(f"anchor does not interpolate (||Xw - Y|| = {resid:.3e})")
    norm2 = float(w @ w)
    excess = B * B - norm2
    if excess < -8 * np.finfo(float).eps * max(B * B, 1.0):
        raise PreconditionError(f"anchor norm {np.sqrt(norm2):.6g} exceeds budget B={B:.6g}")
    if abs(excess) <= 8 * np.finfo(float).eps * max(B * B, 1.0):
        excess = 0.0
    method = _pick_method(S, cov, method)
    anchor_risk = population_risk(w, spec, cov)
    sp = dual_spectrum(S, spec, w, cov=cov, method=method, kernel=kernel)
    kappa = sp.kappa
    if excess == 0.0 and sp.A[sp.mult > 0].sum() <= 1e-24 * max(norm2, 1.0):
        # feasible set is the single point w_hat
        return GapResult(anchor_risk, kappa, kappa, anchor_risk, 0.0, method=method, increment=0.0)
    sol = solve_dual(sp, excess)
    return GapResult(anchor_risk + sol.inf_value, sol.lambda_star, kappa, anchor_risk, excess,
                     hard_case=sol.hard_case, method=method, increment=sol.inf_value)


def brute_force_gap_oracle(S: SampleSet, spec: ProblemSpec, w_star, B: float, *, cov=None,
                           grid: int = 10_000) -> float:
    """Primal maximum of ``L_D`` over interpolators in the ``B``-ball, for ``p - n <= 2``.

    Independent of the dual machinery: the kernel basis comes from
    ``scipy.linalg.null_space`` and the minimum-norm point from ``lstsq``.
    Over ``u`` with ``||u||^2 <= B^2 - ||w_mn||^2`` the objective is a convex
    quadratic, so the maximum is found on the boundary (endpoints for one
    dimension, an angle grid plus bounded refinement for two).
    """
    cov = resolve_cov(spec, cov)
    k = S.p - S.n
    if k > 2:
        raise UnsupportedDimensionError(f"oracle handles p - n <= 2, got {k}")
    if k < 1:
        raise PreconditionError("oracle needs n < p")
    w_star = np.asarray(w_star, dtype=float)
    F = sla.null_space(S.X)
    if F.shape[1] != k:
        raise RankError(f"X has a {F.shape[1]}-dimensional kernel, expected {k}")
    w_mn = np.linalg.lstsq(S.X, S.Y, rcond=None)[0]
    r2 = B * B - float(w_mn @ w_mn)
    if r2 < -1e-12 * max(B * B, 1.0):
        raise InfeasibleBudgetError("budget below the minimum-norm interpolator")
    # same rounding convention as worst_case_gap: a budget within a few ulps of
    # ||w_mn|| is the singleton
    r = np.sqrt(r2) if r2 > 8 * np.finfo(float).eps * max(B * B, 1.0) else 0.0
    d = w_mn - w_star
    M = F.T @ cov.apply(F)
    lin = F.T @ cov.apply(d)
    base = spec.sigma2 + cov.quad(d)

    def f(u):
        return base + 2.0 * lin @ u + u @ M @ u

    if r == 0.0:
        return float(base)
    if k == 1:
        q, l = M[0, 0], lin[0]
        cands = [np.array([r]), np.array([-r])]
        if q > 0 and abs(l / q) <= r:
            cands.append(np.array([-l / q]))
        return float(max(f(u) for u in cands))

    th = np.linspace(0.0, 2 * np.pi, grid, endpoint=False)
    U = r * np.stack([np.cos(th), np.sin(th)])
    vals = base + 2.0 * lin @ U + np.einsum("ij,ik,kj->j", U, M, U)
    i = int(np.argmax(vals))
    h = 2 * np.pi / grid

    def neg(t):
        return -f(r * np.array([np.cos(t), np.sin(t)]))

    res = minimize_scalar(neg, bounds=(th[i] - h, th[i] + h), method="bounded",
                          options={"xatol": 1e-10})
    return float(max(vals[i], -res.fun))


# -------------------------------------------------------------------- decompositions


class MRDecomposition(NamedTuple):
    value: float
    gamma_n: float
    degenerate: bool
    orthogonality: float   # ||F^T Sigma (w_mr - w*)||
    result: GapResult


def gap_decomposition_mr(S: SampleSet, spec: ProblemSpec, *, cov=None, method="auto") -> MRDecomposition:
    """Worst-case gap over interpolators no longer than the minimal-risk one.

    ``gamma_n = (value - L_D(w_mr)) / (kappa (||w_mr||^2 - ||w_mn||^2))``. Both
    differences are formed without cancellation: the numerator comes from the
    dual directly and the denominator is ``kappa ||w_mr - w_mn||^2`` (the two
    differ by a kernel vector orthogonal to ``w_mn``). Flagged degenerate when
    ``||w_mr - w_mn|| <= 1e-9 ||w_mr||``, where rounding decides the ratio.
    """
    cov = resolve_cov(spec, cov)
    mr = min_risk(S, spec, cov)
    mn = min_norm(S)
    res = worst_case_gap(S, spec, mr, mr.norm, cov=cov, method=method)
    K = KernelView(S, "matrix-free")
    ortho = float(np.linalg.norm(K.project(cov.apply(mr.w - spec.w_star))))
    shift = float(np.linalg.norm(mr.w - mn.w))
    degenerate = res.kappa <= 0.0 or shift <= 1e-9 * mr.norm
    gamma = float("nan") if degenerate else res.increment / (res.kappa * shift * shift)
    return MRDecomposition(res.value, gamma, degenerate, ortho, res)


class BallDecomposition(NamedTuple):
    value: float
    remainder: float
    remainder_bound: float
    kernel_residual: float  # ||F^T w_mn||
    result: GapResult


def gap_decomposition_ball(S: SampleSet, spec: ProblemSpec, B: float, *, cov=None,
                           method="auto", anchor: Optional[Predictor] = None) -> BallDecomposition:
    """Worst-case gap in the ``B``-ball split as ``L_D(w_mn) + kappa (B^2 - ||w_mn||^2) + R``."""
    cov = resolve_cov(spec, cov)
    mn = anchor if anchor is not None else min_norm(S)
    if B < mn.norm * (1 - 1e-12):
        raise InfeasibleBudgetError(f"B={B:.6g} is below ||w_mn||={mn.norm:.6g}")
    B = max(B, mn.norm)
    res = worst_case_gap(S, spec, mn, B, cov=cov, method=method)
    extra = res.kappa * (B * B - mn.norm ** 2)
    remainder = res.increment - extra
    bound = 2.0 * np.sqrt(max(res.anchor_risk - spec.sigma2, 0.0) * extra)
    kres = float(np.linalg.norm(KernelView(S, "matrix-free").project(mn.w)))
    res = GapResult(res.value, res.lambda_star, res.kappa, res.anchor_risk, res.excess_budget,
                    remainder, res.hard_case, res.method, increment=res.increment)
    return BallDecomposition(res.value, remainder, float(bound), kres, res)


# ------------------------------------------------------------------ norm-ball bounds


class BallGapBound(NamedTuple):
    one_sided: float
    two_sided: float


def ball_gap_lower_bound(S: SampleSet, spec: ProblemSpec, *, cov=None, method="lowrank",
                         mn: Optional[Predictor] = None) -> BallGapBound:
    """Lower bounds on the (one- and two-sided) gap over the ball ``||w|| <= ||w_mn||``."""
    cov = resolve_cov(spec, cov)
    mn = mn if mn is not None else min_norm(S)
    dev = cov_deviation_norms(S, spec, method=method, cov=cov)
    radius2 = (mn.norm - np.sqrt(spec.w_star_norm2)) ** 2
    noise_gap = spec.sigma2 - float(S.E @ S.E) / S.n
    return BallGapBound(dev.rho * radius2 + noise_gap, dev.opnorm * radius2 - abs(noise_gap))


def ball_gap_witness(S: SampleSet, spec: ProblemSpec, *, cov=None, mn=None) -> np.ndarray:
    """``w* +/- (||w_mn|| - ||w*||) v`` with ``v`` the top eigenvector of ``Sigma - Sigma_hat``;
    the sign makes the cross term non-negative."""
    cov = resolve_cov(spec, cov)
    mn = mn if mn is not None else min_norm(S)
    v = top_deviation_direction(S, spec, cov=cov)
    step = (mn.norm - np.sqrt(spec.w_star_norm2)) * v
    if float(S.E @ (S.X @ step)) < 0:
        step = -step
    return spec.w_star + step


def generalization_gap(w, S: SampleSet, spec: ProblemSpec, cov=None) -> float:
    return population_risk(w, spec, cov) - empirical_risk(w, S)


class ClassicalBounds(NamedTuple):
    rademacher: float
    star_trace: float
    star_kappa: float


def classical_bounds(B: float, spec: ProblemSpec, n: int, kappa: float) -> ClassicalBounds:
    """Norm-ball Rademacher bound ``sqrt(B^2 tr(Sigma) / n)`` and the two
    speculative interpolation bounds ``B^2 tr(Sigma) / n`` and ``kappa B^2``."""
    if B < 0:
        raise ValueError("B must be non-negative")
    tr = spec.trace_sigma
    return ClassicalBounds(float(np.sqrt(B * B * tr / n)), float(B * B * tr / n),
                           float(kappa * B * B))


def max_sq_norm_bound(spec: ProblemSpec, n: int, delta: float) -> float:
    """High-probability bound on ``max_i ||x_i||^2`` (Laurent-Massart tail plus a union bound)."""
    if not 0 < delta < 1:
        raise ValueError("delta must lie in (0, 1)")
    weights2 = spec.d_S + (spec.lam ** 2 / spec.d_J if spec.d_J else 0.0)
    wmax = max(1.0 if spec.d_S else 0.0, spec.junk_var if spec.d_J else 0.0)
    x = np.log(n / delta)
    return float(spec.trace_sigma + 2 * np.sqrt(weights2 * x) + 2 * wmax * x)


def star_bound_high_prob(B: float, spec: ProblemSpec, n: int, delta: float = 0.05) -> float:
    """``B^2 xi_n / n`` with ``xi_n`` the high-probability bound on ``max ||x_i||^2``."""
    return float(B * B * max_sq_norm_bound(spec, n, delta) / n)
