"""Junk-features Gaussian regression model: sampling, risks, covariance views.

The covariance is block diagonal, ``I`` on the ``d_S`` signal coordinates and
``(lam / d_J) I`` on the ``d_J`` junk coordinates. It is never formed as a
``p x p`` matrix; everything works on its diagonal.
"""

from dataclasses import dataclass, field
from functools import cached_property
from typing import NamedTuple

import numpy as np

from .errors import DimensionError, NumericalError
from .linalg import GramFactor, lanczos_extreme, power_iteration
from .rng import substream

DENSE_CEILING = 4000


def default_junk_dim(n: int) -> int:
    """Junk dimension used to stand in for the ``d_J -> infinity`` limit."""
    return max(10 * n, 10_000)


def _readonly(a):
    a = np.array(a, dtype=float)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class ProblemSpec:
    """Data-generating law of the junk-features model.

    ``lam`` is the total junk energy: each junk coordinate has variance
    ``lam / d_J``, so ``tr(Sigma) = d_S + lam``.
    """

    d_S: int
    d_J: int
    lam: float
    sigma2: float
    w_star_S: np.ndarray = field(default=None)

    def __post_init__(self):
        if self.d_S < 0 or self.d_J < 0:
            raise DimensionError("d_S and d_J must be non-negative")
        if self.d_S + self.d_J == 0:
            raise DimensionError("p = d_S + d_J must be positive")
        if not self.lam > 0:
            raise ValueError(f"lam must be > 0, got {self.lam}")
        if not self.sigma2 >= 0:
            raise ValueError(f"sigma2 must be >= 0, got {self.sigma2}")
        w = np.zeros(self.d_S) if self.w_star_S is None else np.ravel(self.w_star_S)
        if w.shape != (self.d_S,):
            raise DimensionError(f"w_star_S has length {w.size}, expected d_S={self.d_S}")
        object.__setattr__(self, "d_S", int(self.d_S))
        object.__setattr__(self, "d_J", int(self.d_J))
        object.__setattr__(self, "lam", float(self.lam))
        object.__setattr__(self, "sigma2", float(self.sigma2))
        object.__setattr__(self, "w_star_S", _readonly(w))

    @property
    def p(self) -> int:
        return self.d_S + self.d_J

    @property
    def junk_var(self) -> float:
        return self.lam / self.d_J if self.d_J else float("nan")

    @property
    def w_star(self) -> np.ndarray:
        return np.concatenate([self.w_star_S, np.zeros(self.d_J)])

    @property
    def w_star_norm2(self) -> float:
        return float(self.w_star_S @ self.w_star_S)

    @property
    def trace_sigma(self) -> float:
        """``E ||x||^2``."""
        return self.d_S + (self.lam if self.d_J else 0.0)

    def with_(self, **changes) -> "ProblemSpec":
        kw = dict(d_S=self.d_S, d_J=self.d_J, lam=self.lam, sigma2=self.sigma2,
                  w_star_S=self.w_star_S)
        kw.update(changes)
        return ProblemSpec(**kw)

    def covariance(self, mode: str = "matrix-free") -> "CovarianceView":
        diag = np.concatenate([np.ones(self.d_S), np.full(self.d_J, self.junk_var)])
        return CovarianceView(diag, d_S=self.d_S, mode=mode)

    def as_dict(self) -> dict:
        return {"d_S": self.d_S, "d_J": self.d_J, "lambda": self.lam,
                "sigma2": self.sigma2, "w_star_S": [float(v) for v in self.w_star_S]}


@dataclass(frozen=True, eq=False)
class CovarianceView:
    """A positive diagonal covariance with O(p) actions.

    ``d_S`` marks where the signal block ends; it only matters for the
    two-level structure used by the fast gap and deviation routines.
    """

    diag: np.ndarray
    d_S: int = 0
    mode: str = "matrix-free"
    dense_ceiling: int = DENSE_CEILING

    def __post_init__(self):
        d = _readonly(np.ravel(self.diag))
        if d.size == 0 or not np.all(d > 0):
            raise ValueError("covariance diagonal must be non-empty and strictly positive")
        if not 0 <= self.d_S <= d.size:
            raise DimensionError("d_S outside [0, p]")
        if self.mode not in ("dense", "matrix-free"):
            raise ValueError(f"unknown covariance mode {self.mode!r}")
        if self.mode == "dense" and d.size > self.dense_ceiling:
            raise DimensionError(f"dense covariance refused for p={d.size} > {self.dense_ceiling}")
        object.__setattr__(self, "diag", d)

    @classmethod
    def from_diag(cls, diag, d_S=0, mode="matrix-free"):
        return cls(np.asarray(diag, dtype=float), d_S=d_S, mode=mode)

    @property
    def p(self) -> int:
        return self.diag.size

    @property
    def norm(self) -> float:
        return float(self.diag.max())

    @property
    def trace(self) -> float:
        return float(self.diag.sum())

    def apply(self, v):
        v = np.asarray(v, dtype=float)
        return self.diag * v if v.ndim == 1 else self.diag[:, None] * v

    def apply_sqrt(self, v):
        v = np.asarray(v, dtype=float)
        s = np.sqrt(self.diag)
        return s * v if v.ndim == 1 else s[:, None] * v

    def apply_inv(self, v):
        v = np.asarray(v, dtype=float)
        return v / self.diag if v.ndim == 1 else v / self.diag[:, None]

    def quad(self, v) -> float:
        """``v^T Sigma v``."""
        v = np.asarray(v, dtype=float)
        return float(np.dot(self.diag * v, v))

    def two_level(self):
        """``(signal_var, junk_var)`` when the diagonal is constant on each block, else None.

        An empty block reports the other block's value.
        """
        s, j = self.diag[: self.d_S], self.diag[self.d_S:]
        if s.size and np.ptp(s) != 0.0:
            return None
        if j.size and np.ptp(j) != 0.0:
            return None
        a = float(s[0]) if s.size else float(j[0])
        b = float(j[0]) if j.size else a
        return a, b

    def dense(self) -> np.ndarray:
        if self.p > self.dense_ceiling:
            raise DimensionError(f"refusing to materialise a {self.p}x{self.p} covariance")
        return np.diag(self.diag)


def resolve_cov(spec: ProblemSpec, cov=None) -> CovarianceView:
    if cov is None:
        return spec.covariance()
    if cov.p != spec.p:
        raise DimensionError(f"covariance has p={cov.p}, spec has p={spec.p}")
    return cov


@dataclass(frozen=True, eq=False)
class SampleSet:
    """One training draw. ``X`` is stored whole; signal/junk blocks are views."""

    X: np.ndarray
    Y: np.ndarray
    E: np.ndarray
    d_S: int

    def __post_init__(self):
        # read-only views: no copy of X, and the caller's arrays stay writable
        X = np.asarray(self.X, dtype=float).view()
        if X.ndim != 2:
            raise DimensionError("X must be a matrix")
        Y = np.asarray(self.Y, dtype=float).ravel().view()
        E = np.asarray(self.E, dtype=float).ravel().view()
        n = X.shape[0]
        if Y.shape != (n,) or E.shape != (n,):
            raise DimensionError(f"Y and E must have length n={n}")
        if not 0 <= self.d_S <= X.shape[1]:
            raise DimensionError("d_S outside [0, p]")
        for name, a in (("X", X), ("Y", Y), ("E", E)):
            a.setflags(write=False)
            object.__setattr__(self, name, a)

    @classmethod
    def from_blocks(cls, X_S, X_J, Y, E):
        X_S = np.asarray(X_S, dtype=float)
        X_J = np.asarray(X_J, dtype=float)
        if X_S.shape[0] != X_J.shape[0]:
            raise DimensionError("X_S and X_J must have the same number of rows")
        return cls(np.hstack([X_S, X_J]), Y, E, X_S.shape[1])

    @property
    def n(self) -> int:
        return self.X.shape[0]

    @property
    def p(self) -> int:
        return self.X.shape[1]

    @property
    def d_J(self) -> int:
        return self.p - self.d_S

    @cached_property
    def gram(self) -> GramFactor:
        """Cholesky factor of ``X X^T``; raises ``RankError`` when unusable."""
        return GramFactor(self.X @ self.X.T, what="Gram matrix X X^T")

    @property
    def X_S(self) -> np.ndarray:
        return self.X[:, : self.d_S]

    @property
    def X_J(self) -> np.ndarray:
        return self.X[:, self.d_S:]

    def check_spec(self, spec: ProblemSpec):
        if (self.d_S, self.d_J) != (spec.d_S, spec.d_J):
            raise DimensionError(
                f"sample has (d_S, d_J)=({self.d_S}, {self.d_J}), spec has ({spec.d_S}, {spec.d_J})")


def sample_dataset(spec: ProblemSpec, n: int, seed=0) -> SampleSet:
    """Draw ``n`` iid rows from the model.

    ``seed`` may be an int (stream 0 of that seed) or a ``numpy`` Generator.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    rng = seed if isinstance(seed, np.random.Generator) else substream(int(seed))
    X = np.empty((n, spec.p))
    X[:, : spec.d_S] = rng.standard_normal((n, spec.d_S))
    if spec.d_J:
        X[:, spec.d_S:] = rng.standard_normal((n, spec.d_J))
        X[:, spec.d_S:] *= np.sqrt(spec.junk_var)
    E = np.sqrt(spec.sigma2) * rng.standard_normal(n)
    Y = X[:, : spec.d_S] @ spec.w_star_S + E
    return SampleSet(X, Y, E, spec.d_S)


def _check_len(w, p):
    w = np.asarray(w, dtype=float)
    if w.shape != (p,):
        raise DimensionError(f"weight vector has shape {w.shape}, expected ({p},)")
    return w


def population_risk(w, spec: ProblemSpec, cov=None) -> float:
    """``sigma^2 + ||w - w*||_Sigma^2``."""
    cov = resolve_cov(spec, cov)
    w = _check_len(w, spec.p)
    d = w.copy()
    d[: spec.d_S] -= spec.w_star_S
    return spec.sigma2 + cov.quad(d)


def empirical_risk(w, S: SampleSet) -> float:
    """``||Y - X w||^2 / n``."""
    w = _check_len(w, S.p)
    r = S.Y - S.X @ w
    return float(r @ r) / S.n


class RiskTerms(NamedTuple):
    noise: float      # L_S(w*) = ||E||^2 / n
    quadratic: float  # ||w - w*||^2 in the sample covariance
    cross: float      # -(2/n) <X^T E, w - w*>

    @property
    def total(self) -> float:
        return self.noise + self.quadratic + self.cross


def empirical_risk_terms(w, S: SampleSet, spec: ProblemSpec) -> RiskTerms:
    """Three-term expansion of the empirical risk around ``w*``."""
    S.check_spec(spec)
    w = _check_len(w, S.p)
    d = w - spec.w_star
    Xd = S.X @ d
    return RiskTerms(float(S.E @ S.E) / S.n, float(Xd @ Xd) / S.n, -2.0 * float(S.E @ Xd) / S.n)


class DeviationNorms(NamedTuple):
    rho: float     # algebraically largest eigenvalue of Sigma - Sigma_hat
    opnorm: float  # spectral norm of Sigma - Sigma_hat


def _deviation_dense(S, cov):
    A = cov.dense() - S.X.T @ S.X / S.n
    evals, evecs = np.linalg.eigh(A)
    return evals, evecs


def _deviation_lowrank(S, cov):
    """Exact spectrum of ``Sigma - X^T X / n`` for a two-level diagonal.

    ``Sigma - Sigma_hat = b I + W C W^T`` with ``W = [E_S, X^T]`` and
    ``C = diag((a - b) I, -I / n)``; the non-trivial eigenvalues are those of
    ``g^{1/2} V^T C V g^{1/2}`` where ``W^T W = V g V^T``.
    Returns ``(b, nu, basis_map)`` where the spectrum is ``b + nu`` plus ``b``
    with multiplicity ``p - len(nu)``, and ``basis_map(z)`` lifts a small
    eigenvector to ``R^p``.
    """
    levels = cov.two_level()
    if levels is None:
        raise ValueError("low-rank deviation path needs a two-level covariance")
    a, b = levels
    n, d_S = S.n, S.d_S
    use_signal = d_S > 0 and a != b
    X = S.X
    if use_signal:
        XS = S.X_S
        G = np.block([[np.eye(d_S), XS.T], [XS, X @ X.T]])
        cdiag = np.concatenate([np.full(d_S, a - b), np.full(n, -1.0 / n)])
    else:
        G = X @ X.T
        cdiag = np.full(n, -1.0 / n)
    g, V = np.linalg.eigh(G)
    keep = g > 1e-12 * max(g.max(), 1.0)
    g, V = g[keep], V[:, keep]
    sg = np.sqrt(g)
    K = (sg[:, None] * (V.T * cdiag) @ V) * sg[None, :]
    nu, Z = np.linalg.eigh(K)

    def lift(z):
        c = V @ (z / sg)
        if use_signal:
            out = X.T @ c[d_S:]
            out[:d_S] += c[:d_S]
        else:
            out = X.T @ c
        return out / np.linalg.norm(out)

    return b, nu, Z, lift


def cov_deviation_norms(S: SampleSet, spec: ProblemSpec, method: str = "lanczos", *,
                        cov=None, tol=1e-10, max_iter=10_000) -> DeviationNorms:
    """Top signed eigenvalue and spectral norm of ``Sigma - X^T X / n``.

    ``method``:

    * ``"lanczos"``: matrix-free, robust to clustered top eigenvalues.
    * ``"power"``: matrix-free power iteration, with the shift
      ``||Sigma|| + ||Sigma_hat||`` isolating the algebraically largest
      eigenvalue. Slow when that eigenvalue is nearly degenerate; raises
      ``NumericalError`` rather than returning an unconverged value.
    * ``"dense"``: full eigendecomposition, small ``p`` only.
    * ``"lowrank"``: exact reduction to an ``(n + d_S)``-sized eigenproblem,
      two-level covariances only.
    """
    S.check_spec(spec)
    cov = resolve_cov(spec, cov)
    if method == "dense":
        evals, _ = _deviation_dense(S, cov)
        return DeviationNorms(float(evals[-1]), float(np.abs(evals).max()))
    if method == "lowrank":
        b, nu, _, _ = _deviation_lowrank(S, cov)
        spectrum = b + nu
        if S.p > nu.size:
            spectrum = np.append(spectrum, b)
        return DeviationNorms(float(spectrum.max()), float(np.abs(spectrum).max()))
    if method not in ("power", "lanczos"):
        raise ValueError(f"unknown method {method!r}")

    X, n = S.X, S.n

    def A(v):
        return cov.apply(v) - X.T @ (X @ v) / n

    if method == "lanczos":
        try:
            top, _ = lanczos_extreme(A, S.p, which="LA", tol=tol * 1e-2)
            big, _ = lanczos_extreme(A, S.p, which="LM", tol=tol * 1e-2)
        except NumericalError as exc:
            raise NumericalError(f"cov_deviation_norms: {exc}", exc.diagnostics) from exc
        return DeviationNorms(top, abs(big))

    def A2(v):
        return A(A(v))

    try:
        top2, _, _ = power_iteration(A2, S.p, tol=tol, max_iter=max_iter)
        sig_hat, _, _ = power_iteration(lambda u: X @ (X.T @ u) / n, n, tol=tol, max_iter=max_iter)
        shift = cov.norm + sig_hat
        top_shifted, _, _ = power_iteration(lambda v: A(v) + shift * v, S.p, tol=tol,
                                            max_iter=max_iter)
    except NumericalError as exc:
        raise NumericalError(f"cov_deviation_norms: {exc}", exc.diagnostics) from exc
    opnorm = float(np.sqrt(max(top2, 0.0)))
    rho = float(top_shifted - shift)
    return DeviationNorms(rho, opnorm)


def top_deviation_direction(S: SampleSet, spec: ProblemSpec, *, cov=None):
    """Unit eigenvector for the algebraically largest eigenvalue of ``Sigma - Sigma_hat``."""
    S.check_spec(spec)
    cov = resolve_cov(spec, cov)
    if cov.two_level() is not None:
        b, nu, Z, lift = _deviation_lowrank(S, cov)
        if nu.size and (nu[-1] >= 0.0 or S.p == nu.size):
            return lift(Z[:, -1])
        # top eigenvalue is b itself: any unit vector orthogonal to span(W)
    if S.p > DENSE_CEILING:
        raise DimensionError("top deviation direction needs a two-level covariance for large p")
    _, evecs = _deviation_dense(S, cov)
    return evecs[:, -1]
