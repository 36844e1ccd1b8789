"""Closed-form predictors: minimum-norm, ridge on the signal block, minimal-risk.

All solves go through an ``n x n`` Gram system; nothing ``p x p`` is formed.
"""

from dataclasses import dataclass, field

import numpy as np

from .errors import DimensionError, PreconditionError
from .linalg import GramFactor
from .model import ProblemSpec, SampleSet, resolve_cov

KINDS = ("min_norm", "ridge", "min_risk", "flipped", "custom")


@dataclass(frozen=True, eq=False)
class Predictor:
    w: np.ndarray
    kind: str
    diagnostics: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown predictor kind {self.kind!r}")
        w = np.asarray(self.w, dtype=float).view()
        w.setflags(write=False)
        object.__setattr__(self, "w", w)

    @property
    def norm(self) -> float:
        return self.diagnostics["norm"]

    @property
    def residual_norm(self) -> float:
        return self.diagnostics["residual_norm"]


def make_predictor(w, S: SampleSet, kind: str, **extra) -> Predictor:
    w = np.asarray(w, dtype=float)
    if w.shape != (S.p,):
        raise DimensionError(f"predictor has shape {w.shape}, expected ({S.p},)")
    r = S.X @ w - S.Y
    diag = {"residual_norm": float(np.linalg.norm(r)), "norm": float(np.linalg.norm(w))}
    diag.update(extra)
    return Predictor(w, kind, diag)


def _need_underdetermined(S):
    if not S.n < S.p:
        raise PreconditionError(f"interpolation needs n < p (n={S.n}, p={S.p})")


def min_norm(S: SampleSet) -> Predictor:
    """``X^T (X X^T)^{-1} Y``."""
    _need_underdetermined(S)
    G = S.gram
    w = S.X.T @ G.solve(S.Y)
    return make_predictor(w, S, "min_norm", gram_cond=G.cond)


def ridge_signal(S: SampleSet, lam: float) -> Predictor:
    """Ridge regression on the signal columns only; junk weights are zero.

    Both the primal ``(X_S^T X_S + lam I)^{-1} X_S^T Y`` and the dual
    ``X_S^T (X_S X_S^T + lam I)^{-1} Y`` forms are evaluated; their relative
    discrepancy is reported as ``primal_dual_gap``.
    """
    if S.d_S < 1:
        raise DimensionError("ridge on the signal block needs d_S >= 1")
    if not lam > 0:
        raise ValueError("ridge weight must be > 0")
    XS = S.X_S
    primal = GramFactor(XS.T @ XS + lam * np.eye(S.d_S), max_cond=np.inf).solve(XS.T @ S.Y)
    dual = XS.T @ GramFactor(XS @ XS.T + lam * np.eye(S.n), max_cond=np.inf).solve(S.Y)
    scale = max(np.linalg.norm(primal), np.finfo(float).tiny)
    w = np.zeros(S.p)
    w[: S.d_S] = primal
    return make_predictor(w, S, "ridge", lam=float(lam),
                          primal_dual_gap=float(np.linalg.norm(primal - dual) / scale))


def min_risk(S: SampleSet, spec: ProblemSpec, cov=None) -> Predictor:
    """``w* + Sigma^{-1} X^T (X Sigma^{-1} X^T)^{-1} E``, the interpolator of least population risk."""
    S.check_spec(spec)
    _need_underdetermined(S)
    cov = resolve_cov(spec, cov)
    XSi = S.X / cov.diag
    G = GramFactor(XSi @ S.X.T, what="weighted Gram X Sigma^-1 X^T")
    w = spec.w_star + XSi.T @ G.solve(S.E)
    return make_predictor(w, S, "min_risk", gram_cond=G.cond)


def flip_junk(S: SampleSet) -> SampleSet:
    """Same sample with the junk block negated."""
    if S.d_J == 0:
        return S
    X = np.array(S.X)
    X[:, S.d_S:] *= -1.0
    return SampleSet(X, S.Y, S.E, S.d_S)
