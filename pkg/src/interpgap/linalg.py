"""Small numerical kernels shared by the model, interpolator and gap modules."""

import numpy as np
import scipy.linalg as sla
import scipy.sparse.linalg as spla
from scipy.linalg import lapack

from .errors import NumericalError, RankError

DEFAULT_MAX_COND = 1e12


class GramFactor:
    """Cholesky factor of a symmetric positive-definite Gram matrix.

    Refuses (``RankError``) when the factorisation breaks down or the LAPACK
    reciprocal condition estimate puts the condition number above ``max_cond``.
    """

    def __init__(self, G, max_cond=DEFAULT_MAX_COND, what="Gram matrix"):
        G = np.asarray(G, dtype=float)
        self.size = G.shape[0]
        if self.size == 0:
            self._c = G
            self.cond = 1.0
            return
        try:
            c, lower = sla.cho_factor(G, lower=False, check_finite=True)
        except (np.linalg.LinAlgError, ValueError) as exc:
            raise RankError(f"{what} is not positive definite: {exc}") from exc
        anorm = np.abs(G).sum(axis=0).max()
        rcond, info = lapack.dpocon(c, anorm, uplo="U")
        if info != 0 or not np.isfinite(rcond) or rcond <= 0.0:
            raise RankError(f"{what} condition estimate failed (info={info})")
        self.cond = 1.0 / rcond
        if self.cond > max_cond:
            raise RankError(f"{what} is ill-conditioned (cond ~ {self.cond:.3e} > {max_cond:.1e})")
        self._c = c

    def solve(self, b):
        if self.size == 0:
            return np.zeros_like(np.asarray(b, dtype=float))
        return sla.cho_solve((self._c, False), b, check_finite=False)


def power_iteration(matvec, dim, *, x0=None, tol=1e-10, max_iter=10_000, rng=None):
    """Dominant eigenpair of a symmetric positive semidefinite operator.

    The Rayleigh quotient increases monotonically and its successive changes
    shrink roughly geometrically, so the distance still to go is estimated as
    ``change / (1 - q)`` with ``q`` the ratio of the last two changes. Stops
    once that estimate is at most ``tol`` relative to the quotient.
    Returns ``(eigenvalue, unit eigenvector, iterations)``.
    """
    if dim == 0:
        return 0.0, np.zeros(0), 0
    if x0 is None:
        if rng is None:
            rng = np.random.default_rng(0x5EED)
        x0 = rng.standard_normal(dim)
    x = np.asarray(x0, dtype=float)
    nx = np.linalg.norm(x)
    if nx == 0.0:
        raise ValueError("power iteration start vector is zero")
    x = x / nx
    rq_old = np.nan
    change = prev_change = np.inf
    for it in range(1, max_iter + 1):
        y = matvec(x)
        rq = float(x @ y)
        ny = np.linalg.norm(y)
        if ny == 0.0:
            return 0.0, x, it
        change = abs(rq - rq_old)
        q = min(change / prev_change, 1.0 - 1e-6) if prev_change > 0 and np.isfinite(prev_change) else 0.0
        remaining = change / (1.0 - q)
        scale = max(abs(rq), np.finfo(float).tiny)
        # changes at rounding level carry no rate information
        if remaining <= tol * scale or change <= 64 * np.finfo(float).eps * scale:
            return rq, y / ny, it
        x = y / ny
        rq_old = rq
        prev_change = change
    raise NumericalError(
        f"power iteration did not converge in {max_iter} iterations",
        diagnostics={"iterations": max_iter, "rayleigh_quotient": rq_old,
                     "last_change": change, "tol": tol},
    )


def lanczos_extreme(matvec, dim, *, which="LA", tol=1e-12, max_iter=None):
    """Algebraically largest (``"LA"``) or largest-magnitude (``"LM"``) eigenpair of a
    symmetric operator known only through ``matvec``, by implicitly restarted Lanczos.

    Operators of dimension <= 2 are materialised column by column.
    Returns ``(eigenvalue, unit eigenvector)``.
    """
    if dim == 0:
        return 0.0, np.zeros(0)
    if dim <= 2:
        M = np.column_stack([matvec(e) for e in np.eye(dim)])
        ev, V = np.linalg.eigh((M + M.T) / 2)
        i = int(np.argmax(np.abs(ev))) if which == "LM" else dim - 1
        return float(ev[i]), V[:, i]
    op = spla.LinearOperator((dim, dim), matvec=matvec, dtype=float)
    v0 = np.random.default_rng(0x5EED).standard_normal(dim)
    try:
        ev, V = spla.eigsh(op, k=1, which=which, tol=tol, maxiter=max_iter, v0=v0)
    except spla.ArpackNoConvergence as exc:
        raise NumericalError("Lanczos did not converge",
                             diagnostics={"which": which, "tol": tol, "max_iter": max_iter,
                                          "partial_eigenvalues": list(map(float, exc.eigenvalues))}) from exc
    return float(ev[0]), V[:, 0]
