"""Reference computations that share no code with the package.

Each builds dense objects straight from definitions: explicit covariance
matrices, pseudoinverses, a null-space basis from scipy, and a secular-equation
trust-region solver for the primal worst-case gap.
"""

import numpy as np
import scipy.linalg as sla


def sigma_dense(d_S, d_J, lam):
    return np.diag(np.concatenate([np.ones(d_S), np.full(d_J, lam / d_J if d_J else 0.0)]))


def pinv_min_norm(X, Y):
    return np.linalg.pinv(X) @ Y


def ridge_primal(X_S, Y, lam):
    d = X_S.shape[1]
    return np.linalg.solve(X_S.T @ X_S + lam * np.eye(d), X_S.T @ Y)


def min_risk_dense(X, E, Sigma, w_star):
    """Direct minimisation of ||w - w*||_Sigma^2 subject to Xw = Y via the KKT system."""
    n, p = X.shape
    K = np.block([[2 * Sigma, X.T], [X, np.zeros((n, n))]])
    rhs = np.concatenate([2 * Sigma @ w_star, X @ w_star + E])
    return np.linalg.solve(K, rhs)[:p]


def restricted_eig_dense(X, Sigma):
    F = sla.null_space(X) if X.shape[0] else np.eye(X.shape[1])
    return float(np.linalg.eigvalsh(F.T @ Sigma @ F)[-1])


def trs_max(M, l, c0, r, iters=400):
    """``max c0 + 2 l^T u + u^T M u`` over ``||u|| <= r`` for PSD ``M``.

    The maximiser sits on the sphere with ``(eta I - M) u = l``,
    ``eta >= lambda_max(M)``; ``eta`` is found by bisection on ``||u(eta)|| = r``.
    """
    mu, Q = np.linalg.eigh(M)
    lt = Q.T @ l
    top = mu[-1]

    def unorm(eta):
        return np.sqrt(np.sum((lt / (eta - mu)) ** 2))

    def value(ut):
        return float(c0 + 2 * lt @ ut + ut @ (mu * ut))

    if r == 0:
        return float(c0)
    on_top = np.isclose(mu, top, rtol=0, atol=1e-12 * max(1.0, abs(top)))
    if np.linalg.norm(lt[on_top]) < 1e-13:
        # hard case candidate: solution of the reduced system may be too short
        free = ~on_top
        ut = np.zeros_like(lt)
        ut[free] = lt[free] / (top - mu[free])
        short = r * r - ut @ ut
        if short >= 0:
            best = -np.inf
            idx = np.flatnonzero(on_top)
            for sgn in (1.0, -1.0):
                v = ut.copy()
                v[idx[0]] = sgn * np.sqrt(short)
                best = max(best, value(v))
            return best
    lo = top + 1e-300
    hi = top + np.linalg.norm(lt) / r + 1.0
    while unorm(hi) > r:
        hi = top + 2 * (hi - top)
    for _ in range(iters):
        mid = 0.5 * (lo + hi)
        if mid in (lo, hi):
            break
        if unorm(mid) > r:
            lo = mid
        else:
            hi = mid
    eta = hi
    return value(lt / (eta - mu))


def primal_gap(X, Y, Sigma, w_star, sigma2, B):
    """Worst-case ``L_D`` over interpolators in the ``B``-ball, by the trust-region oracle."""
    F = sla.null_space(X)
    w_mn = pinv_min_norm(X, Y)
    r2 = B * B - w_mn @ w_mn
    r = np.sqrt(max(r2, 0.0))
    d = w_mn - w_star
    return trs_max(F.T @ Sigma @ F, F.T @ Sigma @ d, sigma2 + d @ Sigma @ d, r)
