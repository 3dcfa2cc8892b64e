"""Weighted logistic regression by Newton-Raphson / IRLS with step-halving."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import expit, log_expit

SEPARATION_BOUND = 15.0


class GlmError(ValueError):
    pass


class SingularDesignError(GlmError):
    """The weighted information matrix is singular.

    ``columns`` lists indices of the columns that are linear combinations of
    earlier ones (or are identically zero on the positively weighted rows).
    """

    def __init__(self, columns, message=None):
        self.columns = list(columns)
        super().__init__(message or f"singular weighted design; collinear columns: {self.columns}")


@dataclass
class LogisticFit:
    coefficients: np.ndarray
    converged: bool
    iterations: int
    max_abs_score: float
    separation_flag: bool

    def predict(self, X) -> np.ndarray:
        return expit(np.asarray(X, dtype=float) @ self.coefficients)


def dependent_columns(X, w=None, rtol: float = 1e-10) -> list[int]:
    """Indices of columns that add no rank when scanned left to right."""
    X = np.asarray(X, dtype=float)
    if w is not None:
        X = X * np.sqrt(np.asarray(w, dtype=float))[:, None]
    G = X.T @ X
    d = np.sqrt(np.diag(G))
    kept: list[int] = []
    dropped: list[int] = []
    for j in range(G.shape[0]):
        if d[j] == 0:
            dropped.append(j)
            continue
        trial = kept + [j]
        sub = G[np.ix_(trial, trial)] / np.outer(d[trial], d[trial])
        if np.linalg.eigvalsh(sub)[0] > rtol:
            kept.append(j)
        else:
            dropped.append(j)
    return dropped


def _loglik(eta, y, w):
    # y*log(p) + (1-y)*log(1-p) without forming p.
    return float(np.sum(w * (y * log_expit(eta) + (1.0 - y) * log_expit(-eta))))


def _polish(X, y, w, beta, eta, ll, score):
    # One extra Newton step once within tolerance: quadratic convergence takes
    # the solution to rounding level, so it no longer depends on the path.
    mu = expit(eta)
    info = (X * (w * mu * (1.0 - mu))[:, None]).T @ X
    try:
        cand = beta + np.linalg.solve(info, score)
    except np.linalg.LinAlgError:
        return beta, eta, ll, score
    eta_c = X @ cand
    ll_c = _loglik(eta_c, y, w)
    score_c = X.T @ (w * (y - expit(eta_c)))
    if np.max(np.abs(score_c)) <= np.max(np.abs(score)):
        return cand, eta_c, ll_c, score_c
    return beta, eta, ll, score


def fit_weighted_logistic(X, y, w=None, tol: float = 1e-8, max_iter: int = 50) -> LogisticFit:
    """Maximize the ``w``-weighted Bernoulli log-likelihood.

    Weights are rescaled to mean one before fitting, so the score tolerance
    does not depend on the overall weight scale and the coefficients are
    invariant to multiplying ``w`` by a constant.

    Parameters
    ----------
    X : (n, p) array
        Design matrix, including an intercept column if one is wanted.
    y : (n,) array of 0/1
    w : (n,) array, optional
        Non-negative case weights; defaults to ones.
    tol : float
        Convergence when the largest absolute score component is at most ``tol``.
    max_iter : int
        Newton iterations before giving up (``converged=False``).

    Raises
    ------
    GlmError
        Empty data, bad shapes, or invalid weights.
    SingularDesignError
        The weighted design is rank deficient.
    """
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    if X.ndim != 2 or X.shape[0] == 0:
        raise GlmError("empty design matrix")
    n, p = X.shape
    if y.shape != (n,):
        raise GlmError("y must be a vector with one entry per design row")
    w = np.ones(n) if w is None else np.asarray(w, dtype=float)
    if w.shape != (n,) or not np.all(np.isfinite(w)) or np.any(w < 0):
        raise GlmError("weights must be finite and non-negative")
    if not np.all(np.isfinite(X)):
        raise GlmError("design matrix has non-finite entries")
    total = w.sum()
    if total <= 0:
        raise GlmError("all weights are zero")
    if n < p:
        raise GlmError(f"need at least as many rows ({n}) as columns ({p})")
    w = w * (n / total)
    bad = dependent_columns(X, w)
    if bad:
        raise SingularDesignError(bad)

    beta = np.zeros(p)
    eta = X @ beta
    ll = _loglik(eta, y, w)
    converged = False
    it = 0
    score = X.T @ (w * (y - expit(eta)))
    for it in range(1, max_iter + 1):
        mu = expit(eta)
        score = X.T @ (w * (y - mu))
        if np.max(np.abs(score)) <= tol:
            converged = True
            it -= 1
            beta, eta, ll, score = _polish(X, y, w, beta, eta, ll, score)
            break
        info = (X * (w * mu * (1.0 - mu))[:, None]).T @ X
        try:
            step = np.linalg.solve(info, score)
        except np.linalg.LinAlgError as exc:
            raise SingularDesignError(dependent_columns(X, w * mu * (1.0 - mu)), "information matrix became singular") from exc
        t = 1.0
        for _ in range(40):
            cand = beta + t * step
            eta_c = X @ cand
            ll_c = _loglik(eta_c, y, w)
            if ll_c >= ll - 1e-12 * abs(ll):
                break
            t *= 0.5
        beta, eta, ll = cand, eta_c, ll_c
    else:
        mu = expit(eta)
        score = X.T @ (w * (y - mu))
        converged = bool(np.max(np.abs(score)) <= tol)

    return LogisticFit(
        coefficients=beta,
        converged=converged,
        iterations=it,
        max_abs_score=float(np.max(np.abs(score))),
        separation_flag=bool(np.any(np.abs(beta) > SEPARATION_BOUND)),
    )
