"""Penalised maximum likelihood for the degenerate logistic model.

Every response equals 1 and the linear predictor of pair ``i`` is
``eta_i = beta . delta_i`` where ``delta_i`` is the case-minus-control design
row, so the log-likelihood is ``sum_i log sigmoid(eta_i)``.  The penalised
objective is ``loglik(beta) - lam * beta' P beta``.
"""

from __future__ import annotations

import logging
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.special import expit, log_expit

from .core import SingularFit

log = logging.getLogger(__name__)

LAMBDA_GRID = np.logspace(-4, 4, 17)
SEPARATION_NORM = 1e4


class GridBoundaryWarning(UserWarning):
    """Selected smoothing parameter sits on the end of the search grid."""


def cumulant(theta):
    """Binomial cumulant b(theta) = log(1 + e^theta) and its two derivatives."""
    theta = np.asarray(theta, float)
    b = np.logaddexp(0.0, theta)
    bdot = expit(theta)
    bddot = bdot * expit(-theta)
    if b.ndim == 0:
        return float(b), float(bdot), float(bddot)
    return b, bdot, bddot


def loglik(beta, delta_rows) -> float:
    """sum_i [eta_i - b(eta_i)] with y_i = 1, i.e. sum_i log sigmoid(eta_i)."""
    eta = np.asarray(delta_rows, float) @ np.asarray(beta, float)
    return float(log_expit(eta).sum())


def gradient(beta, delta_rows, penalty=None, lam: float = 0.0) -> np.ndarray:
    X = np.asarray(delta_rows, float)
    beta = np.asarray(beta, float)
    g = X.T @ expit(-(X @ beta))
    if penalty is not None and lam:
        g -= 2.0 * lam * (penalty @ beta)
    return g


def hessian(beta, delta_rows, penalty=None, lam: float = 0.0) -> np.ndarray:
    X = np.asarray(delta_rows, float)
    eta = X @ np.asarray(beta, float)
    w = expit(eta) * expit(-eta)
    H = -(X.T @ (w[:, None] * X))
    if penalty is not None and lam:
        H -= 2.0 * lam * penalty
    return H


@dataclass
class FitResult:
    beta: np.ndarray
    loglik: float
    edf: float
    bic: float
    se: np.ndarray
    pearson_risk: float
    converged: bool
    iterations: int
    lam: float
    n: int
    status: str = "ok"
    lambda_at_boundary: bool = False
    extra: dict = field(default_factory=dict)

    @property
    def separated(self) -> bool:
        return self.status == "separated"

    def to_dict(self) -> dict:
        def num(x):
            x = float(x)
            return x if np.isfinite(x) else None

        return {
            "beta": [num(b) for b in self.beta],
            "se": [num(s) for s in self.se],
            "loglik": num(self.loglik),
            "edf": num(self.edf),
            "bic": num(self.bic),
            "pearson_risk": num(self.pearson_risk),
            "converged": bool(self.converged),
            "iterations": int(self.iterations),
            "lambda": float(self.lam),
            "lambda_at_boundary": bool(self.lambda_at_boundary),
            "n": int(self.n),
            "status": self.status,
        }


def _objective(eta, beta, penalty, lam):
    val = log_expit(eta).sum()
    if lam:
        val -= lam * beta @ penalty @ beta
    return val


def fit(delta_rows, penalty=None, lam: float = 0.0, beta0=None,
        max_iter: int = 100, tol: float = 1e-8) -> FitResult:
    """Newton ascent with step halving on the penalised log-likelihood.

    Converges when the gradient's max-norm drops below ``tol``.  If the
    coefficient norm passes 1e4, or an unpenalised fit ends with every
    ``eta_i > 0`` (then scaling beta up always helps, so no finite maximiser
    exists), the result is flagged ``separated`` and ``converged=False``.
    Raises :class:`SingularFit` when the penalised Hessian cannot be inverted.
    """
    X = np.asarray(delta_rows, float)
    n, d = X.shape
    if n < d:
        raise ValueError(f"need at least as many rows ({n}) as columns ({d})")
    P = np.zeros((d, d)) if penalty is None else np.asarray(penalty, float)
    lam = float(lam)
    beta = np.zeros(d) if beta0 is None else np.array(beta0, float)

    eta = X @ beta
    obj = _objective(eta, beta, P, lam)
    status, converged, it = "max_iter", False, 0
    for it in range(max_iter + 1):
        q = expit(-eta)
        g = X.T @ q
        if lam:
            g -= 2.0 * lam * (P @ beta)
        if np.max(np.abs(g)) < tol:
            converged, status = True, "ok"
            break
        if it == max_iter:
            break
        w = q * (1.0 - q)
        negH = X.T @ (w[:, None] * X)
        if lam:
            negH += 2.0 * lam * P
        try:
            L = np.linalg.cholesky(negH)
            step = np.linalg.solve(L.T, np.linalg.solve(L, g))
        except np.linalg.LinAlgError:
            raise SingularFit("penalised Hessian is not positive definite") from None
        dstep = X @ step
        t = 1.0
        for _ in range(40):
            cand = beta + t * step
            cand_eta = eta + t * dstep
            new = _objective(cand_eta, cand, P, lam)
            if new >= obj - 1e-12 * max(1.0, abs(obj)):
                break
            t *= 0.5
        else:
            log.debug("line search failed at iteration %d", it)
            status = "stalled"
            break
        beta, eta, obj = cand, cand_eta, new
        if np.linalg.norm(beta) > SEPARATION_NORM:
            status = "separated"
            break

    if status != "separated" and lam == 0.0 and np.all(eta > 0):
        status, converged = "separated", False
    return _summarise(X, beta, P, lam, converged, it, status)


def _summarise(X, beta, P, lam, converged, iterations, status) -> FitResult:
    n, d = X.shape
    eta = X @ beta
    ll = float(log_expit(eta).sum())
    w = expit(eta) * expit(-eta)
    H_unpen = X.T @ (w[:, None] * X)
    H_pen = H_unpen + 2.0 * lam * P
    if status == "separated":
        edf = float(d)
        se = np.full(d, np.nan)
    else:
        try:
            cov = np.linalg.inv(H_pen)
        except np.linalg.LinAlgError:
            raise SingularFit("penalised Hessian is singular") from None
        if not np.all(np.isfinite(cov)) or np.linalg.cond(H_pen) > 1e14:
            raise SingularFit("penalised Hessian is numerically singular")
        edf = float(np.trace(cov @ H_unpen))
        se = np.sqrt(np.clip(np.diag(cov), 0, None))
    with np.errstate(over="ignore"):
        risk = float(np.exp(-eta).sum())
    bic = -2.0 * ll + edf * np.log(n)
    return FitResult(beta, ll, edf, bic, se, risk, bool(converged), int(iterations),
                     lam, n, status)


def _lambda_path(X, P, grid):
    fits, beta = [], None
    for lam in grid:
        res = fit(X, P, lam, beta0=beta)
        fits.append(res)
        if res.converged:
            beta = res.beta
    return fits


def fit_auto(delta_rows, penalty=None) -> FitResult:
    """Fit with ``lam`` chosen by :func:`select_lambda` (0 when nothing is penalised)."""
    X = np.asarray(delta_rows, float)
    if penalty is None or not np.any(penalty):
        return fit(X, penalty, 0.0)
    fits = _lambda_path(X, np.asarray(penalty, float), LAMBDA_GRID)
    usable = [k for k, f in enumerate(fits) if f.converged]
    if not usable:
        return fits[-1]
    best = min(usable, key=lambda k: fits[k].bic)
    res = fits[best]
    res.lambda_at_boundary = best in (0, len(LAMBDA_GRID) - 1)
    res.extra["lambda_bic"] = [f.bic if f.converged else None for f in fits]
    return res


def select_lambda(delta_rows, penalty) -> float:
    """Smoothing parameter minimising BIC over ``LAMBDA_GRID``.

    Returns 0.0 when the penalty is identically zero (all-linear model) and
    warns with :class:`GridBoundaryWarning` if an end of the grid wins.
    """
    if penalty is None or not np.any(penalty):
        return 0.0
    res = fit_auto(delta_rows, penalty)
    if res.lambda_at_boundary:
        warnings.warn(f"selected lambda={res.lam:g} is at the end of the grid",
                      GridBoundaryWarning, stacklevel=2)
    return res.lam
