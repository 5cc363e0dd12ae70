"""Pearson risk and the two-sided chi-square dispersion test."""

from __future__ import annotations

from dataclasses import asdict, dataclass
from statistics import NormalDist

import numpy as np
from scipy.special import gammainc, gammaln

from .core import RiskOverflow

RISK_ETA_FLOOR = -700.0


def pearson_risk(beta, delta_rows) -> float:
    """sum_i (1 - bdot(eta_i))^2 / bddot(eta_i), evaluated as sum_i exp(-eta_i).

    With y = 1 and a binomial cumulant each term reduces to (1 - p) / p.
    """
    eta = np.asarray(delta_rows, float) @ np.asarray(beta, float)
    if eta.size and eta.min() <= RISK_ETA_FLOOR:
        raise RiskOverflow(f"linear predictor {eta.min():.1f} overflows the risk")
    return float(np.exp(-eta).sum())


def chi2_cdf(x: float, df: float) -> float:
    if x <= 0:
        return 0.0
    return float(gammainc(0.5 * df, 0.5 * x))


def _chi2_logpdf(x: float, df: float) -> float:
    k = 0.5 * df
    return (k - 1.0) * np.log(x) - 0.5 * x - k * np.log(2.0) - gammaln(k)


def chi2_quantile(df: float, q: float, tol: float = 1e-12, max_iter: int = 200) -> float:
    """Inverse chi-square CDF by Newton iteration from a Wilson-Hilferty start.

    Steps are damped to stay positive and bisection takes over if Newton
    leaves the current bracket.
    """
    if not df > 0:
        raise ValueError("df must be positive")
    if not 0 < q < 1:
        raise ValueError("q must lie in (0, 1)")
    z = NormalDist().inv_cdf(q)
    c = 2.0 / (9.0 * df)
    x = df * max(1.0 - c + z * np.sqrt(c), 1e-3) ** 3
    x = max(x, 1e-300)

    lo, hi = 0.0, np.inf
    for _ in range(max_iter):
        err = chi2_cdf(x, df) - q
        if abs(err) < tol:
            return float(x)
        if err > 0:
            hi = min(hi, x)
        else:
            lo = max(lo, x)
        pdf = np.exp(_chi2_logpdf(x, df))
        new = x - err / pdf if pdf > 0 else np.nan
        if not np.isfinite(new) or new <= lo or new >= hi:
            new = 0.5 * (lo + hi) if np.isfinite(hi) else 2.0 * x + 1.0
        if new == x:
            return float(x)
        x = new
    return float(x)


@dataclass(frozen=True)
class DispersionVerdict:
    risk: float
    df: float
    lower: float
    upper: float
    alpha: float
    accepted: bool
    reason: str = ""

    def to_dict(self) -> dict:
        d = asdict(self)
        for k in ("risk", "df", "lower", "upper"):
            if d[k] is not None and not np.isfinite(d[k]):
                d[k] = None
        return d


def dispersion_bounds(df: float, alpha: float = 0.05) -> tuple[float, float]:
    return chi2_quantile(df, alpha / 2), chi2_quantile(df, 1 - alpha / 2)


def check_risk(risk: float, df: float, alpha: float = 0.05) -> DispersionVerdict:
    lower, upper = dispersion_bounds(df, alpha)
    return DispersionVerdict(risk, df, lower, upper, alpha, bool(lower <= risk <= upper))


def dispersion_test(fit, n: int | None = None, alpha: float = 0.05) -> DispersionVerdict:
    """Two-sided test of perfect dispersion with ``df = n - edf`` (closed band)."""
    n = fit.n if n is None else n
    if not fit.converged:
        return DispersionVerdict(fit.pearson_risk, float("nan"), float("nan"),
                                 float("nan"), alpha, False, "NotFitted")
    df = n - fit.edf
    if df <= 0:
        return DispersionVerdict(fit.pearson_risk, df, float("nan"), float("nan"),
                                 alpha, False, "NoResidualDf")
    return check_risk(fit.pearson_risk, df, alpha)
