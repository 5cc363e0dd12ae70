"""Basis expansions for covariate subsets and their smoothness penalties.

A linear term is the covariate itself.  A smooth term is a cubic B-spline
with interior knots at equispaced quantiles, reduced by one column through a
sum-to-zero constraint (the likelihood only sees case minus control
differences, so the constant direction is not identifiable).  The penalty is
the integrated squared second derivative, whose null space is exactly the
linear functions.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.interpolate import BSpline

from .core import CaseControlPair, MissingCovariate, PairTable, SubsetModel


@dataclass(frozen=True)
class BasisSpec:
    kind: str = "linear"
    n_interior_knots: int = 8
    degree: int = 3
    penalty_order: int = 2
    name: str | None = None

    def __post_init__(self):
        if self.kind not in ("linear", "bspline"):
            raise ValueError(f"unknown basis kind {self.kind!r}")
        if self.kind == "bspline":
            if self.n_interior_knots < 1:
                raise ValueError("bspline needs at least one interior knot")
            if self.penalty_order >= self.degree + 1 or self.penalty_order < 1:
                raise ValueError("penalty order must be in [1, degree]")

    @property
    def width(self) -> int:
        return 1 if self.kind == "linear" else self.n_interior_knots + self.degree

    def to_dict(self) -> dict:
        d = {"name": self.name, "kind": self.kind}
        if self.kind == "bspline":
            d["knots"] = self.n_interior_knots
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "BasisSpec":
        kind = d.get("kind", "linear")
        if kind == "bspline":
            return cls("bspline", int(d.get("knots", 8)), name=d.get("name"))
        return cls("linear", name=d.get("name"))


LINEAR = BasisSpec()


@dataclass(frozen=True, eq=False)
class FittedBasis:
    """A :class:`BasisSpec` with knots (and reduction) fitted to training values."""

    spec: BasisSpec
    knots: np.ndarray = field(default=None, repr=False)
    reduction: np.ndarray = field(default=None, repr=False)
    penalty: np.ndarray = field(default=None, repr=False)

    @property
    def width(self) -> int:
        return self.spec.width

    @property
    def bounds(self) -> tuple[float, float]:
        k = self.spec.degree
        return float(self.knots[k]), float(self.knots[-k - 1])

    def raw(self, x: np.ndarray) -> np.ndarray:
        """Unreduced B-spline design at ``x`` (clamped to the boundary knots)."""
        lo, hi = self.bounds
        xc = np.clip(np.asarray(x, float), lo, hi)
        return BSpline.design_matrix(xc, self.knots, self.spec.degree).toarray()

    def transform(self, x) -> np.ndarray:
        x = np.asarray(x, float).reshape(-1)
        if self.spec.kind == "linear":
            return x[:, None]
        return self.raw(x) @ self.reduction


def _knot_vector(values: np.ndarray, n_interior: int, degree: int) -> np.ndarray:
    lo, hi = float(values.min()), float(values.max())
    if not hi > lo:
        raise ValueError("cannot place spline knots on a constant covariate")
    probs = np.linspace(0, 1, n_interior + 2)[1:-1]
    inner = np.quantile(values, probs)
    if len(np.unique(inner)) < n_interior or inner.min() <= lo or inner.max() >= hi:
        # heavily tied data: fall back to equispaced knots
        inner = np.linspace(lo, hi, n_interior + 2)[1:-1]
    return np.concatenate([np.full(degree + 1, lo), inner, np.full(degree + 1, hi)])


def derivative_gram(knots: np.ndarray, degree: int, order: int) -> np.ndarray:
    """Gram matrix of the ``order``-th derivatives, S_jk = int B_j^(m) B_k^(m) dx."""
    n_basis = len(knots) - degree - 1
    # Gauss-Legendre, exact for the piecewise-polynomial products involved
    nodes, weights = np.polynomial.legendre.leggauss(degree + 1)
    breaks = np.unique(knots)
    a, b = breaks[:-1], breaks[1:]
    xs = (0.5 * (b - a)[:, None] * nodes[None, :] + 0.5 * (a + b)[:, None]).ravel()
    ws = (0.5 * (b - a)[:, None] * weights[None, :]).ravel()
    deriv = np.empty((len(xs), n_basis))
    eye = np.eye(n_basis)
    for j in range(n_basis):
        deriv[:, j] = BSpline(knots, eye[j], degree).derivative(order)(xs)
    return deriv.T @ (ws[:, None] * deriv)


def _sum_to_zero(colsum: np.ndarray) -> np.ndarray:
    """Orthonormal basis of the complement of ``colsum`` (shape (k, k-1))."""
    q, _ = np.linalg.qr(colsum.reshape(-1, 1), mode="complete")
    return q[:, 1:]


def fit_basis(spec: BasisSpec, values) -> FittedBasis:
    """Fit knots, identifiability reduction and penalty on training ``values``."""
    if spec.kind == "linear":
        return FittedBasis(spec, penalty=np.zeros((1, 1)))
    values = np.asarray(values, float).reshape(-1)
    values = values[np.isfinite(values)]
    knots = _knot_vector(values, spec.n_interior_knots, spec.degree)
    basis = FittedBasis(spec, knots)
    B = basis.raw(values)
    Z = _sum_to_zero(B.sum(axis=0))
    S = Z.T @ derivative_gram(knots, spec.degree, spec.penalty_order) @ Z
    S = 0.5 * (S + S.T)
    S /= np.linalg.eigvalsh(S).max()
    return FittedBasis(spec, knots, Z, S)


def fit_bases(pairs: PairTable, specs) -> tuple[FittedBasis, ...]:
    """One fitted basis per covariate; knots use pooled case and control values."""
    specs = list(specs) if specs is not None else [LINEAR] * pairs.p
    if len(specs) != pairs.p:
        raise ValueError(f"{len(specs)} basis specs for {pairs.p} covariates")
    return tuple(fit_basis(spec, np.concatenate([pairs.x_case[:, j], pairs.x_control[:, j]]))
                 for j, spec in enumerate(specs))


def expand(x, bases) -> np.ndarray:
    """psi_S(x): concatenated basis columns for one row or a 2-D block of rows."""
    x = np.asarray(x, float)
    single = x.ndim == 1
    x = np.atleast_2d(x)
    if x.shape[1] != len(bases):
        raise ValueError("one basis per covariate column required")
    out = np.hstack([b.transform(x[:, j]) for j, b in enumerate(bases)])
    return out[0] if single else out


def _model_bases(model: SubsetModel):
    return model.bases if model.bases else (FittedBasis(LINEAR),) * len(model.indices)


def delta_design(pair: CaseControlPair, model: SubsetModel) -> np.ndarray:
    """psi_S(x_case) - psi_S(x_control) for a single pair."""
    idx = list(model.indices)
    xc, xs = pair.x_case[idx], pair.x_control[idx]
    if not (np.all(np.isfinite(xc)) and np.all(np.isfinite(xs))):
        raise MissingCovariate(f"non-finite covariate in pair {pair.event_index}")
    bases = _model_bases(model)
    return expand(xc, bases) - expand(xs, bases)


def delta_matrix(pairs: PairTable, model: SubsetModel) -> np.ndarray:
    """Stacked :func:`delta_design` rows for every pair, shape ``(n, d)``."""
    idx = list(model.indices)
    xc, xs = pairs.x_case[:, idx], pairs.x_control[:, idx]
    if not (np.all(np.isfinite(xc)) and np.all(np.isfinite(xs))):
        raise MissingCovariate("non-finite covariate values in pairs")
    bases = _model_bases(model)
    return expand(xc, bases) - expand(xs, bases)


def penalty_matrix(model: SubsetModel) -> np.ndarray:
    """Block-diagonal penalty matching :func:`delta_matrix` columns."""
    blocks = [b.penalty if b.penalty is not None else np.zeros((b.width, b.width))
              for b in _model_bases(model)]
    d = sum(len(b) for b in blocks)
    P = np.zeros((d, d))
    k = 0
    for blk in blocks:
        w = len(blk)
        P[k:k + w, k:k + w] = blk
        k += w
    return P
