"""Dense least squares, Cholesky factorization, and standard normal helpers."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.linalg import solve_triangular
from scipy.special import ndtr, ndtri

from .data import FitResult
from .errors import (
    DimensionMismatch,
    DomainError,
    NonFinite,
    NotPositiveDefinite,
    RankDeficient,
    SingularDesign,
)

# Relative pivot floor below which a Gram matrix is treated as singular.
_PIVOT_RTOL = 1e-10


@dataclass(frozen=True)
class CholeskyFactor:
    """Lower-triangular factor l with a = l @ l.T."""

    l: np.ndarray

    def __post_init__(self):
        l = np.array(self.l, dtype=float, order="C")
        l.setflags(write=False)
        object.__setattr__(self, "l", l)

    @property
    def dim(self) -> int:
        return self.l.shape[0]

    def solve(self, b: np.ndarray) -> np.ndarray:
        """Solve a @ x = b using the stored factor."""
        if self.dim == 0:
            return np.zeros_like(np.asarray(b, dtype=float))
        y = solve_triangular(self.l, b, lower=True)
        return solve_triangular(self.l, y, lower=True, trans="T")


def cholesky(a: np.ndarray) -> CholeskyFactor:
    """Lower Cholesky factor of a symmetric positive definite matrix.

    The input must be square and symmetric to 1e-12 (relative to its
    largest entry). Raises NotPositiveDefinite when factorization fails.
    """
    a = np.asarray(a, dtype=float)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise DimensionMismatch(f"expected square matrix, got shape {a.shape}")
    if a.size == 0:
        return CholeskyFactor(np.zeros((0, 0)))
    if not np.all(np.isfinite(a)):
        raise NonFinite("matrix contains non-finite entries")
    scale = max(1.0, float(np.max(np.abs(a))))
    if float(np.max(np.abs(a - a.T))) > 1e-12 * scale:
        raise DimensionMismatch("matrix is not symmetric to 1e-12")
    try:
        l = np.linalg.cholesky(a)
    except np.linalg.LinAlgError as exc:
        raise NotPositiveDefinite(str(exc)) from None
    return CholeskyFactor(l)


def ols_fit(z: np.ndarray, target: np.ndarray) -> FitResult:
    """Least squares of target on z via normal equations and Cholesky.

    Requires p <= n and a numerically nonsingular Gram matrix: the smallest
    Cholesky pivot must exceed 1e-10 times the largest, else SingularDesign.
    """
    z = np.asarray(z, dtype=float)
    t = np.asarray(target, dtype=float)
    if z.ndim != 2:
        raise DimensionMismatch("z must be 2-d")
    n, p = z.shape
    if t.shape != (n,):
        raise DimensionMismatch(f"target shape {t.shape} does not match z rows {n}")
    if p > n:
        raise RankDeficient(f"p = {p} exceeds n = {n}")
    if not (np.all(np.isfinite(z)) and np.all(np.isfinite(t))):
        raise NonFinite("z or target contains non-finite entries")
    gram = z.T @ z
    try:
        factor = cholesky(gram)
    except NotPositiveDefinite as exc:
        raise SingularDesign(f"Gram matrix not positive definite: {exc}") from None
    pivots = np.diag(factor.l) ** 2
    if p > 0 and pivots.min() <= _PIVOT_RTOL * pivots.max():
        raise SingularDesign(
            f"Gram pivot ratio {pivots.min() / pivots.max():.3e} below {_PIVOT_RTOL}"
        )
    coef = factor.solve(z.T @ t) if p > 0 else np.zeros(0)
    return FitResult(
        coef=coef,
        residuals=t - z @ coef,
        method="ols",
        tuning={},
        converged=True,
        iterations=0,
    )


def std_normal_cdf(x):
    """Standard normal CDF, elementwise; accurate to well below 1e-12."""
    return ndtr(x)


def std_normal_quantile(q):
    """Inverse standard normal CDF on the open interval (0, 1), elementwise."""
    q = np.asarray(q, dtype=float)
    if q.size and not (np.all(q > 0.0) and np.all(q < 1.0)):
        raise DomainError("quantile argument must lie strictly inside (0, 1)")
    out = ndtri(q)
    return float(out) if out.ndim == 0 else out
