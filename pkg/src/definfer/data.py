"""Core domain types: observed data, hypotheses, fit and test results.

All containers are frozen dataclasses holding read-only arrays, so a value
can be shared across threads or cached without defensive copies.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import DimensionMismatch, DomainError, NegativeVariance, NonFinite

FIT_METHODS = ("ols", "lasso", "scad", "mcp", "sparse_adaptive")


def _frozen_array(a, ndim):
    out = np.array(a, dtype=float, order="C")
    if out.ndim != ndim:
        raise DimensionMismatch(f"expected {ndim}-d array, got {out.ndim}-d")
    out.setflags(write=False)
    return out


@dataclass(frozen=True)
class Dataset:
    """One observed sample.

    y : response, shape (n,)
    w : error-prone proxy for the covariate of interest, shape (n,)
    z : clean covariates, shape (n, p)
    sigma_u2 : known variance of the additive proxy error (w = x + u)
    """

    y: np.ndarray
    w: np.ndarray
    z: np.ndarray
    sigma_u2: float

    def __post_init__(self):
        object.__setattr__(self, "y", _frozen_array(self.y, 1))
        object.__setattr__(self, "w", _frozen_array(self.w, 1))
        z = np.array(self.z, dtype=float, order="C")
        if z.ndim == 1:
            z = z.reshape(-1, 1)
        if z.ndim != 2:
            raise DimensionMismatch(f"z must be 2-d, got {z.ndim}-d")
        z.setflags(write=False)
        object.__setattr__(self, "z", z)
        object.__setattr__(self, "sigma_u2", float(self.sigma_u2))

    @property
    def n(self) -> int:
        return self.y.shape[0]

    @property
    def p(self) -> int:
        return self.z.shape[1]


def validate_dataset(d: Dataset) -> Dataset:
    """Check shapes, finiteness, and the error-variance sign; return d unchanged.

    Raises DimensionMismatch, NonFinite, or NegativeVariance. Idempotent:
    validating twice is the same as validating once.
    """
    n = d.y.shape[0]
    if d.w.shape[0] != n or d.z.shape[0] != n:
        raise DimensionMismatch(
            f"row counts differ: y has {n}, w has {d.w.shape[0]}, z has {d.z.shape[0]}"
        )
    if n < 1:
        raise DimensionMismatch("dataset is empty")
    for name, arr in (("y", d.y), ("w", d.w), ("z", d.z)):
        if not np.all(np.isfinite(arr)):
            raise NonFinite(f"{name} contains non-finite entries")
    if not np.isfinite(d.sigma_u2):
        raise NonFinite("sigma_u2 is not finite")
    if d.sigma_u2 < 0:
        raise NegativeVariance(f"sigma_u2 = {d.sigma_u2} is negative")
    return d


@dataclass(frozen=True)
class Hypothesis:
    """Point null H0: beta = beta_star, tested at level alpha."""

    beta_star: float
    alpha: float = 0.05

    def __post_init__(self):
        object.__setattr__(self, "beta_star", float(self.beta_star))
        object.__setattr__(self, "alpha", float(self.alpha))
        if not np.isfinite(self.beta_star):
            raise NonFinite("beta_star is not finite")
        if not (0.0 < self.alpha < 1.0):
            raise DomainError(f"alpha must lie in (0, 1), got {self.alpha}")


@dataclass(frozen=True)
class PseudoResponse:
    """Response with the hypothesized proxy contribution removed: v = y - w*beta_star."""

    v: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "v", _frozen_array(self.v, 1))


def pseudo_response(d: Dataset, beta_star: float) -> PseudoResponse:
    """v_i = y_i - w_i * beta_star. Linear in beta_star for fixed data."""
    b = float(beta_star)
    if not np.isfinite(b):
        raise NonFinite("beta_star is not finite")
    return PseudoResponse(d.y - b * d.w)


@dataclass(frozen=True)
class FitResult:
    """Output of any nuisance regression.

    residuals must equal target - z @ coef for the data the fit was run on;
    producers guarantee it, consumers may rely on it.
    tuning records every tuning scalar that was actually used.
    """

    coef: np.ndarray
    residuals: np.ndarray
    method: str
    tuning: dict = field(default_factory=dict)
    converged: bool = True
    iterations: int = 0

    def __post_init__(self):
        object.__setattr__(self, "coef", _frozen_array(self.coef, 1))
        object.__setattr__(self, "residuals", _frozen_array(self.residuals, 1))
        if self.method not in FIT_METHODS:
            raise DomainError(f"unknown fit method {self.method!r}")
        object.__setattr__(self, "tuning", dict(self.tuning))
        object.__setattr__(self, "iterations", int(self.iterations))
        if self.iterations < 0:
            raise DomainError("iterations must be nonnegative")

    def meta(self) -> dict:
        """Small serializable summary (no arrays) for reports."""
        return {
            "method": self.method,
            "tuning": dict(self.tuning),
            "converged": self.converged,
            "iterations": self.iterations,
        }


@dataclass(frozen=True)
class TestResult:
    """Studentized score test outcome for one (dataset, beta_star) pair."""

    t_raw: float
    sigma_hat: float
    t_df: float
    p_value: float
    reject: bool
    n: int
    p: int
    alpha: float
    gamma_meta: dict
    theta_meta: dict

    def __post_init__(self):
        if not (0.0 <= self.p_value <= 1.0):
            raise DomainError(f"p_value = {self.p_value} outside [0, 1]")
        if self.sigma_hat <= 0:
            raise DomainError("sigma_hat must be positive")
