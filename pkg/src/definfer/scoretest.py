"""Studentized score test for one coefficient measured with additive error.

For hypothesized value beta_star the per-observation score is

    s_i = (w_i - z_i' theta_hat) * (y_i - w_i beta_star - z_i' gamma_hat)
          + sigma_u2 * beta_star

with theta_hat the fit of w on z and gamma_hat the fit of the pseudo
response v = y - w beta_star on z. The summed score is studentized by the
root mean square of s and compared with the standard normal. Under
additive proxy error with known variance the moment holds when either
working regression is correctly specified, so the test keeps its level if
one of the two nuisance models is wrong.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .adaptive import AdaptiveTuning, default_adaptive_tuning, sparse_adaptive_fit
from .data import Dataset, FitResult, Hypothesis, TestResult, validate_dataset
from .errors import (
    DegenerateVariance,
    DimensionMismatch,
    DomainError,
    EmptyRegion,
    NonFinite,
    RankDeficient,
    SingularDesign,
    TooFewReplicates,
)
from .linalg import cholesky, std_normal_cdf, std_normal_quantile
from .penalized import (
    CdConfig,
    PenaltySpec,
    _auto_lambda_on_workspace,
    _fit_on_workspace,
    _GramWorkspace,
)

_SIGMA2_FLOOR = 1e-14

ESTIMATOR_KINDS = ("ols", "penalized", "sparse_adaptive")
_CLI_NAMES = ("ols", "lasso", "scad", "mcp", "adaptive")


@dataclass(frozen=True)
class EstimatorChoice:
    """How a nuisance regression is fit.

    kind "ols" ignores the remaining fields. kind "penalized" uses
    penalty_kind/lam/shape, with lam=None meaning the data-driven level
    at lambda_rate ("sqrt" or "linear") scaled by lambda_mult. kind
    "sparse_adaptive" uses tuning, with None meaning the rate-based
    default fed by a preliminary-lasso plug-in.
    """

    kind: str
    penalty_kind: str = "lasso"
    lam: float | None = None
    shape: float | None = None
    tuning: AdaptiveTuning | None = None
    lambda_rate: str = "sqrt"
    lambda_mult: float = 1.0

    def __post_init__(self):
        if self.kind not in ESTIMATOR_KINDS:
            raise DomainError(f"unknown estimator kind {self.kind!r}")
        if self.kind == "penalized" and self.penalty_kind not in ("lasso", "scad", "mcp"):
            raise DomainError(f"unknown penalty kind {self.penalty_kind!r}")
        if self.lambda_rate not in ("sqrt", "linear"):
            raise DomainError(f"unknown lambda rate {self.lambda_rate!r}")
        if not self.lambda_mult > 0:
            raise DomainError(f"lambda_mult must be positive, got {self.lambda_mult}")

    @classmethod
    def from_name(cls, name: str, lam: float | None = None,
                  shape: float | None = None,
                  tuning: AdaptiveTuning | None = None,
                  lambda_rate: str = "sqrt",
                  lambda_mult: float = 1.0) -> "EstimatorChoice":
        """Build from a CLI-style name: ols, lasso, scad, mcp, adaptive."""
        if name == "ols":
            return cls(kind="ols")
        if name in ("lasso", "scad", "mcp"):
            return cls(kind="penalized", penalty_kind=name, lam=lam, shape=shape,
                       lambda_rate=lambda_rate, lambda_mult=lambda_mult)
        if name == "adaptive":
            return cls(kind="sparse_adaptive", tuning=tuning)
        raise DomainError(f"unknown estimator name {name!r}; choose from {_CLI_NAMES}")

    def label(self) -> str:
        if self.kind == "penalized":
            return self.penalty_kind
        return "adaptive" if self.kind == "sparse_adaptive" else "ols"


class _NuisanceFitter:
    """Caches per-dataset matrices so grid scans refit cheaply.

    theta fits (w on z) do not depend on beta_star; gamma fits are refit
    for every requested beta_star.
    """

    def __init__(self, d: Dataset, cfg: CdConfig | None = None):
        self.d = d
        self.cfg = cfg or CdConfig()
        self._ws = None
        self._ols = None  # (factor, z.T @ y, z.T @ w)

    @property
    def ws(self) -> _GramWorkspace:
        if self._ws is None:
            self._ws = _GramWorkspace(self.d.z)
        return self._ws

    def _ols_cache(self):
        if self._ols is None:
            d = self.d
            if d.p >= d.n:
                raise RankDeficient(
                    f"ols estimator requires p < n, got p = {d.p}, n = {d.n}"
                )
            gram = d.z.T @ d.z
            try:
                factor = cholesky(gram)
            except Exception as exc:
                raise SingularDesign(f"Gram matrix unusable for ols: {exc}") from None
            pivots = np.diag(factor.l) ** 2
            if d.p > 0 and pivots.min() <= 1e-10 * pivots.max():
                raise SingularDesign("Gram matrix numerically singular")
            self._ols = (factor, d.z.T @ d.y, d.z.T @ d.w)
        return self._ols

    def _fit(self, target: np.ndarray, zt_target, choice: EstimatorChoice) -> FitResult:
        d = self.d
        if choice.kind == "ols":
            factor, _, _ = self._ols_cache()
            coef = factor.solve(zt_target) if d.p > 0 else np.zeros(0)
            return FitResult(
                coef=coef,
                residuals=target - d.z @ coef,
                method="ols",
                tuning={},
                converged=True,
                iterations=0,
            )
        if choice.kind == "penalized":
            lam = choice.lam
            if lam is None:
                lam = choice.lambda_mult * _auto_lambda_on_workspace(
                    self.ws, target, self.cfg, rate=choice.lambda_rate
                )
            spec = PenaltySpec(choice.penalty_kind, lam, choice.shape)
            return _fit_on_workspace(self.ws, target, spec, self.cfg)
        tuning = choice.tuning
        if tuning is None:
            tuning = self._auto_tuning(target)
        return sparse_adaptive_fit(d.z, target, tuning)

    def _auto_tuning(self, target: np.ndarray) -> AdaptiveTuning:
        """Rate defaults fed by r2 = n^{-1} target'(target - z @ lasso coef)."""
        lam = _auto_lambda_on_workspace(self.ws, target, self.cfg)
        pre = _fit_on_workspace(self.ws, target, PenaltySpec("lasso", lam), self.cfg)
        n = self.d.n
        r2 = float(target @ pre.residuals) / n
        if r2 <= 0:
            r2 = float(np.mean(pre.residuals**2))
        return default_adaptive_tuning(n, self.d.p, r2)

    def fit_theta(self, choice: EstimatorChoice) -> FitResult:
        d = self.d
        zt_w = self._ols_cache()[2] if choice.kind == "ols" else None
        return self._fit(d.w, zt_w, choice)

    def fit_gamma(self, beta_star: float, choice: EstimatorChoice) -> FitResult:
        d = self.d
        v = d.y - float(beta_star) * d.w
        zt_v = None
        if choice.kind == "ols":
            _, zt_y, zt_w = self._ols_cache()
            zt_v = zt_y - float(beta_star) * zt_w
        return self._fit(v, zt_v, choice)


def def_statistic(d: Dataset, beta_star: float, gamma_hat: FitResult,
                  theta_hat: FitResult, alpha: float = 0.05) -> TestResult:
    """Studentized score statistic at beta_star given both nuisance fits.

    Residuals are recomputed from the coefficient vectors, so the inputs
    only need valid coef arrays of length p.
    """
    validate_dataset(d)
    b = float(beta_star)
    if not math.isfinite(b):
        raise NonFinite("beta_star is not finite")
    if not (0.0 < alpha < 1.0):
        raise DomainError(f"alpha must lie in (0, 1), got {alpha}")
    if gamma_hat.coef.shape != (d.p,) or theta_hat.coef.shape != (d.p,):
        raise DimensionMismatch("nuisance coefficient length does not match z columns")
    resid_theta = d.w - d.z @ theta_hat.coef
    resid_gamma = d.y - b * d.w - d.z @ gamma_hat.coef
    s = resid_theta * resid_gamma + d.sigma_u2 * b
    n = d.n
    t_raw = float(s.sum()) / math.sqrt(n)
    sigma2 = float(np.mean(s * s))
    if not math.isfinite(sigma2):
        raise NonFinite("score variance is not finite")
    if sigma2 < _SIGMA2_FLOOR:
        raise DegenerateVariance(
            f"score variance {sigma2:.3e} below {_SIGMA2_FLOOR:.0e}"
        )
    sigma_hat = math.sqrt(sigma2)
    t_df = t_raw / sigma_hat
    p_value = float(2.0 * std_normal_cdf(-abs(t_df)))
    return TestResult(
        t_raw=t_raw,
        sigma_hat=sigma_hat,
        t_df=t_df,
        p_value=p_value,
        reject=bool(p_value < alpha),
        n=n,
        p=d.p,
        alpha=float(alpha),
        gamma_meta=gamma_hat.meta(),
        theta_meta=theta_hat.meta(),
    )


def run_test(d: Dataset, hyp: Hypothesis, choice_gamma: EstimatorChoice,
             choice_theta: EstimatorChoice,
             cfg: CdConfig | None = None) -> TestResult:
    """Fit both nuisances and evaluate the score test of H0: beta = beta_star."""
    validate_dataset(d)
    fitter = _NuisanceFitter(d, cfg)
    theta_hat = fitter.fit_theta(choice_theta)
    gamma_hat = fitter.fit_gamma(hyp.beta_star, choice_gamma)
    return def_statistic(d, hyp.beta_star, gamma_hat, theta_hat, alpha=hyp.alpha)


@dataclass(frozen=True)
class ConfidenceRegion:
    """Grid points where the test does not reject, and their hull."""

    accepted: np.ndarray
    interval_hull: tuple
    grid: tuple

    def __post_init__(self):
        acc = np.array(self.accepted, dtype=float)
        acc.setflags(write=False)
        object.__setattr__(self, "accepted", acc)
        object.__setattr__(
            self, "interval_hull",
            (float(self.interval_hull[0]), float(self.interval_hull[1])),
        )
        object.__setattr__(
            self, "grid",
            tuple(float(g) for g in self.grid),
        )


def _grid_points(lo: float, hi: float, step: float) -> np.ndarray:
    if not (math.isfinite(lo) and math.isfinite(hi) and math.isfinite(step)):
        raise NonFinite("grid bounds must be finite")
    if hi < lo:
        raise DomainError("grid upper bound below lower bound")
    if lo == hi:
        return np.array([lo])
    if not (step > 0):
        raise DomainError("grid step must be positive")
    count = int(math.floor((hi - lo) / step + 1e-9)) + 1
    return lo + step * np.arange(count)


def _default_window(d: Dataset, fitter: _NuisanceFitter, theta_hat: FitResult,
                    choice_gamma: EstimatorChoice):
    """Center and scale for the search grid from a ratio-type pilot estimate.

    Solving the (approximately linear in beta) score equation with the
    beta-independent residuals gives beta ~ r_theta'r_y / (r_theta'r_theta
    - n sigma_u2), with a studentized slope standard error.
    """
    r_t = d.w - d.z @ theta_hat.coef
    r_y = fitter.fit_gamma(0.0, choice_gamma).residuals
    ss = float(r_t @ r_t)
    denom = ss - d.n * d.sigma_u2
    if not denom > 0.01 * ss:
        denom = ss  # heavy proxy noise; fall back to the uncorrected slope
    bhat = float(r_t @ r_y) / denom
    s = r_t * (r_y - bhat * r_t) + d.sigma_u2 * bhat
    sig = math.sqrt(float(np.mean(s * s)))
    se = sig * math.sqrt(d.n) / denom
    if not (math.isfinite(se) and se > 0):
        scale_w = float(np.std(d.w)) or 1.0
        se = (float(np.std(d.y)) / scale_w + 1.0) / math.sqrt(d.n)
    return bhat, se


def confidence_region(d: Dataset, alpha: float, choice_gamma: EstimatorChoice,
                      choice_theta: EstimatorChoice, grid: tuple | None = None,
                      cfg: CdConfig | None = None) -> ConfidenceRegion:
    """All beta on a grid at which the level-alpha test does not reject.

    grid is (lo, hi, step); None runs a coarse pass over a pilot window
    (center +- 10 standard errors, 41 points), recenters at the smallest
    |t_df|, and refines with 401 points. theta is fit once; gamma is refit
    at every grid value. Raises EmptyRegion when every point rejects.
    """
    validate_dataset(d)
    if not (0.0 < alpha < 1.0):
        raise DomainError(f"alpha must lie in (0, 1), got {alpha}")
    fitter = _NuisanceFitter(d, cfg)
    theta_hat = fitter.fit_theta(choice_theta)
    crit = float(std_normal_quantile(1.0 - alpha / 2.0))

    def tdf_at(beta_t: float) -> float:
        gamma_hat = fitter.fit_gamma(beta_t, choice_gamma)
        return def_statistic(d, beta_t, gamma_hat, theta_hat, alpha=alpha).t_df

    if grid is None:
        center, se = _default_window(d, fitter, theta_hat, choice_gamma)
        half = 10.0 * se
        coarse = np.linspace(center - half, center + half, 41)
        t_coarse = np.array([abs(tdf_at(b)) for b in coarse])
        mid = float(coarse[int(np.argmin(t_coarse))])
        lo, hi = mid - half, mid + half
        step = 2.0 * half / 400.0
        points = lo + step * np.arange(401)
    else:
        lo, hi, step = (float(g) for g in grid)
        points = _grid_points(lo, hi, step)

    tdf = np.array([tdf_at(b) for b in points])
    accepted = points[np.abs(tdf) <= crit]
    if accepted.size == 0:
        raise EmptyRegion(
            f"no grid point accepted at alpha={alpha} on [{points[0]:g}, {points[-1]:g}]"
        )
    return ConfidenceRegion(
        accepted=accepted,
        interval_hull=(float(accepted.min()), float(accepted.max())),
        grid=(float(points[0]), float(points[-1]), float(step)),
    )


def estimate_sigma_u2_from_replicates(reps: np.ndarray) -> float:
    """Proxy-error variance of the replicate mean from m >= 2 replicates.

    Pools the per-pair mean-centered differences w[:, k] - w[:, j] over all
    j < k, and divides their pooled sample variance by 2m: each difference
    has variance 2 sigma_u2, and averaging m replicates divides the error
    variance by m.
    """
    reps = np.asarray(reps, dtype=float)
    if reps.ndim != 2:
        raise DimensionMismatch("replicates must be a 2-d array (rows, replicates)")
    n, m = reps.shape
    if m < 2:
        raise TooFewReplicates(f"need at least 2 replicate columns, got {m}")
    if n < 2:
        raise DomainError("need at least 2 rows to estimate a variance")
    if not np.all(np.isfinite(reps)):
        raise NonFinite("replicates contain non-finite entries")
    ss = 0.0
    pairs = 0
    for j in range(m):
        for k in range(j + 1, m):
            diff = reps[:, k] - reps[:, j]
            diff = diff - diff.mean()
            ss += float(diff @ diff)
            pairs += 1
    pooled = ss / (pairs * (n - 1))
    return pooled / (2.0 * m)


@dataclass(frozen=True)
class NoncentralityInputs:
    """Pieces of the local-alternative mean shift.

    sigma_xz2 is the residual variance of the true covariate given z;
    sigma_dr is the null standard deviation of the score; c is the local
    alternative sqrt(n) * (beta - beta_star).
    """

    sigma_xz2: float
    sigma_dr: float
    c: float

    def __post_init__(self):
        for name in ("sigma_xz2", "sigma_dr", "c"):
            object.__setattr__(self, name, float(getattr(self, name)))
        if not (self.sigma_xz2 > 0):
            raise DomainError("sigma_xz2 must be positive")
        if not (self.sigma_dr > 0):
            raise DomainError("sigma_dr must be positive")
        if not math.isfinite(self.c):
            raise NonFinite("c is not finite")


def noncentrality(inp: NoncentralityInputs) -> float:
    """Mean shift of the studentized statistic under the local alternative."""
    return inp.c * inp.sigma_xz2 / inp.sigma_dr


def theoretical_power(inp: NoncentralityInputs, alpha: float = 0.05) -> float:
    """Two-sided normal power at the given noncentrality; equals alpha at c=0."""
    if not (0.0 < alpha < 1.0):
        raise DomainError(f"alpha must lie in (0, 1), got {alpha}")
    z = float(std_normal_quantile(1.0 - alpha / 2.0))
    ncp = noncentrality(inp)
    return float(std_normal_cdf(-z - ncp) + std_normal_cdf(-z + ncp))
