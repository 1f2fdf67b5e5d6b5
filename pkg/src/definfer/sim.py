"""Registered simulation designs and the Monte Carlo driver.

Randomness is counter-based: every replication owns a Philox stream keyed
by (base_seed, rep_index), and all variates are produced by inverse CDF
from strictly interior 53-bit uniforms. Replications are therefore
independent of execution order and may run concurrently with identical
results.

Registered designs (alpha = 0.05 everywhere; eps, eta standard normal;
u ~ N(0, sigma_u^2); w = x + u):

  name          n    p   rho   sigma_u  covariates        x-model               y-model
  ex1-sim1a    100    4  0.5   1.0      z ~ AR(rho)       z1^2 + eta            x*b + z1 + 0.8 z2 + eps
  ex1-sim1b    100    4  0.5   1.0      z ~ AR(rho)       sin z1 + sin z2 + eta x*b + z1 + 0.8 z2 + eps
  ex1-sim1c    100    4  0.5   1.0      z ~ AR(rho)       z1 z2 + eta           x*b + z1 + 0.8 z2 + eps
  ex1-sim2a    100    4  0.5   1.0      z ~ AR(rho)       z1 + 0.8 z2 + eta     x*b + z1^2 + eps
  ex1-sim2b    100    4  0.5   1.0      z ~ AR(rho)       z1 + 0.8 z2 + eta     x*b + sin z1 + sin z2 + eps
  ex1-sim2c    100    4  0.5   1.0      z ~ AR(rho)       z1 + 0.8 z2 + eta     x*b + z1 z2 + eps
  ex2          200  200  0.25  0.1      z ~ AR(rho)       1.2 z1 + 0.8 z2 + eta x*b + z3 + z4 + eps
  ex2-corr     200  200  0.25  0.1      z ~ AR(rho)       1.2 z1 + 0.8 z3 + eta x*b + z3 + z4 + eps
  ex3-model1i  200  200  0.25  0.1      z ~ AR(rho)       2 t(z1) + t(z2) + eta x*b + z3 + z4 + eps
  ex3-model1ii 200  200  0.25  0.1      z ~ AR(rho)       2 t(z1) + t(z2) + eta x*b + z3 + z4 + x*eps
  ex3-model1iii 200 200  0.25  0.1      z ~ AR(rho)       same                  x*b + z3 + z4 + (1+0.5 sin(4 pi x))*eps
  ex3-model2a  200  200  0.75  0.1      (x,z) ~ AR(rho)   x = first coordinate  x*b + t(z)'g + eps, g1..g10 ~ U(0,1)
  ex3-model2b  200  200  0.75  0.1      (x,z) ~ AR(rho)   x = first coordinate  x*b + z3^2 + z4^2 + eps
  ex4-dense    200  200  0.75  0.1      (x,z) ~ AR(rho)   x = first coordinate  x*b + z'g + eps, g_j = U_j / sqrt(n)

with t(z) = (e^z - 1)/(e^z + 1). ex1 designs test with OLS nuisance fits,
ex2/ex3 with lasso at the data-driven level, ex4-dense with the
sparsity-adaptive program for both nuisances. Default beta_star: 0 for
ex1 designs, 1 for the rest (matching their null beta_true).
"""
from __future__ import annotations

import math
import time
from dataclasses import dataclass

import numpy as np

from .data import Dataset, Hypothesis, TestResult
from .errors import (
    DefInferError,
    DimensionMismatch,
    DomainError,
    NonFinite,
    UnknownDesign,
)
from .linalg import CholeskyFactor, cholesky, std_normal_quantile
from .scoretest import EstimatorChoice, run_test

_TWO53 = 1 << 53


def ar1_covariance(p: int, rho: float) -> np.ndarray:
    """Toeplitz matrix rho^|j-k|, positive definite for |rho| < 1."""
    if p < 0:
        raise DomainError("p must be nonnegative")
    if not (math.isfinite(rho) and abs(rho) < 1):
        raise DomainError(f"need |rho| < 1, got {rho}")
    if p == 0:
        return np.zeros((0, 0))
    idx = np.arange(p)
    return rho ** np.abs(idx[:, None] - idx[None, :])


_chol_cache: dict = {}


def _ar1_factor(p: int, rho: float) -> CholeskyFactor:
    key = (p, rho)
    if key not in _chol_cache:
        _chol_cache[key] = cholesky(ar1_covariance(p, rho))
    return _chol_cache[key]


def rep_generator(base_seed: int, rep_index: int) -> np.random.Generator:
    """Philox stream for one replication, keyed by (base_seed, rep_index)."""
    if not (0 <= int(base_seed) < 2**64):
        raise DomainError("base_seed must fit in 64 bits")
    if int(rep_index) < 0:
        raise DomainError("rep_index must be nonnegative")
    key = np.array([int(base_seed), int(rep_index)], dtype=np.uint64)
    return np.random.Generator(np.random.Philox(key=key))


def _uniforms(gen: np.random.Generator, shape) -> np.ndarray:
    """Strictly interior uniforms (k + 0.5) / 2^53."""
    k = gen.integers(0, _TWO53, size=shape, dtype=np.int64)
    return (k + 0.5) * (2.0 ** -53)


def _std_normals(gen: np.random.Generator, shape) -> np.ndarray:
    """Standard normals by inverse CDF on the counter stream."""
    return std_normal_quantile(_uniforms(gen, shape))


def mvn_sample(gen: np.random.Generator, factor: CholeskyFactor) -> np.ndarray:
    """One draw from N(0, l l') given the covariance factor."""
    if factor.dim == 0:
        return np.zeros(0)
    return factor.l @ _std_normals(gen, factor.dim)


def _mvn_matrix(gen: np.random.Generator, n: int, factor: CholeskyFactor) -> np.ndarray:
    """n independent rows from N(0, l l'), one matrix multiply."""
    g = _std_normals(gen, (n, factor.dim))
    return g @ factor.l.T


def _tanh_half(z: np.ndarray) -> np.ndarray:
    # (e^z - 1) / (e^z + 1)
    return np.tanh(z / 2.0)


@dataclass(frozen=True)
class SimDesign:
    """Fully specified Monte Carlo run: one DGP, one hypothesis, one estimator pair."""

    name: str
    n: int
    p: int
    rho: float
    sigma_u: float
    beta_true: float
    beta_star: float
    gamma_estimator: EstimatorChoice
    theta_estimator: EstimatorChoice
    alpha: float = 0.05
    reps: int = 1000
    base_seed: int = 0

    def __post_init__(self):
        if self.n < 1 or self.p < 1:
            raise DomainError("n and p must be positive")
        if not (abs(self.rho) < 1):
            raise DomainError(f"need |rho| < 1, got {self.rho}")
        if self.sigma_u < 0:
            raise DomainError("sigma_u must be nonnegative")
        if not (0.0 < self.alpha < 1.0):
            raise DomainError(f"alpha must lie in (0, 1), got {self.alpha}")
        if self.reps < 1:
            raise DomainError("reps must be >= 1")
        if not (math.isfinite(self.beta_true) and math.isfinite(self.beta_star)):
            raise NonFinite("beta_true and beta_star must be finite")
        if not (0 <= self.base_seed < 2**64):
            raise DomainError("base_seed must fit in 64 bits")


@dataclass(frozen=True)
class SimReport:
    """Aggregate of one Monte Carlo run; failures are errored replications."""

    design: SimDesign
    rejection_rate: float
    monte_carlo_se: float
    failures: int
    wall_time: float


def _need_p(design: SimDesign, minimum: int):
    if design.p < minimum:
        raise DimensionMismatch(
            f"design {design.name} needs p >= {minimum}, got {design.p}"
        )


# Builders draw variates in a fixed order: covariate block, then eta,
# then coefficient uniforms, then eps, then u. Changing the order would
# silently change every seeded result, so keep it.

def _build_ex1_sim1(variant: str):
    def build(design: SimDesign, gen: np.random.Generator) -> Dataset:
        _need_p(design, 2)
        z = _mvn_matrix(gen, design.n, _ar1_factor(design.p, design.rho))
        eta = _std_normals(gen, design.n)
        if variant == "a":
            x = z[:, 0] ** 2 + eta
        elif variant == "b":
            x = np.sin(z[:, 0]) + np.sin(z[:, 1]) + eta
        else:
            x = z[:, 0] * z[:, 1] + eta
        eps = _std_normals(gen, design.n)
        u = design.sigma_u * _std_normals(gen, design.n)
        y = x * design.beta_true + z[:, 0] + 0.8 * z[:, 1] + eps
        return Dataset(y=y, w=x + u, z=z, sigma_u2=design.sigma_u**2)

    return build


def _build_ex1_sim2(variant: str):
    def build(design: SimDesign, gen: np.random.Generator) -> Dataset:
        _need_p(design, 2)
        z = _mvn_matrix(gen, design.n, _ar1_factor(design.p, design.rho))
        eta = _std_normals(gen, design.n)
        x = z[:, 0] + 0.8 * z[:, 1] + eta
        eps = _std_normals(gen, design.n)
        u = design.sigma_u * _std_normals(gen, design.n)
        if variant == "a":
            shift = z[:, 0] ** 2
        elif variant == "b":
            shift = np.sin(z[:, 0]) + np.sin(z[:, 1])
        else:
            shift = z[:, 0] * z[:, 1]
        y = x * design.beta_true + shift + eps
        return Dataset(y=y, w=x + u, z=z, sigma_u2=design.sigma_u**2)

    return build


def _build_ex2(second_col: int):
    def build(design: SimDesign, gen: np.random.Generator) -> Dataset:
        _need_p(design, 4)
        z = _mvn_matrix(gen, design.n, _ar1_factor(design.p, design.rho))
        eta = _std_normals(gen, design.n)
        x = 1.2 * z[:, 0] + 0.8 * z[:, second_col] + eta
        eps = _std_normals(gen, design.n)
        u = design.sigma_u * _std_normals(gen, design.n)
        y = x * design.beta_true + z[:, 2] + z[:, 3] + eps
        return Dataset(y=y, w=x + u, z=z, sigma_u2=design.sigma_u**2)

    return build


def _build_ex3_model1(variant: str):
    def build(design: SimDesign, gen: np.random.Generator) -> Dataset:
        _need_p(design, 4)
        z = _mvn_matrix(gen, design.n, _ar1_factor(design.p, design.rho))
        eta = _std_normals(gen, design.n)
        x = 2.0 * _tanh_half(z[:, 0]) + _tanh_half(z[:, 1]) + eta
        eps = _std_normals(gen, design.n)
        u = design.sigma_u * _std_normals(gen, design.n)
        if variant == "i":
            noise = eps
        elif variant == "ii":
            noise = x * eps
        else:
            noise = (1.0 + 0.5 * np.sin(4.0 * np.pi * x)) * eps
        y = x * design.beta_true + z[:, 2] + z[:, 3] + noise
        return Dataset(y=y, w=x + u, z=z, sigma_u2=design.sigma_u**2)

    return build


def _build_ex3_model2(variant: str):
    def build(design: SimDesign, gen: np.random.Generator) -> Dataset:
        _need_p(design, 10 if variant == "a" else 4)
        xz = _mvn_matrix(gen, design.n, _ar1_factor(design.p + 1, design.rho))
        x, z = xz[:, 0], xz[:, 1:]
        if variant == "a":
            gcoef = _uniforms(gen, 10)
            shift = _tanh_half(z[:, :10]) @ gcoef
        else:
            shift = z[:, 2] ** 2 + z[:, 3] ** 2
        eps = _std_normals(gen, design.n)
        u = design.sigma_u * _std_normals(gen, design.n)
        y = x * design.beta_true + shift + eps
        return Dataset(y=y, w=x + u, z=z, sigma_u2=design.sigma_u**2)

    return build


def _build_ex4():
    def build(design: SimDesign, gen: np.random.Generator) -> Dataset:
        xz = _mvn_matrix(gen, design.n, _ar1_factor(design.p + 1, design.rho))
        x, z = xz[:, 0], xz[:, 1:]
        gcoef = _uniforms(gen, design.p) / math.sqrt(design.n)
        eps = _std_normals(gen, design.n)
        u = design.sigma_u * _std_normals(gen, design.n)
        y = x * design.beta_true + z @ gcoef + eps
        return Dataset(y=y, w=x + u, z=z, sigma_u2=design.sigma_u**2)

    return build


def _entry(builder, n, p, rho, sigma_u, beta_star, estimator):
    return {
        "builder": builder,
        "n": n,
        "p": p,
        "rho": rho,
        "sigma_u": sigma_u,
        "beta_star": beta_star,
        "estimator": estimator,
    }


_REGISTRY = {
    "ex1-sim1a": _entry(_build_ex1_sim1("a"), 100, 4, 0.5, 1.0, 0.0, "ols"),
    "ex1-sim1b": _entry(_build_ex1_sim1("b"), 100, 4, 0.5, 1.0, 0.0, "ols"),
    "ex1-sim1c": _entry(_build_ex1_sim1("c"), 100, 4, 0.5, 1.0, 0.0, "ols"),
    "ex1-sim2a": _entry(_build_ex1_sim2("a"), 100, 4, 0.5, 1.0, 0.0, "ols"),
    "ex1-sim2b": _entry(_build_ex1_sim2("b"), 100, 4, 0.5, 1.0, 0.0, "ols"),
    "ex1-sim2c": _entry(_build_ex1_sim2("c"), 100, 4, 0.5, 1.0, 0.0, "ols"),
    "ex2": _entry(_build_ex2(1), 200, 200, 0.25, 0.1, 1.0, "lasso"),
    "ex2-corr": _entry(_build_ex2(2), 200, 200, 0.25, 0.1, 1.0, "lasso"),
    "ex3-model1i": _entry(_build_ex3_model1("i"), 200, 200, 0.25, 0.1, 1.0, "lasso"),
    "ex3-model1ii": _entry(_build_ex3_model1("ii"), 200, 200, 0.25, 0.1, 1.0, "lasso"),
    "ex3-model1iii": _entry(_build_ex3_model1("iii"), 200, 200, 0.25, 0.1, 1.0, "lasso"),
    "ex3-model2a": _entry(_build_ex3_model2("a"), 200, 200, 0.75, 0.1, 1.0, "lasso"),
    "ex3-model2b": _entry(_build_ex3_model2("b"), 200, 200, 0.75, 0.1, 1.0, "lasso"),
    "ex4-dense": _entry(_build_ex4(), 200, 200, 0.75, 0.1, 1.0, "adaptive"),
}

DESIGN_NAMES = tuple(sorted(_REGISTRY))


def make_design(name: str, **overrides) -> SimDesign:
    """Registered design with its defaults; keyword overrides replace any field.

    Recognized overrides: n, p, rho, sigma_u, beta_true, beta_star, alpha,
    reps, base_seed, gamma_estimator, theta_estimator (estimator names or
    EstimatorChoice values).
    """
    if name not in _REGISTRY:
        raise UnknownDesign(
            f"unknown design {name!r}; registered: {', '.join(DESIGN_NAMES)}"
        )
    entry = _REGISTRY[name]
    allowed = {
        "n", "p", "rho", "sigma_u", "beta_true", "beta_star", "alpha",
        "reps", "base_seed", "gamma_estimator", "theta_estimator",
    }
    unknown = set(overrides) - allowed
    if unknown:
        raise DomainError(f"unknown design overrides: {sorted(unknown)}")

    def choice(val):
        if isinstance(val, EstimatorChoice):
            return val
        return EstimatorChoice.from_name(val)

    beta_star = float(overrides.get("beta_star", entry["beta_star"]))
    return SimDesign(
        name=name,
        n=int(overrides.get("n", entry["n"])),
        p=int(overrides.get("p", entry["p"])),
        rho=float(overrides.get("rho", entry["rho"])),
        sigma_u=float(overrides.get("sigma_u", entry["sigma_u"])),
        beta_true=float(overrides.get("beta_true", beta_star)),
        beta_star=beta_star,
        gamma_estimator=choice(overrides.get("gamma_estimator", entry["estimator"])),
        theta_estimator=choice(overrides.get("theta_estimator", entry["estimator"])),
        alpha=float(overrides.get("alpha", 0.05)),
        reps=int(overrides.get("reps", 1000)),
        base_seed=int(overrides.get("base_seed", 0)),
    )


def generate(design: SimDesign, rep_index: int) -> Dataset:
    """Dataset for one replication; bit-identical for equal (design, rep_index)."""
    if design.name not in _REGISTRY:
        raise UnknownDesign(f"unknown design {design.name!r}")
    gen = rep_generator(design.base_seed, rep_index)
    return _REGISTRY[design.name]["builder"](design, gen)


def replicate(design: SimDesign, rep_index: int) -> TestResult:
    """Generate one dataset and run the design's test on it."""
    d = generate(design, rep_index)
    hyp = Hypothesis(beta_star=design.beta_star, alpha=design.alpha)
    return run_test(d, hyp, design.gamma_estimator, design.theta_estimator)


def run_monte_carlo(design: SimDesign) -> SimReport:
    """Rejection rate over design.reps replications.

    Per-replication errors are counted as failures and excluded from the
    rate; the binomial standard error uses the successful count. The
    per-replication reject flags are accumulated into a rep-indexed array,
    so execution order cannot change the aggregate.
    """
    start = time.perf_counter()
    rejects = np.zeros(design.reps, dtype=bool)
    ok = np.zeros(design.reps, dtype=bool)
    for i in range(design.reps):
        try:
            rejects[i] = replicate(design, i).reject
            ok[i] = True
        except DefInferError:
            pass
    n_ok = int(ok.sum())
    if n_ok > 0:
        rate = float(rejects[ok].mean())
        se = math.sqrt(rate * (1.0 - rate) / n_ok)
    else:
        rate = math.nan
        se = math.nan
    return SimReport(
        design=design,
        rejection_rate=rate,
        monte_carlo_se=se,
        failures=design.reps - n_ok,
        wall_time=time.perf_counter() - start,
    )
