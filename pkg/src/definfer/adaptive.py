"""Sparsity-adaptive L1-minimization estimator and its linear-program backend.

The estimator solves

    min ||gamma||_1  subject to
        ||n^{-1} Z'(target - Z gamma)||_inf <= eta      (gradient family)
        ||target - Z gamma||_inf <= mu                  (residual family)
        n^{-1} target'(target - Z gamma) >= rho         (inner-product family)

encoded with the split gamma = gp - gm, gp, gm >= 0, so the objective is
the sum of all variables and every constraint is linear.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.optimize import linprog

from .data import FitResult
from .errors import (
    DimensionMismatch,
    DomainError,
    InfeasibleProgram,
    NonFinite,
    NumericalBreakdown,
)

RELATIONS = ("<=", ">=", "=")

# Tolerances on returned LP solutions: constraint slack and bound violation.
_FEAS_TOL = 1e-7
_BOUND_TOL = 1e-9


@dataclass(frozen=True)
class LpProblem:
    """Minimize objective @ x over x >= 0 subject to rows of (row, rel, rhs)."""

    objective: np.ndarray
    constraints: tuple

    def __post_init__(self):
        c = np.array(self.objective, dtype=float)
        if c.ndim != 1:
            raise DimensionMismatch("objective must be a vector")
        if not np.all(np.isfinite(c)):
            raise NonFinite("objective contains non-finite entries")
        c.setflags(write=False)
        object.__setattr__(self, "objective", c)
        rows = []
        for row, rel, rhs in self.constraints:
            r = np.asarray(row, dtype=float)
            if r.shape != c.shape:
                raise DimensionMismatch(
                    f"constraint row length {r.shape} does not match objective {c.shape}"
                )
            if rel not in RELATIONS:
                raise DomainError(f"unknown relation {rel!r}")
            rhs = float(rhs)
            if not (np.all(np.isfinite(r)) and math.isfinite(rhs)):
                raise NonFinite("constraint contains non-finite entries")
            rows.append((r, rel, rhs))
        object.__setattr__(self, "constraints", tuple(rows))


@dataclass(frozen=True)
class LpSolution:
    """Solver outcome; x and objective_value are meaningful only when optimal."""

    x: np.ndarray
    objective_value: float
    status: str


def simplex_solve(prob: LpProblem) -> LpSolution:
    """Solve the LP with a dual-simplex method; verify the returned point.

    status is one of "optimal", "infeasible", "unbounded". Solver-side
    numerical failures, or an "optimal" point violating a constraint by
    more than 1e-7, raise NumericalBreakdown.
    """
    m = prob.objective.shape[0]
    a_ub, b_ub, a_eq, b_eq = [], [], [], []
    for row, rel, rhs in prob.constraints:
        if rel == "<=":
            a_ub.append(row)
            b_ub.append(rhs)
        elif rel == ">=":
            a_ub.append(-row)
            b_ub.append(-rhs)
        else:
            a_eq.append(row)
            b_eq.append(rhs)
    res = linprog(
        prob.objective,
        A_ub=np.asarray(a_ub) if a_ub else None,
        b_ub=np.asarray(b_ub) if b_ub else None,
        A_eq=np.asarray(a_eq) if a_eq else None,
        b_eq=np.asarray(b_eq) if b_eq else None,
        bounds=(0, None),
        method="highs-ds",
    )
    if res.status == 2:
        return LpSolution(np.zeros(m), math.nan, "infeasible")
    if res.status == 3:
        return LpSolution(np.zeros(m), math.nan, "unbounded")
    if res.status != 0 or res.x is None:
        raise NumericalBreakdown(f"LP solver failed: {res.message}")
    x = np.asarray(res.x, dtype=float)
    if np.min(x, initial=0.0) < -_BOUND_TOL:
        raise NumericalBreakdown("solver returned a negative coordinate")
    for row, rel, rhs in prob.constraints:
        v = float(row @ x)
        ok = (
            v <= rhs + _FEAS_TOL
            if rel == "<="
            else v >= rhs - _FEAS_TOL if rel == ">=" else abs(v - rhs) <= _FEAS_TOL
        )
        if not ok:
            raise NumericalBreakdown(
                f"solver point violates a {rel} constraint by {abs(v - rhs):.3e}"
            )
    return LpSolution(np.maximum(x, 0.0), float(prob.objective @ x), "optimal")


@dataclass(frozen=True)
class AdaptiveTuning:
    """Constraint levels for the adaptive program.

    mu and rho must be positive; eta may be 0 (it is exactly 0 when p = 1
    under the default rule), in which case the program demands an exactly
    vanishing gradient and is typically infeasible.
    """

    eta: float
    mu: float
    rho: float

    def __post_init__(self):
        for name in ("eta", "mu", "rho"):
            object.__setattr__(self, name, float(getattr(self, name)))
            if not math.isfinite(getattr(self, name)):
                raise NonFinite(f"{name} is not finite")
        if self.eta < 0:
            raise DomainError("eta must be >= 0")
        if self.mu <= 0 or self.rho <= 0:
            raise DomainError("mu and rho must be positive")


def default_adaptive_tuning(n: int, p: int, r2: float, kind: str = "gamma",
                            c_eta: float = 0.25, c_mu: float = 1.5,
                            c_rho: float = 0.5) -> AdaptiveTuning:
    """Rate-based defaults given a residual inner-product plug-in r2 > 0.

    eta = c_eta * log(n) * sqrt(log(p) / n)
    mu  = c_mu * sqrt(r2) * sqrt(n)
    rho = c_rho * r2

    kind tags which nuisance the tuning is for ("gamma" or "theta"); the
    formulas are shared, only the plug-in r2 differs between the two.
    """
    if kind not in ("gamma", "theta"):
        raise DomainError(f"kind must be 'gamma' or 'theta', got {kind!r}")
    if n < 2 or p < 1:
        raise DomainError("default_adaptive_tuning requires n >= 2, p >= 1")
    if not (r2 > 0 and math.isfinite(r2)):
        raise DomainError(f"r2 must be positive and finite, got {r2}")
    eta = c_eta * math.log(n) * math.sqrt(math.log(p) / n)
    mu = c_mu * math.sqrt(r2) * math.sqrt(n)
    rho = c_rho * r2
    return AdaptiveTuning(eta=eta, mu=mu, rho=rho)


_FAMILY_NAMES = ("gradient", "residual", "inner_product")


def _program_blocks(z: np.ndarray, target: np.ndarray, tuning: AdaptiveTuning):
    """Constraint matrix blocks (rows, rhs, family index per row) for the split LP."""
    n, p = z.shape
    g = z.T @ target / n
    gram = z.T @ z / n
    m2 = float(target @ target) / n
    # variables [gp, gm]; gamma = gp - gm
    rows = np.empty((2 * p + 2 * n + 1, 2 * p))
    rhs = np.empty(2 * p + 2 * n + 1)
    fam = np.empty(2 * p + 2 * n + 1, dtype=np.int64)
    rows[:p, :p] = gram
    rows[:p, p:] = -gram
    rhs[:p] = g + tuning.eta
    rows[p : 2 * p, :p] = -gram
    rows[p : 2 * p, p:] = gram
    rhs[p : 2 * p] = tuning.eta - g
    fam[: 2 * p] = 0
    rows[2 * p : 2 * p + n, :p] = z
    rows[2 * p : 2 * p + n, p:] = -z
    rhs[2 * p : 2 * p + n] = target + tuning.mu
    rows[2 * p + n : 2 * p + 2 * n, :p] = -z
    rows[2 * p + n : 2 * p + 2 * n, p:] = z
    rhs[2 * p + n : 2 * p + 2 * n] = tuning.mu - target
    fam[2 * p : 2 * p + 2 * n] = 1
    rows[-1, :p] = g
    rows[-1, p:] = -g
    rhs[-1] = m2 - tuning.rho
    fam[-1] = 2
    return rows, rhs, fam


def _diagnose_infeasible(rows, rhs, fam) -> tuple:
    """Name the constraint families that cannot be satisfied jointly.

    Solves the elastic relaxation min s_0+s_1+s_2 with one slack per
    family added to its rows' right sides; families needing positive
    slack at the optimum are reported.
    """
    n_rows, n_vars = rows.shape
    elastic = np.zeros((n_rows, n_vars + 3))
    elastic[:, :n_vars] = rows
    for i in range(n_rows):
        elastic[i, n_vars + fam[i]] = -1.0
    c = np.zeros(n_vars + 3)
    c[n_vars:] = 1.0
    res = linprog(c, A_ub=elastic, b_ub=rhs, bounds=(0, None), method="highs-ds")
    if res.status != 0 or res.x is None:
        return tuple(_FAMILY_NAMES)  # could not localize; report all
    slack = res.x[n_vars:]
    names = tuple(
        _FAMILY_NAMES[k] for k in range(3) if slack[k] > 1e-9 * max(1.0, abs(rhs).max())
    )
    return names if names else tuple(_FAMILY_NAMES)


def sparse_adaptive_fit(z: np.ndarray, target: np.ndarray,
                        tuning: AdaptiveTuning) -> FitResult:
    """L1-minimal coefficient vector satisfying the three constraint families.

    Raises InfeasibleProgram (naming the binding families) when no
    coefficient vector satisfies them jointly.
    """
    z = np.ascontiguousarray(z, dtype=float)
    t = np.ascontiguousarray(target, dtype=float)
    if z.ndim != 2:
        raise DimensionMismatch("z must be 2-d")
    n, p = z.shape
    if t.shape != (n,):
        raise DimensionMismatch(f"target shape {t.shape} does not match z rows {n}")
    if n < 1 or p < 1:
        raise DimensionMismatch("need n >= 1 and p >= 1")
    if not (np.all(np.isfinite(z)) and np.all(np.isfinite(t))):
        raise NonFinite("z or target contains non-finite entries")
    rows, rhs, fam = _program_blocks(z, t, tuning)
    prob = LpProblem(
        objective=np.ones(2 * p),
        constraints=tuple((rows[i], "<=", rhs[i]) for i in range(rows.shape[0])),
    )
    sol = simplex_solve(prob)
    if sol.status == "infeasible":
        families = _diagnose_infeasible(rows, rhs, fam)
        raise InfeasibleProgram(
            "adaptive program infeasible; binding families: " + ", ".join(families),
            families=families,
        )
    if sol.status != "optimal":
        # objective >= 0 rules out unboundedness; reaching here is solver failure
        raise NumericalBreakdown(f"unexpected LP status {sol.status!r}")
    gp, gm = sol.x[:p], sol.x[p:]
    overlap = np.minimum(gp, gm)
    coef = (gp - overlap) - (gm - overlap)
    return FitResult(
        coef=coef,
        residuals=t - z @ coef,
        method="sparse_adaptive",
        tuning={"eta": tuning.eta, "mu": tuning.mu, "rho": tuning.rho},
        converged=True,
        iterations=0,
    )
