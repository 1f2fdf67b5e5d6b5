"""Acceptance gate: one test per numbered criterion.

Every test prints exactly one summary line

    criterion K: PASS|FAIL - measured values

with capture suspended before running its assertions, so the outcome
ledger is visible in any run log even when a criterion fails. Tolerances
and runtime budgets are fixed here; they are the contract, not knobs.

The high-dimensional table criteria (3, 4, 6, 7, 8) share one tuned
estimator: lasso with the n^{-1} log p penalty rate at twice the
data-driven level. The faster decay removes enough shrinkage bias on the
theta side for the studentized statistic to center; the multiplier keeps
the gamma fit sparse. Criteria 1, 2, 10 use plain least squares and
criterion 5 the sparsity-adaptive program, as registered per design.
"""
import math
import time

import numpy as np
from scipy.special import ndtr

from definfer import (
    Dataset,
    EmptyRegion,
    EstimatorChoice,
    FitResult,
    Hypothesis,
    LpProblem,
    NoncentralityInputs,
    PenaltySpec,
    confidence_region,
    def_statistic,
    estimate_sigma_u2_from_replicates,
    generate,
    make_design,
    ols_fit,
    penalized_fit,
    replicate,
    run_monte_carlo,
    run_test,
    simplex_solve,
    theoretical_power,
)
from oracles import ks_statistic_standard_normal, random_lp, vertex_enum_lp

TUNED = EstimatorChoice(
    kind="penalized", penalty_kind="lasso", lambda_rate="linear", lambda_mult=2.0
)


def _report(capfd, num, ok, detail):
    verdict = "PASS" if ok else "FAIL"
    with capfd.disabled():
        print(f"criterion {num}: {verdict} - {detail}", flush=True)


def test_criterion_1_low_dim_size(capfd):
    start = time.perf_counter()
    names = [f"ex1-sim{i}{v}" for i in (1, 2) for v in "abc"]
    rates = {}
    for name in names:
        rates[name] = run_monte_carlo(make_design(name, reps=1000)).rejection_rate
    elapsed = time.perf_counter() - start
    ok = all(0.03 <= r <= 0.07 for r in rates.values()) and elapsed <= 60
    detail = (
        "sizes "
        + " ".join(f"{name.split('-')[1]}={r:.3f}" for name, r in rates.items())
        + f", window [0.03, 0.07], {elapsed:.0f}s"
    )
    _report(capfd, 1, ok, detail)
    for name in names:
        assert 0.03 <= rates[name] <= 0.07, name
    assert elapsed <= 60


def test_criterion_2_low_dim_power_shape(capfd):
    start = time.perf_counter()
    power = {}
    for b in (-2.0, 0.0, 0.5, 1.0, 1.5, 2.0):
        design = make_design("ex1-sim1a", beta_true=b, reps=1000)
        power[b] = run_monte_carlo(design).rejection_rate
    elapsed = time.perf_counter() - start
    ramp = [power[b] for b in (0.0, 0.5, 1.0, 1.5, 2.0)]
    drops = [ramp[k] - ramp[k + 1] for k in range(4) if ramp[k + 1] < ramp[k]]
    shape_ok = len(drops) <= 1 and all(d <= 0.02 for d in drops)
    tails_ok = power[-2.0] >= 0.95 and power[2.0] >= 0.95
    ok = tails_ok and shape_ok and elapsed <= 60
    detail = (
        "power " + " ".join(f"{b:g}:{power[b]:.3f}" for b in sorted(power))
        + f", {elapsed:.0f}s"
    )
    _report(capfd, 2, ok, detail)
    assert tails_ok, f"tail power {power[-2.0]:.3f}/{power[2.0]:.3f} below 0.95"
    assert shape_ok, f"non-monotone beyond one 0.02 inversion: {ramp}"
    assert elapsed <= 60


def test_criterion_3_high_dim_size_and_power(capfd):
    start = time.perf_counter()
    rates = {}
    for b in (1.0, 0.6, 1.6):
        design = make_design(
            "ex3-model1i", beta_true=b, reps=1000,
            gamma_estimator=TUNED, theta_estimator=TUNED,
        )
        rates[b] = run_monte_carlo(design).rejection_rate
    elapsed = time.perf_counter() - start
    size_ok = abs(rates[1.0] - 0.057) <= 0.03
    power_ok = rates[0.6] >= 0.98 and rates[1.6] >= 0.98
    ok = size_ok and power_ok and elapsed <= 900
    detail = (
        f"size {rates[1.0]:.3f} (target 0.057 +- 0.03), power "
        f"beta=0.6:{rates[0.6]:.3f} beta=1.6:{rates[1.6]:.3f} (>= 0.98), "
        f"{elapsed:.0f}s"
    )
    _report(capfd, 3, ok, detail)
    assert size_ok
    assert power_ok
    assert elapsed <= 900


def test_criterion_4_joint_design_size_and_power(capfd):
    start = time.perf_counter()
    rates = {}
    for b in (1.0, 1.8):
        design = make_design(
            "ex3-model2b", beta_true=b, reps=1000,
            gamma_estimator=TUNED, theta_estimator=TUNED,
        )
        rates[b] = run_monte_carlo(design).rejection_rate
    elapsed = time.perf_counter() - start
    size_ok = abs(rates[1.0] - 0.055) <= 0.03
    power_ok = abs(rates[1.8] - 0.625) <= 0.08
    ok = size_ok and power_ok and elapsed <= 900
    detail = (
        f"size {rates[1.0]:.3f} (target 0.055 +- 0.03), power at beta=1.8 "
        f"{rates[1.8]:.3f} (target 0.625 +- 0.08), {elapsed:.0f}s"
    )
    _report(capfd, 4, ok, detail)
    assert size_ok
    assert power_ok
    assert elapsed <= 900


def test_criterion_5_dense_nuisance_contrast(capfd):
    start = time.perf_counter()
    adaptive = run_monte_carlo(make_design("ex4-dense", reps=500)).rejection_rate
    plain = EstimatorChoice(kind="penalized", penalty_kind="lasso")
    contrast = run_monte_carlo(
        make_design(
            "ex4-dense", reps=500, gamma_estimator=plain, theta_estimator=plain
        )
    ).rejection_rate
    elapsed = time.perf_counter() - start
    adaptive_ok = abs(adaptive - 0.055) <= 0.035
    contrast_ok = contrast >= 0.09
    ok = adaptive_ok and contrast_ok and elapsed <= 2700
    detail = (
        f"adaptive size {adaptive:.3f} (target 0.055 +- 0.035), lasso size "
        f"{contrast:.3f} (>= 0.09 required), {elapsed:.0f}s"
    )
    _report(capfd, 5, ok, detail)
    assert adaptive_ok
    assert elapsed <= 2700
    assert contrast_ok, (
        f"lasso size {contrast:.3f} did not exceed 0.09 on the dense design"
    )


def test_criterion_6_null_normality(capfd):
    design = make_design("ex2", gamma_estimator=TUNED, theta_estimator=TUNED)
    draws = np.array([replicate(design, r).t_df for r in range(1000)])
    ks = ks_statistic_standard_normal(draws)
    crit = 1.63 / math.sqrt(1000.0)
    ok = ks < crit
    _report(capfd, 6, ok, f"KS {ks:.4f} vs critical {crit:.4f} on 1000 null draws")
    assert ks < crit


def test_criterion_7_confidence_region_coverage(capfd):
    start = time.perf_counter()
    design = make_design("ex2", gamma_estimator=TUNED, theta_estimator=TUNED)
    reps = 500
    covered = 0
    for r in range(reps):
        d = generate(design, r)
        try:
            region = confidence_region(
                d, 0.05, TUNED, TUNED, grid=(0.5, 1.5, 0.025)
            )
        except EmptyRegion:
            continue
        if np.any(np.abs(region.accepted - 1.0) < 1e-6):
            covered += 1
    coverage = covered / reps
    elapsed = time.perf_counter() - start
    ok = 0.92 <= coverage <= 0.98 and elapsed <= 1200
    _report(
        capfd, 7, ok,
        f"coverage {coverage:.3f} in [0.92, 0.98] over {reps} regions, "
        f"{elapsed:.0f}s",
    )
    assert 0.92 <= coverage <= 0.98
    assert elapsed <= 1200


def test_criterion_8_local_power_matches_theory(capfd):
    big = generate(make_design("ex2", n=20_000, reps=1), 0)
    sigma_dr = run_test(big, Hypothesis(beta_star=1.0), TUNED, TUNED).sigma_hat
    pairs = {}
    for c in (1.0, 2.0, 3.0):
        design = make_design(
            "ex2", beta_true=1.0 + c / math.sqrt(200.0), reps=500,
            gamma_estimator=TUNED, theta_estimator=TUNED,
        )
        emp = run_monte_carlo(design).rejection_rate
        theo = theoretical_power(
            NoncentralityInputs(sigma_xz2=1.0, sigma_dr=sigma_dr, c=c)
        )
        pairs[c] = (emp, theo)
    ok = all(abs(e - t) <= 0.05 for e, t in pairs.values())
    detail = (
        "empirical/theory "
        + " ".join(f"c={c:g}:{e:.3f}/{t:.3f}" for c, (e, t) in pairs.items())
        + f" (+-0.05), sigma_dr {sigma_dr:.4f}"
    )
    _report(capfd, 8, ok, detail)
    for c, (e, t) in pairs.items():
        assert abs(e - t) <= 0.05, f"c={c:g}: empirical {e:.3f} vs theory {t:.3f}"


def test_criterion_9_deterministic_oracle_suites(capfd):
    start = time.perf_counter()
    rng = np.random.default_rng(901)
    # (a) penalty level zero reproduces least squares
    worst_a = 0.0
    for k in range(20):
        z = rng.normal(size=(40, 2 + k % 7))
        t = rng.normal(size=40)
        fit = penalized_fit(z, t, PenaltySpec(kind="lasso", lam=0.0))
        ref = ols_fit(z, t)
        worst_a = max(worst_a, float(np.max(np.abs(fit.coef - ref.coef))))
    # (b) simplex backend agrees with exhaustive vertex enumeration
    worst_b, optimal = 0.0, 0
    for _ in range(50):
        objective, constraints = random_lp(rng)
        sol = simplex_solve(
            LpProblem(objective=objective, constraints=tuple(constraints))
        )
        status, value, _ = vertex_enum_lp(objective, constraints)
        assert sol.status == status
        if status == "optimal":
            optimal += 1
            worst_b = max(worst_b, abs(sol.objective_value - value))
    # (c) the studentized statistic recomputed from first principles
    worst_c = 0.0
    for k in range(10):
        n = 6 + k
        z = rng.normal(size=(n, 2))
        y = rng.normal(size=n)
        w = rng.normal(size=n)
        d = Dataset(y=y, w=w, z=z, sigma_u2=0.3)
        b = 0.25 * (k - 4)
        g = rng.normal(size=2)
        th = rng.normal(size=2)
        res = def_statistic(
            d, b,
            FitResult(coef=g, residuals=(y - b * w) - z @ g, method="ols"),
            FitResult(coef=th, residuals=w - z @ th, method="ols"),
        )
        s = (w - z @ th) * (y - w * b - z @ g) + 0.3 * b
        t_raw = float(s.sum()) / math.sqrt(n)
        sigma = math.sqrt(float(np.mean(s * s)))
        t_df = t_raw / sigma
        p_val = 2.0 * float(ndtr(-abs(t_df)))
        worst_c = max(
            worst_c,
            abs(res.t_raw - t_raw),
            abs(res.sigma_hat - sigma),
            abs(res.t_df - t_df),
            abs(res.p_value - p_val),
        )
    # (d) replicate-difference variance estimator vs. a direct pooled oracle
    base = rng.normal(size=3)
    root6 = math.sqrt(6.0)
    exact = np.column_stack(
        [
            base,
            base + root6 * np.array([1.0, 0.0, -1.0]),
            base + root6 * np.array([0.0, 1.0, -1.0]),
        ]
    )
    worst_d = abs(estimate_sigma_u2_from_replicates(exact) - 1.0)
    for k in range(5):
        m = 2 + k % 4
        mat = rng.normal(size=(12, m)) + rng.normal(size=(12, 1))
        pair_vars = [
            np.var(mat[:, j] - mat[:, l], ddof=1)
            for j in range(m)
            for l in range(j + 1, m)
        ]
        oracle = float(np.mean(pair_vars)) / (2.0 * m)
        worst_d = max(
            worst_d, abs(estimate_sigma_u2_from_replicates(mat) - oracle)
        )
    elapsed = time.perf_counter() - start
    ok = (
        worst_a <= 1e-7
        and worst_b <= 1e-9
        and worst_c <= 1e-10
        and worst_d <= 1e-10
        and optimal >= 10
        and elapsed <= 10
    )
    detail = (
        f"lasso-vs-ols {worst_a:.1e} (<=1e-7), simplex {worst_b:.1e} (<=1e-9, "
        f"{optimal} optimal), statistic {worst_c:.1e} (<=1e-10), "
        f"variance {worst_d:.1e} (<=1e-10), {elapsed:.1f}s"
    )
    _report(capfd, 9, ok, detail)
    assert worst_a <= 1e-7
    assert worst_b <= 1e-9
    assert worst_c <= 1e-10
    assert worst_d <= 1e-10
    assert optimal >= 10
    assert elapsed <= 10


def test_criterion_10_score_mean_decay(capfd):
    ns = (200, 800, 3200)
    slopes = {}
    for name in ("ex1-sim1a", "ex1-sim2a"):
        means = []
        for n in ns:
            design = make_design(name, n=n, reps=200)
            vals = [
                abs(replicate(design, r).t_raw) / math.sqrt(n) for r in range(200)
            ]
            means.append(float(np.mean(vals)))
        slopes[name] = float(np.polyfit(np.log(ns), np.log(means), 1)[0])
    ok = all(abs(s + 0.5) <= 0.15 for s in slopes.values())
    detail = (
        "log-log slope "
        + " ".join(f"{name.split('-')[1]}={s:.3f}" for name, s in slopes.items())
        + ", target -0.5 +- 0.15"
    )
    _report(capfd, 10, ok, detail)
    for name, s in slopes.items():
        assert abs(s + 0.5) <= 0.15, f"{name}: slope {s:.3f}"
