"""Command line interface.

Subcommands: test (score test on a CSV dataset), ci (confidence region by
test inversion), sigma-u (proxy-error variance from replicate columns),
simulate (rejection-rate table for registered designs), export (write one
simulated dataset to CSV).

Exit codes: 0 success; 1 usage error (bad flags, unparseable or
inconsistent input, unknown config key); 2 degenerate or infeasible
outcome (variance collapse, infeasible adaptive program, empty region).

Results are printed as a short human-readable block followed by
machine-readable lines of the form "#meta key=value".
"""
from __future__ import annotations

import argparse
import csv
import math
import re
import sys

import numpy as np

from .adaptive import AdaptiveTuning
from .data import Dataset, Hypothesis
from .errors import (
    ConfigError,
    DefInferError,
    DegenerateVariance,
    DidNotConverge,
    EmptyRegion,
    InfeasibleProgram,
    NotPositiveDefinite,
    NumericalBreakdown,
    ParseError,
    SingularDesign,
)
from .penalized import CdConfig
from .scoretest import (
    EstimatorChoice,
    confidence_region,
    estimate_sigma_u2_from_replicates,
    run_test,
)
from .sim import DESIGN_NAMES, generate, make_design, run_monte_carlo

_ESTIMATORS = ("ols", "lasso", "scad", "mcp", "adaptive")

# Valid invocation, degenerate outcome.
_DEGENERATE = (
    DegenerateVariance,
    InfeasibleProgram,
    EmptyRegion,
    DidNotConverge,
    NumericalBreakdown,
    SingularDesign,
    NotPositiveDefinite,
)


class _UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # argparse would sys.exit(2); we map usage to 1
        raise _UsageError(message)


def _fmt(value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return f"{value:.12g}"
    return str(value)


def _read_rows(path: str):
    try:
        with open(path, newline="") as fh:
            return list(csv.reader(fh))
    except OSError as exc:
        raise ParseError(f"{path}: {exc}") from None


def _parse_header(path: str, header, pattern: str, required=()):
    """Map column name -> index; non-required names must match pattern with 1..k indices."""
    names = [h.strip() for h in header]
    if len(set(names)) != len(names):
        raise ParseError(f"{path}: line 1: duplicate column names")
    cols = {}
    indexed = {}
    for j, name in enumerate(names):
        if name in required:
            cols[name] = j
            continue
        m = re.fullmatch(pattern, name)
        if not m:
            raise ParseError(
                f"{path}: line 1: unexpected column {name!r}"
            )
        indexed[int(m.group(1))] = j
    missing = [r for r in required if r not in cols]
    if missing:
        raise ParseError(f"{path}: line 1: missing column(s) {', '.join(missing)}")
    k = len(indexed)
    if sorted(indexed) != list(range(1, k + 1)):
        raise ParseError(
            f"{path}: line 1: indexed columns must be numbered 1..{k} without gaps"
        )
    return cols, [indexed[i] for i in range(1, k + 1)]


def _parse_matrix(path: str, rows, width: int):
    out = np.empty((len(rows), width))
    for i, row in enumerate(rows):
        if len(row) != width:
            raise ParseError(
                f"{path}: line {i + 2}: expected {width} fields, got {len(row)}"
            )
        for j, cell in enumerate(row):
            try:
                out[i, j] = float(cell)
            except ValueError:
                raise ParseError(
                    f"{path}: line {i + 2}, column {j + 1}: not a number: {cell!r}"
                ) from None
    return out


def read_dataset(path: str, sigma_u2: float) -> Dataset:
    """CSV with header y,w,z1..zp (any column order) into a Dataset."""
    rows = _read_rows(path)
    if not rows:
        raise ParseError(f"{path}: empty file")
    cols, z_order = _parse_header(path, rows[0], r"z(\d+)", required=("y", "w"))
    if not rows[1:]:
        raise ParseError(f"{path}: no data rows")
    mat = _parse_matrix(path, rows[1:], len(rows[0]))
    return Dataset(
        y=mat[:, cols["y"]],
        w=mat[:, cols["w"]],
        z=mat[:, z_order],
        sigma_u2=sigma_u2,
    )


def read_replicates(path: str) -> np.ndarray:
    """CSV with header w1..wm into an (n, m) replicate matrix."""
    rows = _read_rows(path)
    if not rows:
        raise ParseError(f"{path}: empty file")
    _, order = _parse_header(path, rows[0], r"w(\d+)")
    if not order:
        raise ParseError(f"{path}: line 1: no replicate columns w1..wm")
    if not rows[1:]:
        raise ParseError(f"{path}: no data rows")
    mat = _parse_matrix(path, rows[1:], len(rows[0]))
    return mat[:, order]


def write_dataset(path: str, d: Dataset) -> None:
    """Inverse of read_dataset; %.17g preserves every float bit-for-bit."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["y", "w"] + [f"z{j + 1}" for j in range(d.p)])
        for i in range(d.n):
            writer.writerow(
                [f"{d.y[i]:.17g}", f"{d.w[i]:.17g}"]
                + [f"{d.z[i, j]:.17g}" for j in range(d.p)]
            )


def read_config(path: str) -> dict:
    """key=value lines; blank lines and # comments ignored."""
    out = {}
    try:
        with open(path) as fh:
            lines = fh.readlines()
    except OSError as exc:
        raise ConfigError(f"{path}: {exc}") from None
    for i, raw in enumerate(lines, start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ConfigError(f"{path}: line {i}: expected key=value, got {line!r}")
        key, _, value = line.partition("=")
        key = key.strip().replace("-", "_")
        if not key:
            raise ConfigError(f"{path}: line {i}: empty key")
        if key in out:
            raise ConfigError(f"{path}: line {i}: duplicate key {key!r}")
        out[key] = value.strip()
    return out


class _Resolver:
    """Merges command-line flags over config-file values over defaults."""

    _BOOL = {"true": True, "false": False, "1": True, "0": False,
             "yes": True, "no": False}

    def __init__(self, args: argparse.Namespace, config: dict, known: set):
        self.args = args
        self.config = dict(config)
        unknown = set(self.config) - known
        if unknown:
            raise ConfigError(
                f"unknown config key(s): {', '.join(sorted(unknown))}; "
                f"known: {', '.join(sorted(known))}"
            )

    def get(self, key: str, default=None, cast=str):
        flag = getattr(self.args, key, None)
        if flag is not None:
            return flag
        if key in self.config:
            raw = self.config[key]
            try:
                if cast is bool:
                    return self._BOOL[raw.lower()]
                return cast(raw)
            except (ValueError, KeyError):
                raise ConfigError(f"config key {key}: cannot read {raw!r}") from None
        return default

    def require(self, key: str, flag_name: str, cast=str):
        val = self.get(key, None, cast)
        if val is None:
            raise _UsageError(f"missing required {flag_name}")
        return val


def _parse_grid(text: str):
    parts = text.split(":")
    if len(parts) != 3:
        raise _UsageError(f"--grid expects lo:hi:step, got {text!r}")
    try:
        lo, hi, step = (float(x) for x in parts)
    except ValueError:
        raise _UsageError(f"--grid expects numbers lo:hi:step, got {text!r}") from None
    if hi < lo:
        raise _UsageError("--grid upper bound below lower bound")
    if not step > 0:
        raise _UsageError("--grid step must be positive")
    return lo, hi, step


_TUNE_KEYS = {
    "estimator", "lam", "lambda_rate", "lambda_mult", "shape", "eta", "mu",
    "rho", "cd_max_iters", "cd_tol", "cd_standardize",
}


def _estimator_from(res: _Resolver) -> EstimatorChoice:
    name = res.get("estimator", "lasso")
    if name not in _ESTIMATORS:
        raise _UsageError(f"--estimator must be one of {', '.join(_ESTIMATORS)}")
    lam = res.get("lam", None, float)
    shape = res.get("shape", None, float)
    rate = res.get("lambda_rate", "sqrt")
    if rate not in ("sqrt", "linear"):
        raise _UsageError("--lambda-rate must be sqrt or linear")
    mult = res.get("lambda_mult", 1.0, float)
    if not mult > 0:
        raise _UsageError("--lambda-mult must be positive")
    eta = res.get("eta", None, float)
    mu = res.get("mu", None, float)
    rho = res.get("rho", None, float)
    tuning = None
    given = [v is not None for v in (eta, mu, rho)]
    if any(given):
        if not all(given):
            raise _UsageError("--eta, --mu, --rho must be given together")
        tuning = AdaptiveTuning(eta=eta, mu=mu, rho=rho)
    return EstimatorChoice.from_name(name, lam=lam, shape=shape, tuning=tuning,
                                     lambda_rate=rate, lambda_mult=mult)


def _cd_config_from(res: _Resolver) -> CdConfig:
    return CdConfig(
        max_iters=res.get("cd_max_iters", 10_000, int),
        tol=res.get("cd_tol", 1e-8, float),
        standardize=res.get("cd_standardize", True, bool),
    )


def _sigma_u2_from(res: _Resolver) -> float:
    sigma_u2 = res.get("sigma_u2", None, float)
    if sigma_u2 is not None:
        return sigma_u2
    reps_path = res.get("replicates")
    if reps_path is None:
        raise _UsageError("provide --sigma-u2 or --replicates to set the error variance")
    return estimate_sigma_u2_from_replicates(read_replicates(reps_path))


def _emit(lines, meta, out_path=None):
    text = "\n".join(lines + [f"#meta {k}={_fmt(v)}" for k, v in meta]) + "\n"
    sys.stdout.write(text)
    if out_path:
        with open(out_path, "w") as fh:
            fh.write(text)


def _tuning_meta(prefix: str, meta: dict):
    rows = [(f"{prefix}_method", meta["method"])]
    for key, val in sorted(meta["tuning"].items()):
        rows.append((f"{prefix}_{key}", val))
    return rows


def cmd_test(args) -> int:
    config = read_config(args.config) if args.config else {}
    known = _TUNE_KEYS | {"data", "replicates", "beta_star", "alpha", "sigma_u2", "out"}
    res = _Resolver(args, config, known)
    data_path = res.require("data", "--data")
    sigma_u2 = _sigma_u2_from(res)
    d = read_dataset(data_path, sigma_u2)
    hyp = Hypothesis(
        beta_star=res.get("beta_star", 0.0, float),
        alpha=res.get("alpha", 0.05, float),
    )
    choice = _estimator_from(res)
    result = run_test(d, hyp, choice, choice, cfg=_cd_config_from(res))
    decision = "reject" if result.reject else "do not reject"
    lines = [
        f"score test of H0: beta = {hyp.beta_star:g} at level alpha = {hyp.alpha:g}",
        f"n = {result.n}, p = {result.p}, sigma_u2 = {sigma_u2:g}",
        f"T_DF = {result.t_df:.6g}   p-value = {result.p_value:.6g}   -> {decision}",
        f"nuisance fits: gamma {result.gamma_meta['method']}, theta {result.theta_meta['method']}",
    ]
    meta = [
        ("t_df", result.t_df),
        ("t_raw", result.t_raw),
        ("sigma_hat", result.sigma_hat),
        ("p_value", result.p_value),
        ("reject", result.reject),
        ("n", result.n),
        ("p", result.p),
        ("beta_star", hyp.beta_star),
        ("alpha", hyp.alpha),
        ("sigma_u2", sigma_u2),
    ]
    meta += _tuning_meta("gamma", result.gamma_meta)
    meta += _tuning_meta("theta", result.theta_meta)
    _emit(lines, meta, res.get("out"))
    return 0


def cmd_ci(args) -> int:
    config = read_config(args.config) if args.config else {}
    known = _TUNE_KEYS | {"data", "replicates", "alpha", "sigma_u2", "grid", "out"}
    res = _Resolver(args, config, known)
    data_path = res.require("data", "--data")
    sigma_u2 = _sigma_u2_from(res)
    d = read_dataset(data_path, sigma_u2)
    alpha = res.get("alpha", 0.05, float)
    choice = _estimator_from(res)
    grid_text = res.get("grid")
    grid = _parse_grid(grid_text) if grid_text is not None else None
    region = confidence_region(d, alpha, choice, choice, grid=grid,
                               cfg=_cd_config_from(res))
    lo, hi = region.interval_hull
    lines = [
        f"confidence region at level {1 - alpha:g} (grid inversion)",
        f"n = {d.n}, p = {d.p}, sigma_u2 = {sigma_u2:g}, estimator = {choice.label()}",
        f"interval hull: [{lo:.6g}, {hi:.6g}]",
        f"accepted points: {region.accepted.size} on grid "
        f"[{region.grid[0]:.6g}, {region.grid[1]:.6g}] step {region.grid[2]:.6g}",
    ]
    meta = [
        ("ci_lo", lo),
        ("ci_hi", hi),
        ("n_accepted", int(region.accepted.size)),
        ("grid_lo", region.grid[0]),
        ("grid_hi", region.grid[1]),
        ("grid_step", region.grid[2]),
        ("alpha", alpha),
        ("estimator", choice.label()),
    ]
    out = res.get("out")
    if out:
        with open(out, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["beta"])
            for b in region.accepted:
                writer.writerow([f"{b:.12g}"])
        lines.append(f"accepted grid written to {out}")
    _emit(lines, meta)
    return 0


def cmd_sigma_u(args) -> int:
    config = read_config(args.config) if args.config else {}
    res = _Resolver(args, config, {"replicates", "out"})
    reps_path = res.require("replicates", "--replicates")
    mat = read_replicates(reps_path)
    est = estimate_sigma_u2_from_replicates(mat)
    lines = [
        f"replicate file: {mat.shape[0]} rows, {mat.shape[1]} replicates",
        f"estimated proxy-error variance of the replicate mean: {est:.6g}",
    ]
    meta = [("sigma_u2", est), ("rows", mat.shape[0]), ("replicates", mat.shape[1])]
    _emit(lines, meta, res.get("out"))
    return 0


def cmd_simulate(args) -> int:
    config = read_config(args.config) if args.config else {}
    known = _TUNE_KEYS | {
        "design", "reps", "seed", "grid", "out",
        "n", "p", "sigma_u", "rho_z", "beta_star", "alpha",
    }
    res = _Resolver(args, config, known)
    designs = args.design or ([res.config["design"]] if "design" in res.config else [])
    if not designs:
        raise _UsageError("provide at least one --design")
    overrides = {}
    for key, field, cast in (
        ("n", "n", int), ("p", "p", int), ("sigma_u", "sigma_u", float),
        ("rho_z", "rho", float), ("beta_star", "beta_star", float),
        ("alpha", "alpha", float),
    ):
        val = res.get(key, None, cast)
        if val is not None:
            overrides[field] = val
    est_name = res.get("estimator")
    if est_name is not None:
        choice = _estimator_from(res)
        overrides["gamma_estimator"] = choice
        overrides["theta_estimator"] = choice
    reps = res.get("reps", 1000, int)
    seed = res.get("seed", 0, int)
    grid_text = res.get("grid")
    rows = []
    for name in designs:
        base = make_design(name, reps=reps, base_seed=seed, **overrides)
        betas = [base.beta_star]
        if grid_text is not None:
            lo, hi, step = _parse_grid(grid_text)
            count = int(math.floor((hi - lo) / step + 1e-9)) + 1 if hi > lo else 1
            betas = [lo + k * step for k in range(count)]
        for beta in betas:
            design = make_design(
                name, reps=reps, base_seed=seed, beta_true=beta, **overrides
            )
            report = run_monte_carlo(design)
            rows.append(
                (
                    name,
                    design.n,
                    design.p,
                    f"{design.sigma_u:g}",
                    f"{design.beta_true:g}",
                    f"{report.rejection_rate:.6f}",
                    f"{report.monte_carlo_se:.6f}",
                    report.failures,
                    seed,
                )
            )
    header = "design,n,p,sigma_u,beta_true,rejection_rate,mc_se,failures,seed"
    body = "\n".join(",".join(str(c) for c in row) for row in rows)
    text = header + "\n" + body + "\n"
    out = res.get("out")
    if out:
        with open(out, "w") as fh:
            fh.write(text)
        sys.stdout.write(f"wrote {len(rows)} row(s) to {out}\n")
    else:
        sys.stdout.write(text)
    return 0


def cmd_export(args) -> int:
    config = read_config(args.config) if args.config else {}
    known = {"design", "rep", "seed", "out", "n", "p", "sigma_u", "rho_z", "beta_star"}
    res = _Resolver(args, config, known)
    name = res.require("design", "--design")
    overrides = {}
    for key, field, cast in (
        ("n", "n", int), ("p", "p", int), ("sigma_u", "sigma_u", float),
        ("rho_z", "rho", float), ("beta_star", "beta_star", float),
    ):
        val = res.get(key, None, cast)
        if val is not None:
            overrides[field] = val
    design = make_design(name, base_seed=res.get("seed", 0, int), **overrides)
    d = generate(design, res.get("rep", 0, int))
    out = res.require("out", "--out")
    write_dataset(out, d)
    sys.stdout.write(
        f"wrote design {name} replication {res.get('rep', 0, int)} "
        f"({d.n} rows, p = {d.p}) to {out}\n"
    )
    sys.stdout.write(f"#meta sigma_u2={_fmt(d.sigma_u2)}\n")
    return 0


def _build_parser() -> _Parser:
    parser = _Parser(prog="def-infer", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", help="key=value file merged under the flags")

    p_test = sub.add_parser("test", help="score test of H0: beta = beta-star")
    common(p_test)
    p_test.add_argument("--data", help="dataset CSV with header y,w,z1..zp")
    p_test.add_argument("--replicates", help="replicate CSV w1..wm to estimate sigma-u2")
    p_test.add_argument("--beta-star", dest="beta_star", type=float)
    p_test.add_argument("--alpha", type=float)
    p_test.add_argument("--sigma-u2", dest="sigma_u2", type=float)
    p_test.add_argument("--out")

    p_ci = sub.add_parser("ci", help="confidence region by test inversion")
    common(p_ci)
    p_ci.add_argument("--data")
    p_ci.add_argument("--replicates")
    p_ci.add_argument("--alpha", type=float)
    p_ci.add_argument("--sigma-u2", dest="sigma_u2", type=float)
    p_ci.add_argument("--grid", help="lo:hi:step search grid for beta")
    p_ci.add_argument("--out", help="write the accepted grid values here")

    for p in (p_test, p_ci):
        p.add_argument("--estimator", choices=_ESTIMATORS)
        p.add_argument("--lambda", dest="lam", type=float,
                       help="penalty level; omit for the data-driven default")
        p.add_argument("--lambda-rate", dest="lambda_rate", choices=("sqrt", "linear"))
        p.add_argument("--lambda-mult", dest="lambda_mult", type=float,
                       help="multiplier on the data-driven penalty level")
        p.add_argument("--shape", type=float, help="scad a (>2) or mcp b (>1)")
        p.add_argument("--eta", type=float)
        p.add_argument("--mu", type=float)
        p.add_argument("--rho", type=float)
        p.add_argument("--cd-max-iters", dest="cd_max_iters", type=int)
        p.add_argument("--cd-tol", dest="cd_tol", type=float)

    p_sig = sub.add_parser("sigma-u", help="error variance from replicate columns")
    common(p_sig)
    p_sig.add_argument("--replicates")
    p_sig.add_argument("--out")

    p_sim = sub.add_parser("simulate", help="rejection-rate table for named designs")
    common(p_sim)
    p_sim.add_argument("--design", action="append",
                       help=f"one of: {', '.join(DESIGN_NAMES)} (repeatable)")
    p_sim.add_argument("--reps", type=int)
    p_sim.add_argument("--seed", type=int)
    p_sim.add_argument("--grid", help="lo:hi:step grid of true beta values")
    p_sim.add_argument("--n", type=int)
    p_sim.add_argument("--p", type=int)
    p_sim.add_argument("--sigma-u", dest="sigma_u", type=float)
    p_sim.add_argument("--rho-z", dest="rho_z", type=float)
    p_sim.add_argument("--beta-star", dest="beta_star", type=float)
    p_sim.add_argument("--alpha", type=float)
    p_sim.add_argument("--estimator", choices=_ESTIMATORS)
    p_sim.add_argument("--lambda", dest="lam", type=float)
    p_sim.add_argument("--lambda-rate", dest="lambda_rate", choices=("sqrt", "linear"))
    p_sim.add_argument("--lambda-mult", dest="lambda_mult", type=float)
    p_sim.add_argument("--shape", type=float)
    p_sim.add_argument("--eta", type=float)
    p_sim.add_argument("--mu", type=float)
    p_sim.add_argument("--rho", type=float)
    p_sim.add_argument("--out")

    p_exp = sub.add_parser("export", help="write one simulated dataset to CSV")
    common(p_exp)
    p_exp.add_argument("--design")
    p_exp.add_argument("--rep", type=int)
    p_exp.add_argument("--seed", type=int)
    p_exp.add_argument("--n", type=int)
    p_exp.add_argument("--p", type=int)
    p_exp.add_argument("--sigma-u", dest="sigma_u", type=float)
    p_exp.add_argument("--rho-z", dest="rho_z", type=float)
    p_exp.add_argument("--beta-star", dest="beta_star", type=float)
    p_exp.add_argument("--out")

    return parser


_COMMANDS = {
    "test": cmd_test,
    "ci": cmd_ci,
    "sigma-u": cmd_sigma_u,
    "simulate": cmd_simulate,
    "export": cmd_export,
}


def main(argv=None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
        return _COMMANDS[args.command](args)
    except _UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except _DEGENERATE as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except DefInferError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
