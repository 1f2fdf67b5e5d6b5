"""Command line surface: parsing, exit codes, round trips, config files."""
import math

import numpy as np
import pytest

from definfer import (
    ConfigError,
    EstimatorChoice,
    Hypothesis,
    ParseError,
    generate,
    make_design,
    run_test,
)
from definfer.cli import main, read_config, read_dataset, write_dataset

OLS = EstimatorChoice(kind="ols")


def _run(argv, capsys):
    code = main([str(a) for a in argv])
    captured = capsys.readouterr()
    return code, captured.out, captured.err


def _meta(out):
    vals = {}
    for line in out.splitlines():
        if line.startswith("#meta "):
            key, _, value = line[len("#meta "):].partition("=")
            vals[key] = value
    return vals


def _export(tmp_path, capsys, name="ex1-sim1a", **flags):
    path = tmp_path / "data.csv"
    argv = ["export", "--design", name, "--rep", 0, "--seed", 0, "--out", path]
    for key, val in flags.items():
        argv += [f"--{key}", val]
    code, out, _ = _run(argv, capsys)
    assert code == 0
    return path, float(_meta(out)["sigma_u2"])


def test_export_test_round_trip(tmp_path, capsys):
    path, sigma_u2 = _export(tmp_path, capsys)
    design = make_design("ex1-sim1a")
    expected = run_test(generate(design, 0), Hypothesis(beta_star=0.0), OLS, OLS)
    # file route reproduces the in-memory statistic exactly
    reread = run_test(
        read_dataset(str(path), sigma_u2), Hypothesis(beta_star=0.0), OLS, OLS
    )
    assert abs(reread.t_df - expected.t_df) <= 1e-12
    code, out, _ = _run(
        ["test", "--data", path, "--beta-star", 0, "--sigma-u2", sigma_u2,
         "--estimator", "ols"],
        capsys,
    )
    assert code == 0
    meta = _meta(out)
    assert float(meta["t_df"]) == pytest.approx(expected.t_df, abs=1e-9)
    assert float(meta["p_value"]) == pytest.approx(expected.p_value, abs=1e-9)
    assert meta["reject"] in ("true", "false")
    assert meta["gamma_method"] == "ols"
    assert "T_DF" in out


def test_write_dataset_round_trips_bits(tmp_path):
    d = generate(make_design("ex1-sim1a"), 1)
    path = tmp_path / "d.csv"
    write_dataset(str(path), d)
    back = read_dataset(str(path), d.sigma_u2)
    assert back.y.tobytes() == d.y.tobytes()
    assert back.w.tobytes() == d.w.tobytes()
    assert back.z.tobytes() == d.z.tobytes()


def test_missing_variance_is_usage_error(tmp_path, capsys):
    path, _ = _export(tmp_path, capsys)
    code, _, err = _run(["test", "--data", path, "--beta-star", 0], capsys)
    assert code == 1
    assert "--sigma-u2" in err


def test_missing_data_file_is_parse_error(capsys):
    code, _, err = _run(
        ["test", "--data", "no-such-file.csv", "--sigma-u2", 1], capsys
    )
    assert code == 1
    assert "no-such-file.csv" in err


def test_bad_alpha_is_an_error(tmp_path, capsys):
    path, sigma = _export(tmp_path, capsys)
    code, _, err = _run(
        ["test", "--data", path, "--sigma-u2", sigma, "--alpha", 2], capsys
    )
    assert code == 1
    assert "alpha" in err


def test_infeasible_adaptive_program_exits_two(tmp_path, capsys):
    path = tmp_path / "flat.csv"
    rows = ["y,w,z1,z2"]
    z = [(0.5, -0.2), (-0.3, 0.4), (0.2, 0.3), (-0.4, -0.5), (0.1, -0.1), (-0.1, 0.1)]
    for z1, z2 in z:
        rows.append(f"0,1,{z1},{z2}")
    path.write_text("\n".join(rows) + "\n")
    code, _, err = _run(
        ["test", "--data", path, "--sigma-u2", 0.1, "--beta-star", 0,
         "--estimator", "adaptive", "--eta", 0.5, "--mu", 5, "--rho", 0.1],
        capsys,
    )
    assert code == 2
    assert "inner_product" in err


def test_parse_errors_name_the_location(tmp_path, capsys):
    bad = tmp_path / "bad.csv"
    bad.write_text("y,w,q1\n1,2,3\n")
    with pytest.raises(ParseError, match="q1"):
        read_dataset(str(bad), 1.0)
    bad.write_text("y,w,z1,z3\n1,2,3,4\n")
    with pytest.raises(ParseError, match="numbered"):
        read_dataset(str(bad), 1.0)
    bad.write_text("y,y,z1\n1,2,3\n")
    with pytest.raises(ParseError, match="duplicate"):
        read_dataset(str(bad), 1.0)
    bad.write_text("y,w,z1\n1,2,oops\n")
    with pytest.raises(ParseError, match="line 2"):
        read_dataset(str(bad), 1.0)
    bad.write_text("y,w,z1\n1,2\n")
    with pytest.raises(ParseError, match="expected 3 fields"):
        read_dataset(str(bad), 1.0)
    bad.write_text("w,z1\n1,2\n")
    with pytest.raises(ParseError, match="missing"):
        read_dataset(str(bad), 1.0)
    code, _, err = _run(["test", "--data", bad, "--sigma-u2", 1], capsys)
    assert code == 1
    assert "missing" in err


def test_config_file_merging(tmp_path, capsys):
    path, sigma = _export(tmp_path, capsys)
    cfg = tmp_path / "run.cfg"
    cfg.write_text("# comment line\nbeta_star=0.25\nalpha=0.1\nestimator=ols\n")
    code, out, _ = _run(
        ["test", "--config", cfg, "--data", path, "--sigma-u2", sigma], capsys
    )
    assert code == 0
    meta = _meta(out)
    assert float(meta["beta_star"]) == 0.25
    assert float(meta["alpha"]) == 0.1
    # command-line flags win over config values
    code, out, _ = _run(
        ["test", "--config", cfg, "--data", path, "--sigma-u2", sigma,
         "--beta-star", 0.5],
        capsys,
    )
    assert code == 0
    assert float(_meta(out)["beta_star"]) == 0.5


def test_unknown_config_key_is_rejected(tmp_path, capsys):
    path, sigma = _export(tmp_path, capsys)
    cfg = tmp_path / "run.cfg"
    cfg.write_text("bogus=1\n")
    code, _, err = _run(
        ["test", "--config", cfg, "--data", path, "--sigma-u2", sigma], capsys
    )
    assert code == 1
    assert "bogus" in err


def test_read_config_syntax_errors(tmp_path):
    cfg = tmp_path / "run.cfg"
    cfg.write_text("alpha\n")
    with pytest.raises(ConfigError, match="key=value"):
        read_config(str(cfg))
    cfg.write_text("alpha=0.1\nalpha=0.2\n")
    with pytest.raises(ConfigError, match="duplicate"):
        read_config(str(cfg))
    cfg.write_text("lambda-rate=linear\n")
    assert read_config(str(cfg)) == {"lambda_rate": "linear"}


def test_sigma_u_subcommand(tmp_path, capsys):
    reps = tmp_path / "reps.csv"
    base = np.array([0.3, -1.2, 0.9])
    r = math.sqrt(6.0)
    w2 = base + r * np.array([1.0, 0.0, -1.0])
    w3 = base + r * np.array([0.0, 1.0, -1.0])
    lines = ["w1,w2,w3"]
    for i in range(3):
        lines.append(f"{base[i]:.17g},{w2[i]:.17g},{w3[i]:.17g}")
    reps.write_text("\n".join(lines) + "\n")
    code, out, _ = _run(["sigma-u", "--replicates", reps], capsys)
    assert code == 0
    meta = _meta(out)
    assert float(meta["sigma_u2"]) == pytest.approx(1.0, abs=1e-9)
    assert meta["rows"] == "3"
    assert meta["replicates"] == "3"
    code, _, err = _run(["sigma-u"], capsys)
    assert code == 1
    assert "--replicates" in err


def test_test_accepts_replicate_file_for_variance(tmp_path, capsys):
    path, _ = _export(tmp_path, capsys)
    reps = tmp_path / "reps.csv"
    rng = np.random.default_rng(50)
    base = rng.normal(size=100)
    mat = np.column_stack([base + rng.normal(size=100), base + rng.normal(size=100)])
    lines = ["w1,w2"] + [f"{a:.17g},{b:.17g}" for a, b in mat]
    reps.write_text("\n".join(lines) + "\n")
    code, out, _ = _run(
        ["test", "--data", path, "--replicates", reps, "--beta-star", 0,
         "--estimator", "ols"],
        capsys,
    )
    assert code == 0
    assert float(_meta(out)["sigma_u2"]) > 0


def test_simulate_table_is_reproducible(tmp_path, capsys):
    out1, out2 = tmp_path / "a.csv", tmp_path / "b.csv"
    argv = ["simulate", "--design", "ex1-sim1a", "--reps", 5, "--seed", 3]
    code, _, _ = _run(argv + ["--out", out1], capsys)
    assert code == 0
    code, _, _ = _run(argv + ["--out", out2], capsys)
    assert code == 0
    assert out1.read_bytes() == out2.read_bytes()
    lines = out1.read_text().splitlines()
    assert lines[0] == "design,n,p,sigma_u,beta_true,rejection_rate,mc_se,failures,seed"
    fields = lines[1].split(",")
    assert fields[0] == "ex1-sim1a"
    assert 0.0 <= float(fields[5]) <= 1.0


def test_simulate_beta_grid(tmp_path, capsys):
    out = tmp_path / "grid.csv"
    code, _, _ = _run(
        ["simulate", "--design", "ex1-sim1a", "--reps", 3, "--seed", 1,
         "--grid", "0:1:0.5", "--out", out],
        capsys,
    )
    assert code == 0
    lines = out.read_text().splitlines()
    assert len(lines) == 4  # header + three beta values
    betas = [float(line.split(",")[4]) for line in lines[1:]]
    assert betas == [0.0, 0.5, 1.0]


def test_simulate_usage_errors(capsys):
    code, _, err = _run(["simulate"], capsys)
    assert code == 1
    assert "--design" in err
    code, _, err = _run(["simulate", "--design", "ex9", "--reps", 2], capsys)
    assert code == 1
    assert "ex9" in err


def test_ci_subcommand_writes_accepted_grid(tmp_path, capsys):
    path, sigma = _export(tmp_path, capsys)
    grid_out = tmp_path / "accepted.csv"
    code, out, _ = _run(
        ["ci", "--data", path, "--sigma-u2", sigma, "--estimator", "ols",
         "--grid=-1:1:0.05", "--out", grid_out],
        capsys,
    )
    assert code == 0
    meta = _meta(out)
    lo, hi = float(meta["ci_lo"]), float(meta["ci_hi"])
    assert lo <= hi
    lines = grid_out.read_text().splitlines()
    assert lines[0] == "beta"
    accepted = [float(v) for v in lines[1:]]
    assert len(accepted) == int(meta["n_accepted"])
    assert min(accepted) == pytest.approx(lo, abs=1e-9)
    assert max(accepted) == pytest.approx(hi, abs=1e-9)
    assert lo <= 0.0 <= hi  # ex1-sim1a is generated at beta = 0


def test_lambda_mult_flag_scales_reported_level(tmp_path, capsys):
    path, _ = _export(tmp_path, capsys, name="ex2", n="60", p="30")
    lams = []
    for mult in (1, 2):
        code, out, _ = _run(
            ["test", "--data", path, "--sigma-u2", 0.01, "--beta-star", 1,
             "--estimator", "lasso", "--lambda-mult", mult],
            capsys,
        )
        assert code == 0
        lams.append(float(_meta(out)["gamma_lam"]))
    assert lams[1] == pytest.approx(2 * lams[0], rel=1e-9)
    code, _, err = _run(
        ["test", "--data", path, "--sigma-u2", 0.01, "--estimator", "lasso",
         "--lambda-mult", -1],
        capsys,
    )
    assert code == 1
    assert "--lambda-mult" in err
