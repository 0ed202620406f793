"""Experiment CLI: config parsing, the six commands, and output contracts."""
import json
import math
import os

import pytest

from stoplab.cli import (
    ConfigError,
    ExperimentConfig,
    build_config,
    main,
    parse_config_text,
)

VALUE_TOL = 1e-12


def run_cli(*argv):
    return main(list(argv))


def read_report(out_dir):
    with open(os.path.join(out_dir, "report.json")) as f:
        return json.load(f)


def csv_body(path):
    """Data portion of a CSV: everything except '#' comment lines."""
    with open(path, "rb") as f:
        return b"".join(ln for ln in f.readlines() if not ln.startswith(b"#"))


# --------------------------------------------------------------- parsing


def test_parse_config_text_roundtrip():
    text = """
    # a comment line
    experiment = price
    s0 = 95.5        # trailing comment
    n_list = 2, 4, 8
    seed = 7
    payoff = put
    delta_list = 0.001,0.01
    """
    vals = parse_config_text(text)
    assert vals["experiment"] == "price"
    assert vals["s0"] == 95.5
    assert vals["n_list"] == (2, 4, 8)
    assert vals["seed"] == 7
    assert vals["delta_list"] == (0.001, 0.01)


def test_parse_config_rejects_unknown_key():
    with pytest.raises(ConfigError, match="line 1.*unknown config key"):
        parse_config_text("volatility = 0.2")


def test_parse_config_rejects_bad_value():
    with pytest.raises(ConfigError, match="line 2.*bad value"):
        parse_config_text("s0 = 100\nseed = soon")


def test_parse_config_rejects_non_assignment():
    with pytest.raises(ConfigError, match="key=value"):
        parse_config_text("just some words")


def test_build_config_fills_defaults():
    cfg = build_config("price", {}, {"n_list": None, "seed": None, "out": None})
    assert cfg.experiment == "price"
    assert cfg.n_list == (128, 512, 2048, 8192)
    assert cfg.seed == 0


def test_build_config_overrides_beat_file_values():
    cfg = build_config(
        "price", {"n_list": (2, 4), "seed": 3}, {"n_list": (8, 16), "seed": 9, "out": "x"}
    )
    assert cfg.n_list == (8, 16)
    assert cfg.seed == 9
    assert cfg.out == "x"


def test_build_config_rejects_experiment_mismatch():
    with pytest.raises(ConfigError, match="experiment='coupling'"):
        build_config("price", {"experiment": "coupling"}, {})


def test_build_config_validates_n_list():
    with pytest.raises(ConfigError, match="strictly increasing"):
        build_config("price", {"n_list": (8, 8)}, {})
    with pytest.raises(ConfigError, match=">= 1"):
        build_config("price", {"n_list": (0, 4)}, {})


def test_diagnose_requires_power_of_two_grid():
    with pytest.raises(ConfigError, match="power"):
        build_config("diagnose", {"n_list": (3, 6)}, {})


# ------------------------------------------------------------ exit codes


def test_exit_2_on_unknown_key(tmp_path, capsys):
    cfg = tmp_path / "bad.cfg"
    cfg.write_text("nonsense = 1\n")
    assert run_cli("price", "--config", str(cfg)) == 2
    assert "config error" in capsys.readouterr().err


def test_exit_2_on_missing_config_file(tmp_path, capsys):
    assert run_cli("price", "--config", str(tmp_path / "absent.cfg")) == 2
    assert "not found" in capsys.readouterr().err


def test_exit_3_on_arbitrage_violation(tmp_path, capsys):
    cfg = tmp_path / "arb.cfg"
    cfg.write_text("sigma = 0.01\nr = 0.9\n")
    code = run_cli("price", "--config", str(cfg), "--n", "1", "--out", str(tmp_path / "o"))
    assert code == 3
    assert "numerical precondition failed" in capsys.readouterr().err


# ---------------------------------------------------------------- price


def test_price_single_step_closed_form(tmp_path):
    out = tmp_path / "p1"
    assert run_cli("price", "--n", "1", "--out", str(out)) == 0
    report = read_report(out)
    # One-step CRR put at the money, by hand.
    u = math.exp(0.2)
    d = 1.0 / u
    rho = 1.05
    p = (rho - d) / (u - d)
    expected = max(0.0, (1.0 / rho) * (1.0 - p) * (100.0 - 100.0 * d))
    row = report["results"][0]
    assert abs(row["value"] - expected) <= VALUE_TOL
    assert abs(row["p_star"] - p) <= VALUE_TOL
    assert report["reference_is_approximation"] is True


def test_price_values_increase_and_reference_brackets(tmp_path):
    out = tmp_path / "p2"
    assert run_cli("price", "--n", "16", "32", "64", "--out", str(out)) == 0
    report = read_report(out)
    values = [r["value"] for r in report["results"]]
    assert values == sorted(values)  # put value rises with refinement
    assert report["reference_method"] == "richardson_two_point(n=64, n=32)"
    assert report["reference_value"] > values[-1]


def test_price_zero_strike_is_worthless(tmp_path):
    cfg = tmp_path / "k0.cfg"
    cfg.write_text("strike = 0\n")
    out = tmp_path / "k0"
    assert run_cli("price", "--config", str(cfg), "--n", "2", "4", "--out", str(out)) == 0
    assert all(r["value"] == 0.0 for r in read_report(out)["results"])


def test_price_constant_payoff_stops_at_root(tmp_path):
    cfg = tmp_path / "c.cfg"
    cfg.write_text("payoff = constant\ndiscounting = none\n")
    out = tmp_path / "c"
    assert run_cli("price", "--config", str(cfg), "--n", "2", "4", "--out", str(out)) == 0
    assert all(r["value"] == 1.0 for r in read_report(out)["results"])


def test_price_zero_payoff_all_zero(tmp_path):
    cfg = tmp_path / "z.cfg"
    cfg.write_text("payoff = zero\n")
    out = tmp_path / "z"
    assert run_cli("price", "--config", str(cfg), "--n", "2", "4", "--out", str(out)) == 0
    report = read_report(out)
    assert all(r["value"] == 0.0 for r in report["results"])
    assert report["reference_value"] == 0.0


# --------------------------------------------------------- oracle-check


def test_oracle_check_small(tmp_path):
    cfg = tmp_path / "oc.cfg"
    cfg.write_text("n_models = 3\nmixture_models = 2\nn_mixtures = 5\n")
    out = tmp_path / "oc"
    assert run_cli("oracle-check", "--config", str(cfg), "--out", str(out)) == 0
    report = read_report(out)
    assert report["max_abs_diff"] <= 1e-12
    mix = report["mixtures"]
    assert mix["max_excess_over_optimum"] <= 1e-12
    assert mix["max_degenerate_gap"] <= 1e-12
    body = csv_body(out / "table.csv").decode()
    lines = body.splitlines()
    assert lines[0] == "model_id,n,snell_value,brute_value,abs_diff,rule_count"
    assert len(lines) >= 1 + 3  # >= one row per model


# ------------------------------------------------------ converge-values


def test_converge_values_put_differences_shrink(tmp_path):
    out = tmp_path / "cv"
    assert run_cli("converge-values", "--n", "8", "16", "32", "64", "--out", str(out)) == 0
    report = read_report(out)
    diffs = [r["abs_diff_prev"] for r in report["results"][1:]]
    assert all(b < a for a, b in zip(diffs, diffs[1:]))


def test_converge_values_constant_payoff_is_flat(tmp_path):
    cfg = tmp_path / "cc.cfg"
    cfg.write_text("payoff = constant\ndiscounting = none\n")
    out = tmp_path / "cc"
    assert run_cli("converge-values", "--config", str(cfg), "--n", "2", "4", "8", "--out", str(out)) == 0
    report = read_report(out)
    assert all(r["value"] == 1.0 for r in report["results"])
    assert all(r["abs_diff_prev"] == 0.0 for r in report["results"][1:])


# ------------------------------------------------------- converge-times


def test_converge_times_small(tmp_path):
    cfg = tmp_path / "ct.cfg"
    cfg.write_text("n_paths = 60\ndriver_points = 512\n")
    out = tmp_path / "ct"
    assert run_cli("converge-times", "--config", str(cfg), "--n", "4", "8", "--out", str(out)) == 0
    report = read_report(out)
    row = report["results"][0]
    assert row["paths"] == 60
    assert 0.0 <= row["cip_fraction"] <= 1.0
    assert row["w1"] >= 0.0
    assert report["epsilon"] == 0.05  # default 0.05 * horizon
    assert os.path.exists(out / "w1.csv")


def test_converge_times_worthless_put_never_stops(tmp_path):
    cfg = tmp_path / "otm.cfg"
    cfg.write_text("strike = 1e-9\nn_paths = 40\ndriver_points = 512\n")
    out = tmp_path / "otm"
    assert run_cli("converge-times", "--config", str(cfg), "--n", "4", "8", "--out", str(out)) == 0
    report = read_report(out)
    assert report["results"][0]["w1"] == 0.0
    assert report["results"][0]["cip_fraction"] == 0.0
    assert report["tau_means"] == {"4": 1.0, "8": 1.0}


def test_converge_times_deep_itm_stops_at_root(tmp_path):
    cfg = tmp_path / "itm.cfg"
    cfg.write_text("strike = 1e6\nr = 0\nn_paths = 40\ndriver_points = 512\n")
    out = tmp_path / "itm"
    assert run_cli("converge-times", "--config", str(cfg), "--n", "4", "8", "--out", str(out)) == 0
    report = read_report(out)
    assert report["results"][0]["w1"] == 0.0
    assert report["tau_means"] == {"4": 0.0, "8": 0.0}


# ------------------------------------------------------------- coupling


def test_coupling_small(tmp_path):
    cfg = tmp_path / "cp.cfg"
    cfg.write_text("n_paths = 6\ndriver_points = 2048\n")
    out = tmp_path / "cp"
    assert run_cli("coupling", "--config", str(cfg), "--n", "4", "64", "--out", str(out)) == 0
    report = read_report(out)
    rows = {r["n"]: r for r in report["results"]}
    assert rows[64]["median_sup_b"] < rows[4]["median_sup_b"]
    assert rows[64]["median_sup_s"] < rows[4]["median_sup_s"]
    assert "exp(sigma*B)" in report["comparison"]["price_side"]


# ------------------------------------------------------------- diagnose


def test_diagnose_small(tmp_path):
    cfg = tmp_path / "dg.cfg"
    cfg.write_text(
        "n_paths = 200\naldous_n = 16\nfiltration_paths = 30\n"
        "delta_list = 0.0625, 0.25\n"
    )
    out = tmp_path / "dg"
    assert run_cli("diagnose", "--config", str(cfg), "--n", "4", "16", "--out", str(out)) == 0
    report = read_report(out)
    ald = {e["delta"]: e["estimate"] for e in report["results"]["aldous"]["estimates"]}
    assert ald[0.0625] <= ald[0.25]
    filt = {r["n"]: r["mean_j1"] for r in report["results"]["filtration"]}
    assert set(filt) == {4, 16}
    assert os.path.exists(out / "aldous.csv")
    assert os.path.exists(out / "filtration.csv")


# ------------------------------------------------------- output contract


def test_report_carries_config_and_normalization(tmp_path):
    out = tmp_path / "rc"
    assert run_cli("price", "--n", "2", "--seed", "5", "--out", str(out)) == 0
    report = read_report(out)
    assert report["tool"] == "stoplab"
    assert report["tool_version"]
    assert report["experiment"] == "price"
    assert report["config"]["seed"] == 5
    assert report["config"]["n_list"] == [2]
    norm = report["normalization"]
    assert norm["u"] == "exp(sigma*sqrt(T/n))"
    assert norm["d"] == "1/u"
    assert norm["step_rate"] == "1 + r*T/n"
    assert norm["p_star"] == "(step_rate - d)/(u - d)"


def test_csv_headers_are_comments_and_carry_run_details(tmp_path):
    out = tmp_path / "hd"
    assert run_cli("price", "--n", "2", "--seed", "5", "--out", str(out)) == 0
    with open(out / "table.csv") as f:
        header = [ln for ln in f.readlines() if ln.startswith("#")]
    joined = "".join(header)
    assert "stoplab" in joined
    assert "seed=5" in joined
    assert "experiment=price" in joined


REPRO_RUNS = [
    ("price", "", ["--n", "2", "4"]),
    ("oracle-check", "n_models = 2\nmixture_models = 1\nn_mixtures = 3\n", []),
    ("converge-values", "", ["--n", "4", "8"]),
    ("converge-times", "n_paths = 25\ndriver_points = 512\n", ["--n", "4", "8"]),
    ("coupling", "n_paths = 4\ndriver_points = 1024\n", ["--n", "4", "16"]),
    (
        "diagnose",
        "n_paths = 60\naldous_n = 8\nfiltration_paths = 10\n",
        ["--n", "4", "8"],
    ),
]


@pytest.mark.parametrize("command,cfg_text,extra", REPRO_RUNS, ids=[r[0] for r in REPRO_RUNS])
def test_rerun_is_byte_identical(tmp_path, command, cfg_text, extra):
    """Same config + seed => identical CSV bodies (timestamps live in '#')."""
    argv = [command, "--seed", "3"]
    if cfg_text:
        cfg = tmp_path / "run.cfg"
        cfg.write_text(cfg_text)
        argv += ["--config", str(cfg)]
    argv += extra
    out_a = tmp_path / "a"
    out_b = tmp_path / "b"
    assert run_cli(*argv, "--out", str(out_a)) == 0
    assert run_cli(*argv, "--out", str(out_b)) == 0
    csvs = sorted(f for f in os.listdir(out_a) if f.endswith(".csv"))
    assert csvs
    for name in csvs:
        assert csv_body(out_a / name) == csv_body(out_b / name), name
