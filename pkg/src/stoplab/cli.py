"""Reproducible experiment runner.

Usage: stoplab <command> [--config FILE] [--n N ...] [--seed S] [--out DIR]

Commands: price, oracle-check, converge-values, converge-times, coupling,
diagnose.  Configs are flat key=value files; command-line flags override file
values; the effective configuration is echoed into every report.  Each run
writes `report.json` and `table.csv` (plus per-command extra tables)
atomically into the output directory.  CSV bodies are byte-stable for a fixed
config and seed; timestamps appear only in '#' header lines and report.json.

Exit codes: 0 success, 2 configuration error, 3 numerical-precondition error.
"""
from __future__ import annotations

import argparse
import json
import os
import sys
import tempfile
import time
from dataclasses import dataclass, fields
from datetime import datetime, timezone

import numpy as np

from . import __version__
from .diagnostics import (
    EmpiricalDistribution,
    aldous_criterion_estimate,
    convergence_in_probability_estimate,
    filtration_convergence_probe,
    wasserstein1,
)
from .paths import restrict, sup_distance
from .processes import (
    BlackScholesParams,
    InsufficientDriverError,
    crr_path_from_signs,
    knight_embedding,
    sample_black_scholes,
    sample_brownian,
)
from .stopping import (
    RandomizedRule,
    brute_force_value,
    randomized_value,
    rule_from_mask,
    _check_enumerable,
)
from .trees import (
    ParameterError,
    Payoff,
    build_crr_model,
    constant_payoff,
    exercise_boundary,
    optimal_rule,
    put_payoff,
    rational_exercise_rule,
    snell_envelope,
)
from .diagnostics import _rule_flat, _stop_steps_markov

EXPERIMENTS = (
    "price",
    "oracle-check",
    "converge-values",
    "converge-times",
    "coupling",
    "diagnose",
)

DRIVER_EXTENT_FACTOR = 3  # drivers are sampled on [0, 3T] so band exits never run out


class ConfigError(Exception):
    """Invalid configuration (bad key, bad value, inconsistent fields)."""


@dataclass(frozen=True)
class ExperimentConfig:
    """Effective configuration of one run; every field lands in the report."""

    experiment: str
    s0: float = 100.0
    r: float = 0.05
    sigma: float = 0.2
    mu: float = 0.0
    horizon: float = 1.0
    strike: float = 100.0
    payoff: str = "put"  # put | constant | zero
    discounting: str = "per_step"
    n_list: tuple = ()
    n_paths: int = 0
    seed: int = 0
    out: str = "runs"
    driver_points: int = 0
    resolution: int = 2
    delta_list: tuple = (0.001, 0.01, 0.1)
    epsilon: float = 0.0  # 0 -> experiment-specific default
    n_models: int = 50
    n_mixtures: int = 200
    mixture_models: int = 20
    aldous_n: int = 512
    filtration_paths: int = 2000

    def bs_params(self) -> BlackScholesParams:
        return BlackScholesParams(
            S0=self.s0, r=self.r, sigma=self.sigma, T=self.horizon, mu=self.mu
        )

    def payoff_obj(self) -> Payoff:
        if self.payoff == "put":
            return put_payoff(self.strike, self.discounting)
        if self.payoff == "constant":
            return constant_payoff(1.0, self.discounting)
        if self.payoff == "zero":
            return constant_payoff(0.0, self.discounting)
        raise ConfigError(f"unknown payoff {self.payoff!r}")


_DEFAULT_N_LIST = {
    "price": (128, 512, 2048, 8192),
    "oracle-check": (1, 2, 3, 4, 5, 6),
    "converge-values": (64, 128, 256, 512, 1024, 2048, 4096, 8192),
    "converge-times": (64, 128, 256, 512, 1024),
    "coupling": (64, 4096),
    "diagnose": (16, 1024),
}
_DEFAULT_N_PATHS = {
    "price": 1,
    "oracle-check": 1,
    "converge-values": 1,
    "converge-times": 5000,
    "coupling": 50,
    "diagnose": 5000,
}
_DEFAULT_DRIVER_POINTS = {
    "price": 16384,
    "oracle-check": 16384,
    "converge-values": 16384,
    "converge-times": 4096,
    "coupling": 16384,
    "diagnose": 16384,
}

_INT_KEYS = {
    "n_paths",
    "seed",
    "driver_points",
    "resolution",
    "n_models",
    "n_mixtures",
    "mixture_models",
    "aldous_n",
    "filtration_paths",
}
_FLOAT_KEYS = {"s0", "r", "sigma", "mu", "horizon", "strike", "epsilon"}
_STR_KEYS = {"experiment", "payoff", "discounting", "out"}
_LIST_INT_KEYS = {"n_list"}
_LIST_FLOAT_KEYS = {"delta_list"}
_ALL_KEYS = _INT_KEYS | _FLOAT_KEYS | _STR_KEYS | _LIST_INT_KEYS | _LIST_FLOAT_KEYS


def parse_config_text(text: str) -> dict:
    """Flat key=value lines; '#' starts a comment; blank lines ignored."""
    out = {}
    for ln, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {ln}: expected key=value, got {raw!r}")
        key, _, val = line.partition("=")
        key = key.strip()
        val = val.strip()
        if key not in _ALL_KEYS:
            raise ConfigError(f"line {ln}: unknown config key {key!r}")
        out[key] = _coerce(key, val, f"line {ln}")
    return out


def _coerce(key: str, val, where: str):
    try:
        if key in _INT_KEYS:
            return int(val)
        if key in _FLOAT_KEYS:
            return float(val)
        if key in _LIST_INT_KEYS:
            items = val if isinstance(val, (list, tuple)) else str(val).split(",")
            return tuple(int(str(v).strip()) for v in items)
        if key in _LIST_FLOAT_KEYS:
            items = val if isinstance(val, (list, tuple)) else str(val).split(",")
            return tuple(float(str(v).strip()) for v in items)
        return str(val)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{where}: bad value for {key}: {val!r} ({exc})") from None


def build_config(command: str, file_values: dict, overrides: dict) -> ExperimentConfig:
    values = dict(file_values)
    cfg_experiment = values.pop("experiment", None)
    if cfg_experiment is not None and cfg_experiment != command:
        raise ConfigError(
            f"config file says experiment={cfg_experiment!r} but the command "
            f"is {command!r}"
        )
    for key, val in overrides.items():
        if val is not None:
            values[key] = val
    values["experiment"] = command
    if not values.get("n_list"):
        values["n_list"] = _DEFAULT_N_LIST[command]
    if not values.get("n_paths"):
        values["n_paths"] = _DEFAULT_N_PATHS[command]
    if not values.get("driver_points"):
        values["driver_points"] = _DEFAULT_DRIVER_POINTS[command]
    try:
        cfg = ExperimentConfig(**values)
    except TypeError as exc:
        raise ConfigError(str(exc)) from None
    _validate_config(cfg)
    return cfg


def _validate_config(cfg: ExperimentConfig) -> None:
    if cfg.experiment not in EXPERIMENTS:
        raise ConfigError(f"experiment must be one of {EXPERIMENTS}")
    if not cfg.n_list:
        raise ConfigError("n_list must be non-empty")
    if any(n < 1 for n in cfg.n_list):
        raise ConfigError("n_list entries must be >= 1")
    if any(b <= a for a, b in zip(cfg.n_list, cfg.n_list[1:])):
        raise ConfigError(f"n_list must be strictly increasing, got {cfg.n_list}")
    if cfg.n_paths < 1:
        raise ConfigError("n_paths must be >= 1")
    if cfg.s0 <= 0 or cfg.sigma <= 0 or cfg.horizon <= 0:
        raise ConfigError("s0, sigma and horizon must be positive")
    if cfg.strike < 0:
        raise ConfigError("strike must be non-negative")
    if cfg.payoff not in ("put", "constant", "zero"):
        raise ConfigError("payoff must be put, constant or zero")
    if cfg.discounting not in ("none", "per_step", "continuous"):
        raise ConfigError("discounting must be none, per_step or continuous")
    if cfg.driver_points < 2:
        raise ConfigError("driver_points must be >= 2")
    if cfg.resolution < 1:
        raise ConfigError("resolution must be >= 1")
    if cfg.n_models < 1 or cfg.n_mixtures < 1 or cfg.mixture_models < 1:
        raise ConfigError("n_models, n_mixtures, mixture_models must be >= 1")
    if cfg.aldous_n < 1 or cfg.filtration_paths < 1:
        raise ConfigError("aldous_n and filtration_paths must be >= 1")
    if any(d < 0 for d in cfg.delta_list):
        raise ConfigError("delta_list entries must be >= 0")
    if cfg.epsilon < 0:
        raise ConfigError("epsilon must be >= 0")
    if cfg.experiment == "diagnose":
        for n in cfg.n_list:
            if n & (n - 1):
                raise ConfigError(
                    f"diagnose requires power-of-two step counts, got {n}"
                )


NORMALIZATION = {
    "u": "exp(sigma*sqrt(T/n))",
    "d": "1/u",
    "step_rate": "1 + r*T/n",
    "p_star": "(step_rate - d)/(u - d)",
}


def _model_record(model) -> dict:
    return {
        "n": model.n,
        "u": model.u,
        "d": model.d,
        "step_rate": model.step_rate,
        "p_star": model.p_star,
    }


def _fmt(x) -> str:
    if x is None:
        return ""
    if isinstance(x, (bool, np.bool_)):
        return str(int(x))
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if isinstance(x, (float, np.floating)):
        return repr(float(x))
    return str(x)


def _write_atomic(path: str, text: str) -> None:
    d = os.path.dirname(path) or "."
    fd, tmp = tempfile.mkstemp(dir=d, prefix=".tmp-", suffix=".part")
    try:
        with os.fdopen(fd, "w") as f:
            f.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _csv_text(cfg: ExperimentConfig, columns, rows, generated: str) -> str:
    head = [
        f"# stoplab {__version__}",
        f"# generated {generated}",
        f"# experiment={cfg.experiment} seed={cfg.seed}",
        "# normalization "
        + " ".join(f"{k}={v}" for k, v in NORMALIZATION.items()),
    ]
    body = [",".join(columns)]
    for row in rows:
        body.append(",".join(_fmt(v) for v in row))
    return "\n".join(head + body) + "\n"


def _config_dict(cfg: ExperimentConfig) -> dict:
    out = {}
    for f in fields(cfg):
        v = getattr(cfg, f.name)
        out[f.name] = list(v) if isinstance(v, tuple) else v
    return out


def _finish(cfg, results, extra, tables, started):
    """Write report.json plus one or more CSV tables atomically; return report."""
    generated = datetime.now(timezone.utc).isoformat()
    report = {
        "tool": "stoplab",
        "tool_version": __version__,
        "experiment": cfg.experiment,
        "config": _config_dict(cfg),
        "normalization": NORMALIZATION,
        "results": results,
        "generated_utc": generated,
        "wall_clock_seconds": time.perf_counter() - started,
    }
    report.update(extra)
    os.makedirs(cfg.out, exist_ok=True)
    for name, (columns, rows) in tables.items():
        _write_atomic(
            os.path.join(cfg.out, name), _csv_text(cfg, columns, rows, generated)
        )
    _write_atomic(
        os.path.join(cfg.out, "report.json"),
        json.dumps(report, indent=2, sort_keys=True) + "\n",
    )
    return report


def _driver(cfg: ExperimentConfig, seed: int):
    """Brownian driver on [0, 3T] with per-horizon density driver_points."""
    return sample_brownian(
        DRIVER_EXTENT_FACTOR * cfg.horizon,
        DRIVER_EXTENT_FACTOR * cfg.driver_points + 1,
        seed,
    )


_REDRAW_STRIDE = 10_000_019
_MAX_REDRAWS = 8


def _embed_with_redraw(cfg: ExperimentConfig, base_seed: int, n_values):
    """One driver embedded at every n, with a deterministic redraw fallback.

    A driver that runs out of extent before completing all band exits (rare,
    and only for very small n) is replaced by the driver seeded at
    base_seed + _REDRAW_STRIDE*attempt, keeping the run reproducible while
    preserving the one-driver-for-all-n coupling.  Gives up after
    _MAX_REDRAWS attempts and re-raises.
    """
    attempt = 0
    while True:
        seed = base_seed + _REDRAW_STRIDE * attempt
        driver = _driver(cfg, seed)
        try:
            embs = {n: knight_embedding(driver, n, cfg.horizon) for n in n_values}
            return driver, embs, attempt
        except InsufficientDriverError:
            attempt += 1
            if attempt > _MAX_REDRAWS:
                raise


# ----------------------------------------------------------------- commands


def cmd_price(cfg: ExperimentConfig) -> dict:
    started = time.perf_counter()
    params = cfg.bs_params()
    payoff = cfg.payoff_obj()
    results = []
    rows = []
    values = {}
    for n in cfg.n_list:
        model = build_crr_model(params, n)
        sol = snell_envelope(model, payoff)
        boundary = exercise_boundary(sol)
        exercise_steps = sum(1 for _, c in boundary[:-1] if c is not None)
        rec = _model_record(model)
        rec.update(value=sol.root_value, exercise_steps=exercise_steps)
        results.append(rec)
        values[n] = sol.root_value
        rows.append(
            [n, model.u, model.d, model.step_rate, model.p_star, sol.root_value,
             exercise_steps]
        )
    n_fine = max(cfg.n_list)
    n_half = n_fine // 2
    if n_half >= 1:
        if n_half not in values:
            values[n_half] = snell_envelope(
                build_crr_model(params, n_half), payoff
            ).root_value
        reference = 2.0 * values[n_fine] - values[n_half]
        ref_method = f"richardson_two_point(n={n_fine}, n={n_half})"
    else:
        reference = values[n_fine]
        ref_method = f"finest_grid(n={n_fine})"
    extra = {
        "reference_value": reference,
        "reference_method": ref_method,
        "reference_is_approximation": True,
    }
    cols = ["n", "u", "d", "step_rate", "p_star", "value", "exercise_steps"]
    return _finish(cfg, results, extra, {"table.csv": (cols, rows)}, started)


def _random_model_payoff(cfg: ExperimentConfig, rng, n: int):
    """A random small tree plus a bounded payoff, for oracle sweeps."""
    while True:
        params = BlackScholesParams(
            S0=float(rng.uniform(0.5, 2.0)),
            r=float(rng.uniform(0.0, 0.08)),
            sigma=float(rng.uniform(0.15, 0.7)),
            T=float(rng.uniform(0.5, 2.0)),
        )
        try:
            model = build_crr_model(params, n)
            break
        except ParameterError:
            continue
    discounting = ("none", "per_step", "continuous")[int(rng.integers(3))]
    if rng.random() < 0.2:
        payoff = constant_payoff(float(rng.uniform(-1.0, 1.0)), discounting)
    else:
        payoff = put_payoff(float(params.S0 * rng.uniform(0.5, 1.5)), discounting)
    return model, payoff


def cmd_oracle_check(cfg: ExperimentConfig) -> dict:
    started = time.perf_counter()
    rng = np.random.default_rng(cfg.seed)
    sizes = [n for n in cfg.n_list if n <= 6]
    if not sizes:
        raise ConfigError("oracle-check needs n_list entries <= 6")
    rows = []
    max_abs_diff = 0.0
    for i in range(cfg.n_models):
        n = sizes[int(rng.integers(len(sizes)))]
        model, payoff = _random_model_payoff(cfg, rng, n)
        snell = snell_envelope(model, payoff).root_value
        spaces = ["markov"] + (["path_dependent"] if n <= 4 else [])
        for space in spaces:
            bits = _check_enumerable(n, space)
            brute = brute_force_value(model, payoff, space)
            diff = abs(snell - brute)
            max_abs_diff = max(max_abs_diff, diff)
            tag = "markov" if space == "markov" else "path"
            rows.append([f"m{i:03d}-{tag}", n, snell, brute, diff, 1 << bits])

    excess = -np.inf
    degenerate_gap = 0.0
    for i in range(cfg.mixture_models):
        n = min(sizes[int(rng.integers(len(sizes)))], 4)
        model, payoff = _random_model_payoff(cfg, rng, n)
        sol = snell_envelope(model, payoff)
        brute = brute_force_value(model, payoff, "path_dependent")
        bits = _check_enumerable(n, "path_dependent")
        n_rules = 1 << bits
        for _ in range(cfg.n_mixtures):
            m = int(rng.integers(1, 5))
            masks = rng.integers(0, n_rules, size=m)
            w = rng.random(m)
            w = w / w.sum()
            w[-1] = 1.0 - float(np.sum(w[:-1]))
            comps = tuple(
                (float(w[c]), rule_from_mask(model, "path_dependent", int(masks[c])))
                for c in range(m)
            )
            rv = randomized_value(model, payoff, RandomizedRule(comps))
            excess = max(excess, rv - brute)
        degenerate = RandomizedRule(((1.0, optimal_rule(sol)),))
        degenerate_gap = max(
            degenerate_gap,
            abs(randomized_value(model, payoff, degenerate) - brute),
        )
    extra = {
        "max_abs_diff": max_abs_diff,
        "mixtures": {
            "models": cfg.mixture_models,
            "per_model": cfg.n_mixtures,
            "max_excess_over_optimum": float(excess),
            "max_degenerate_gap": degenerate_gap,
        },
    }
    results = {"models_checked": cfg.n_models, "max_abs_diff": max_abs_diff}
    cols = ["model_id", "n", "snell_value", "brute_value", "abs_diff", "rule_count"]
    return _finish(cfg, results, extra, {"table.csv": (cols, rows)}, started)


def cmd_converge_values(cfg: ExperimentConfig) -> dict:
    started = time.perf_counter()
    params = cfg.bs_params()
    payoff = cfg.payoff_obj()
    rows = []
    results = []
    prev = None
    for n in cfg.n_list:
        model = build_crr_model(params, n)
        value = snell_envelope(model, payoff).root_value
        diff = None if prev is None else abs(value - prev)
        rec = _model_record(model)
        rec.update(value=value, abs_diff_prev=diff)
        results.append(rec)
        rows.append([n, value, diff])
        prev = value
    cols = ["n", "value", "abs_diff_prev"]
    return _finish(cfg, results, {}, {"table.csv": (cols, rows)}, started)


def cmd_converge_times(cfg: ExperimentConfig) -> dict:
    started = time.perf_counter()
    params = cfg.bs_params()
    payoff = cfg.payoff_obj()
    flats = {}
    for n in cfg.n_list:
        model = build_crr_model(params, n)
        flats[n] = _rule_flat(rational_exercise_rule(snell_envelope(model, payoff)))

    seeds = np.random.SeedSequence(cfg.seed).generate_state(cfg.n_paths)
    signs = {n: np.empty((cfg.n_paths, n), dtype=np.int8) for n in cfg.n_list}
    redraws = 0
    for i in range(cfg.n_paths):
        _, embs, extra_draws = _embed_with_redraw(cfg, int(seeds[i]), cfg.n_list)
        redraws += extra_draws
        for n in cfg.n_list:
            signs[n][i] = embs[n].signs
    taus = {}
    for n in cfg.n_list:
        steps = _stop_steps_markov(flats[n], signs[n], n)
        taus[n] = steps.astype(np.float64) * (cfg.horizon / n)

    epsilon = cfg.epsilon if cfg.epsilon > 0 else 0.05 * cfg.horizon
    rows = []
    w1_rows = []
    results = []
    for a, b in zip(cfg.n_list, cfg.n_list[1:]):
        w1 = wasserstein1(
            EmpiricalDistribution(taus[a]), EmpiricalDistribution(taus[b])
        )
        cip = convergence_in_probability_estimate(
            np.column_stack([taus[a], taus[b]]), epsilon
        )
        rows.append([a, b, w1, cip, cfg.n_paths])
        w1_rows.append([a, w1, cfg.n_paths])
        results.append(
            {"n": a, "n_next": b, "w1": w1, "cip_fraction": cip,
             "epsilon": epsilon, "paths": cfg.n_paths}
        )
    tables = {
        "table.csv": (["n", "n_next", "w1", "cip_fraction", "paths"], rows),
        "w1.csv": (["n", "w1", "paths"], w1_rows),
    }
    extra = {
        "epsilon": epsilon,
        "driver_redraws": redraws,
        "tau_means": {str(n): float(np.mean(taus[n])) for n in cfg.n_list},
    }
    return _finish(cfg, results, extra, tables, started)


def cmd_coupling(cfg: ExperimentConfig) -> dict:
    started = time.perf_counter()
    params = cfg.bs_params()
    # The continuous comparison path is the driftless exponential of the same
    # driver, S = S0*exp(sigma*B): the walk-driven price path is the identical
    # transform of the walk, so the pair converges with the walk coupling.
    matched = BlackScholesParams(
        S0=cfg.s0, r=cfg.r, sigma=cfg.sigma, T=cfg.horizon, mu=0.5 * cfg.sigma**2
    )
    sup_b = {n: np.empty(cfg.n_paths) for n in cfg.n_list}
    sup_s = {n: np.empty(cfg.n_paths) for n in cfg.n_list}
    redraws = 0
    for i in range(cfg.n_paths):
        driver, embs, extra_draws = _embed_with_redraw(
            cfg, cfg.seed + i, cfg.n_list
        )
        redraws += extra_draws
        b_path = restrict(driver, cfg.horizon)
        s_path = sample_black_scholes(matched, b_path, "physical")
        for n in cfg.n_list:
            emb = embs[n]
            sup_b[n][i] = sup_distance(emb.walk, b_path)
            crr = crr_path_from_signs(emb.signs, params, n)
            sup_s[n][i] = sup_distance(crr, s_path)
    rows = []
    results = []
    for n in cfg.n_list:
        med_b = float(np.median(sup_b[n]))
        med_s = float(np.median(sup_s[n]))
        rows.append([n, med_b, med_s, cfg.n_paths])
        results.append(
            {"n": n, "median_sup_b": med_b, "median_sup_s": med_s,
             "seeds": cfg.n_paths}
        )
    extra = {
        "comparison": {
            "walk_side": "driver restricted to the horizon",
            "price_side": "S0*exp(sigma*B) driven by the same restricted driver",
            "driver_extent_factor": DRIVER_EXTENT_FACTOR,
        },
        "driver_redraws": redraws,
    }
    cols = ["n", "median_sup_b", "median_sup_s", "seeds"]
    return _finish(cfg, results, extra, {"table.csv": (cols, rows)}, started)


def cmd_diagnose(cfg: ExperimentConfig) -> dict:
    started = time.perf_counter()
    params = cfg.bs_params()
    payoffs = [cfg.payoff_obj()]
    epsilon = cfg.epsilon if cfg.epsilon > 0 else 0.01 * cfg.s0
    model = build_crr_model(params, cfg.aldous_n)
    aldous_rows = []
    estimates = []
    for delta in cfg.delta_list:
        est = aldous_criterion_estimate(
            model, payoffs, delta, epsilon, cfg.n_paths, cfg.seed
        )
        aldous_rows.append([cfg.aldous_n, delta, epsilon, est])
        estimates.append({"delta": delta, "estimate": est})

    def sampler(n, seed):
        return knight_embedding(_driver(cfg, seed), n, cfg.horizon)

    filt_rows = []
    filt_results = []
    for n in cfg.n_list:
        mean_j1 = filtration_convergence_probe(
            sampler, n, None, cfg.filtration_paths, cfg.seed, cfg.resolution
        )
        filt_rows.append([n, mean_j1, cfg.filtration_paths])
        filt_results.append({"n": n, "mean_j1": mean_j1,
                             "paths": cfg.filtration_paths})

    rows = [["aldous", n, d, eps, est, cfg.n_paths]
            for (n, d, eps, est) in aldous_rows]
    rows += [["filtration", n, None, None, m, p] for n, m, p in filt_rows]
    results = {
        "aldous": {"n": cfg.aldous_n, "epsilon": epsilon, "estimates": estimates,
                   "paths": cfg.n_paths},
        "filtration": filt_results,
    }
    tables = {
        "table.csv": (["kind", "n", "delta", "epsilon", "value", "paths"], rows),
        "aldous.csv": (["n", "delta", "epsilon", "estimate"], aldous_rows),
        "filtration.csv": (["n", "mean_j1", "paths"], filt_rows),
    }
    return _finish(cfg, results, {}, tables, started)


_COMMANDS = {
    "price": cmd_price,
    "oracle-check": cmd_oracle_check,
    "converge-values": cmd_converge_values,
    "converge-times": cmd_converge_times,
    "coupling": cmd_coupling,
    "diagnose": cmd_diagnose,
}


def run_experiment(cfg: ExperimentConfig) -> dict:
    return _COMMANDS[cfg.experiment](cfg)


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="stoplab", description=__doc__,
        formatter_class=argparse.RawDescriptionHelpFormatter,
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name in EXPERIMENTS:
        p = sub.add_parser(name, help=f"run the {name} experiment")
        p.add_argument("--config", help="flat key=value config file")
        p.add_argument("--n", type=int, nargs="+", help="override n_list")
        p.add_argument("--seed", type=int, help="override seed")
        p.add_argument("--out", help="override output directory")
    return parser


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        file_values = {}
        if args.config:
            if not os.path.exists(args.config):
                raise ConfigError(f"config file not found: {args.config}")
            with open(args.config) as f:
                file_values = parse_config_text(f.read())
        overrides = {
            "n_list": tuple(args.n) if args.n else None,
            "seed": args.seed,
            "out": args.out,
        }
        cfg = build_config(args.command, file_values, overrides)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    try:
        report = run_experiment(cfg)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except (ParameterError, InsufficientDriverError) as exc:
        print(f"numerical precondition failed: {exc}", file=sys.stderr)
        return 3
    print(
        f"{cfg.experiment}: wrote {os.path.join(cfg.out, 'report.json')} "
        f"and {os.path.join(cfg.out, 'table.csv')} "
        f"({report['wall_clock_seconds']:.2f}s)"
    )
    return 0


if __name__ == "__main__":
    sys.exit(main())
