"""Command-line front end: ``sgflow simulate | bound | verify | suite``.

Configs are flat sectioned key-value files (INI syntax) or JSON files with
the same section structure; see the README for the full schema.  Sections:

* ``[problem]``     — objective family and its parameters
* ``[schedule]``    — stepsize adjustment, batch and epoch settings
* ``[simulation]``  — mode, horizon, grid and start point
* ``[ensemble]``    — path count and master seed
* ``[output]``      — output directory, format, file stem
* ``[verify]``      — experiment name and its parameters (verify/suite only)

Unknown sections or keys are hard errors listing the valid choices.  All
randomness is derived from the master seed (``--seed`` overrides the config;
with neither, the fixed default ``DEFAULT_SEED = 1729`` applies — never the
wall clock), so every output is a deterministic function of (config, seed).

CSV files use '.' decimals, '\\n' line endings, a fixed column order and 17
significant digits.  Exit codes: 0 = success/pass, 1 = verification failure
or unstable run, 2 = configuration error.
"""

from __future__ import annotations

import argparse
import configparser
import json
import math
import sys
import time
from pathlib import Path

import numpy as np

from .bounds import AdmissibilityError, BoundInputs, RateBound
from .discrete import Trajectory
from .harness import (
    EnsembleDivergenceError,
    RunSpec,
    ball_experiment,
    ensemble_run,
    landscape_stretch_experiment,
    pl_supermartingale_probe,
    time_change_experiment,
    verify_bound,
    weak_error_experiment,
)
from .harness import _run_one_path  # single-trajectory dispatch shared with ensembles
from .problems import (
    FiniteSumProblem,
    make_isotropic_quadratic,
    make_perturbed_quadratic,
    make_spread_quadratic,
)
from .schedules import AdjustmentSchedule, BatchSchedule, StalenessSchedule

DEFAULT_SEED = 1729

_SECTIONS = ("problem", "schedule", "simulation", "ensemble", "output", "verify")
_MODES = ("sgd", "pgd", "svrg", "mb-pgf", "vr-pgf", "time-changed")
_EXPERIMENTS = ("bound", "time-change", "landscape", "weak-error", "ball", "pl-probe")

_PROBLEM_KEYS = {
    "isotropic": {"family", "mu", "d", "sigma_star_sq", "x_star"},
    "perturbed": {"family", "h_diag", "x_star", "noise"},
    "spread": {"family", "lambda_mean", "spread", "d", "x_star"},
}
_SCHEDULE_KEYS = {"family", "a", "h", "batch_family", "b", "b0", "batch_rate", "m"}
_SIMULATION_KEYS = {"mode", "x0", "n_steps", "n_epochs", "dt", "t",
                    "record_every", "volatility"}
_ENSEMBLE_KEYS = {"n_paths", "seed"}
_OUTPUT_KEYS = {"dir", "format", "name"}
_VERIFY_KEYS = {"experiment", "kind", "slack_se", "n_checkpoints", "t_w",
                "lambda", "sigma", "tol_mult", "slope_tol", "h_list",
                "ball_mode", "t_long", "tail_fraction", "rel_tol",
                "min_pass_fraction"}

# kinds whose empirical observable is a psi-weighted running average
_WEIGHTED_KINDS = {"smooth_ct", "smooth_dt", "wqc_rand_ct", "wqc_rand_dt"}


class ConfigError(Exception):
    """A configuration problem the user must fix (exit code 2)."""


# -- config loading ----------------------------------------------------------


def load_config(path) -> dict:
    """Read an INI or JSON config into {section: {key: value}}."""
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"config file not found: {path}")
    if path.suffix.lower() == ".json":
        try:
            raw = json.loads(path.read_text())
        except json.JSONDecodeError as e:
            raise ConfigError(f"{path}: invalid JSON ({e})") from e
        if not isinstance(raw, dict) or not all(isinstance(v, dict)
                                                for v in raw.values()):
            raise ConfigError(f"{path}: JSON config must be an object of sections")
        cfg = {str(s).lower(): {str(k).lower(): v for k, v in sec.items()}
               for s, sec in raw.items()}
    else:
        parser = configparser.ConfigParser(interpolation=None)
        try:
            parser.read_string(path.read_text(), source=str(path))
        except configparser.Error as e:
            raise ConfigError(f"{path}: invalid config ({e})") from e
        cfg = {s.lower(): dict(parser.items(s)) for s in parser.sections()}
    unknown = set(cfg) - set(_SECTIONS)
    if unknown:
        raise ConfigError(f"{path}: unknown section(s) {sorted(unknown)}; "
                          f"valid sections: {list(_SECTIONS)}")
    _check_keys(cfg.get("schedule", {}), _SCHEDULE_KEYS, "schedule")
    _check_keys(cfg.get("simulation", {}), _SIMULATION_KEYS, "simulation")
    _check_keys(cfg.get("ensemble", {}), _ENSEMBLE_KEYS, "ensemble")
    _check_keys(cfg.get("output", {}), _OUTPUT_KEYS, "output")
    _check_keys(cfg.get("verify", {}), _VERIFY_KEYS, "verify")
    fam = str(cfg.get("problem", {}).get("family", "")).strip().lower()
    if fam:
        if fam not in _PROBLEM_KEYS:
            raise ConfigError(f"unknown problem family {fam!r}; valid families: "
                              f"{sorted(_PROBLEM_KEYS)}")
        _check_keys(cfg["problem"], _PROBLEM_KEYS[fam], "problem")
    return cfg


def _check_keys(section: dict, valid: set, name: str) -> None:
    unknown = set(section) - valid
    if unknown:
        raise ConfigError(f"unknown key(s) {sorted(unknown)} in [{name}]; "
                          f"valid keys: {sorted(valid)}")


def _get(section: dict, key: str, conv, default=None, required=False,
         where: str = ""):
    if key not in section:
        if required:
            raise ConfigError(f"missing required key {key!r} in [{where}]")
        return default
    try:
        return conv(section[key])
    except (TypeError, ValueError) as e:
        raise ConfigError(f"bad value for {key!r} in [{where}]: {e}") from e


def _as_float(v) -> float:
    x = float(v)
    if not math.isfinite(x):
        raise ValueError(f"must be finite, got {x}")
    return x


def _as_int(v) -> int:
    if isinstance(v, float) and v != int(v):
        raise ValueError(f"expected an integer, got {v}")
    return int(v)


def _as_str(v) -> str:
    return str(v).strip().lower()


def _as_vector(v) -> np.ndarray:
    if isinstance(v, (list, tuple)):
        return np.asarray([_as_float(x) for x in v])
    parts = [p for p in str(v).split(",") if p.strip()]
    if not parts:
        raise ValueError("empty vector")
    return np.asarray([_as_float(p) for p in parts])


def _as_matrix(v) -> np.ndarray:
    if isinstance(v, (list, tuple)):
        return np.atleast_2d(np.asarray(
            [[_as_float(x) for x in row] for row in v]))
    rows = [r for r in str(v).split(";") if r.strip()]
    if not rows:
        raise ValueError("empty matrix")
    return np.atleast_2d(np.asarray([_as_vector(r) for r in rows]))


def build_problem(cfg: dict) -> FiniteSumProblem:
    sec = cfg.get("problem", {})
    fam = _get(sec, "family", _as_str, required=True, where="problem")
    try:
        if fam == "isotropic":
            d = _get(sec, "d", _as_int, required=True, where="problem")
            mu = _get(sec, "mu", _as_float, required=True, where="problem")
            s2 = _get(sec, "sigma_star_sq", _as_float, default=0.0, where="problem")
            x_star = _get(sec, "x_star", _as_vector, where="problem")
            if x_star is not None and x_star.size == 1:
                x_star = np.full(d, x_star[0])
            return make_isotropic_quadratic(mu, d, x_star=x_star, sigma_star_sq=s2)
        if fam == "perturbed":
            h_diag = _get(sec, "h_diag", _as_vector, required=True, where="problem")
            noise = _get(sec, "noise", _as_matrix, required=True, where="problem")
            x_star = _get(sec, "x_star", _as_vector,
                          default=np.zeros(h_diag.size), where="problem")
            return make_perturbed_quadratic(h_diag, x_star, noise)
        # spread
        d = _get(sec, "d", _as_int, default=1, where="problem")
        lam = _get(sec, "lambda_mean", _as_float, required=True, where="problem")
        delta = _get(sec, "spread", _as_float, required=True, where="problem")
        x_star = _get(sec, "x_star", _as_vector, where="problem")
        if x_star is not None and x_star.size == 1:
            x_star = np.full(d, x_star[0])
        return make_spread_quadratic(lam, delta, d=d, x_star=x_star)
    except ValueError as e:
        raise ConfigError(f"[problem] {e}") from e


def build_schedules(cfg: dict):
    """(AdjustmentSchedule | None, BatchSchedule, m | None) from [schedule]."""
    sec = cfg.get("schedule", {})
    h = _get(sec, "h", _as_float, where="schedule")
    family = _get(sec, "family", _as_str, default="constant", where="schedule")
    a = _get(sec, "a", _as_float, where="schedule")
    bfam = _get(sec, "batch_family", _as_str, default="constant", where="schedule")
    b = _get(sec, "b", _as_int, default=1, where="schedule")
    b0 = _get(sec, "b0", _as_float, default=1.0, where="schedule")
    rate = _get(sec, "batch_rate", _as_float, default=0.0, where="schedule")
    m = _get(sec, "m", _as_int, where="schedule")
    try:
        adj = AdjustmentSchedule(h=h, family=family, a=a) if h is not None else None
        if bfam == "constant":
            batch = BatchSchedule(family="constant", b=b)
        else:
            batch = BatchSchedule(family=bfam, b0=b0, rate=rate)
    except ValueError as e:
        raise ConfigError(f"[schedule] {e}") from e
    return adj, batch, m


def build_run_spec(cfg: dict, problem: FiniteSumProblem,
                   overrides: argparse.Namespace,
                   weights: bool = False) -> RunSpec:
    sec = cfg.get("simulation", {})
    mode = _get(sec, "mode", _as_str, required=True, where="simulation")
    if mode not in _MODES:
        raise ConfigError(f"unknown mode {mode!r}; valid modes: {list(_MODES)}")
    x0 = _get(sec, "x0", _as_vector, required=True, where="simulation")
    adj, batch, m = build_schedules(cfg)
    dt = getattr(overrides, "dt", None)
    if dt is None:
        dt = _get(sec, "dt", _as_float, where="simulation")
    T = _get(sec, "t", _as_float, where="simulation")
    n_steps = _get(sec, "n_steps", _as_int, where="simulation")
    n_epochs = _get(sec, "n_epochs", _as_int, where="simulation")
    record_every = _get(sec, "record_every", _as_int, where="simulation")
    volatility = _get(sec, "volatility", _as_str, where="simulation")
    if volatility is not None and volatility not in ("exact", "constant"):
        raise ConfigError(f"unknown volatility {volatility!r}; "
                          "expected 'exact' or 'constant'")
    h = adj.h if adj is not None else None
    staleness = None
    if mode in ("svrg", "vr-pgf"):
        if m is None or h is None:
            raise ConfigError(f"mode {mode!r} needs keys 'm' and 'h' in [schedule]")
        if mode == "svrg" and n_epochs is None:
            raise ConfigError("mode 'svrg' needs key 'n_epochs' in [simulation]")
        staleness = StalenessSchedule(m=m, h=h)
        if mode == "vr-pgf" and T is None and n_epochs is not None:
            T = n_epochs * staleness.epoch_time
    try:
        spec = RunSpec(mode=mode, problem=problem, x0=x0, adj=adj, batch=batch,
                       n_steps=n_steps, dt=dt, T=T, h=h, epoch_steps=m,
                       n_epochs=n_epochs, staleness=staleness,
                       volatility_mode=volatility, weights=weights)
    except ValueError as e:
        raise ConfigError(f"[simulation] {e}") from e
    if record_every is not None:
        spec.record_every = record_every
    else:
        spec.record_every = max(1, spec.total_steps // 1000)
    return spec


def _ensemble_params(cfg: dict, overrides: argparse.Namespace):
    sec = cfg.get("ensemble", {})
    n_paths = getattr(overrides, "paths", None)
    if n_paths is None:
        n_paths = _get(sec, "n_paths", _as_int, default=1, where="ensemble")
    if n_paths < 1:
        raise ConfigError(f"n_paths must be >= 1, got {n_paths}")
    seed = getattr(overrides, "seed", None)
    if seed is None:
        seed = _get(sec, "seed", _as_int, default=DEFAULT_SEED, where="ensemble")
    if seed < 0:
        raise ConfigError(f"seed must be a nonnegative integer, got {seed}")
    return n_paths, seed


def _output_params(cfg: dict, overrides: argparse.Namespace):
    sec = cfg.get("output", {})
    out_dir = getattr(overrides, "out", None) or _get(sec, "dir", str,
                                                      default=".", where="output")
    fmt = getattr(overrides, "format", None) or _get(sec, "format", _as_str,
                                                     default="csv", where="output")
    if fmt not in ("csv", "json"):
        raise ConfigError(f"unknown output format {fmt!r}; expected 'csv' or 'json'")
    name = _get(sec, "name", str, where="output")
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    return out, fmt, name


# -- emission ----------------------------------------------------------------


def _fmt(x) -> str:
    return f"{float(x):.17g}"


def _write_csv(path: Path, header: list, columns: list) -> None:
    """Write columns (sequences of equal length) with 17-digit floats."""
    n = len(columns[0])
    with open(path, "w", newline="") as fh:
        fh.write(",".join(header) + "\n")
        for i in range(n):
            fh.write(",".join(col[i] if isinstance(col[i], str) else _fmt(col[i])
                              for col in columns) + "\n")


def _json_clean(v):
    if isinstance(v, (np.floating, float)):
        f = float(v)
        return f if math.isfinite(f) else repr(f)
    if isinstance(v, (np.bool_, bool)):  # before int: bool is an int subclass
        return bool(v)
    if isinstance(v, (np.integer, int)):
        return int(v)
    if isinstance(v, np.ndarray):
        return [_json_clean(x) for x in v.tolist()]
    if isinstance(v, (list, tuple)):
        return [_json_clean(x) for x in v]
    if isinstance(v, dict):
        return {str(k): _json_clean(x) for k, x in v.items()}
    return v


def _write_json(path: Path, payload: dict) -> None:
    with open(path, "w") as fh:
        json.dump(_json_clean(payload), fh, indent=2)
        fh.write("\n")


# -- commands ----------------------------------------------------------------


def cmd_simulate(cfg: dict, overrides: argparse.Namespace) -> int:
    problem = build_problem(cfg)
    spec = build_run_spec(cfg, problem, overrides)
    n_paths, seed = _ensemble_params(cfg, overrides)
    out, fmt, name = _output_params(cfg, overrides)

    if n_paths == 1:
        # the single path coincides with path 0 of an ensemble run at this seed
        rng = np.random.default_rng(np.random.SeedSequence(seed).spawn(1)[0])
        tr: Trajectory = _run_one_path(spec, rng)
        stem = name or "trajectory"
        flags = (tr.jump_flags.astype(int) if tr.jump_flags is not None
                 else np.zeros(len(tr), dtype=int))
        if fmt == "csv":
            _write_csv(out / f"{stem}.csv",
                       ["t", "f_gap", "grad_norm_sq", "dist_sq", "flags"],
                       [tr.times, tr.f_gap, tr.grad_norm_sq, tr.dist_sq,
                        [str(int(f)) for f in flags]])
        else:
            _write_json(out / f"{stem}.json", {
                "t": tr.times, "f_gap": tr.f_gap,
                "grad_norm_sq": tr.grad_norm_sq, "dist_sq": tr.dist_sq,
                "flags": flags, "diverged": tr.diverged,
                "divergence_step": tr.divergence_step, "seed": seed,
            })
        print(f"wrote {out / (stem + '.' + fmt)}")
        return 0

    stats = ensemble_run(spec, n_paths, seed)
    stem = name or "ensemble"
    if fmt == "csv":
        _write_csv(out / f"{stem}.csv",
                   ["t", "f_gap_mean", "f_gap_se", "grad_norm_sq_mean",
                    "grad_norm_sq_se", "dist_sq_mean", "dist_sq_se"],
                   [stats.grid,
                    stats.mean["f_gap"], stats.se("f_gap"),
                    stats.mean["grad_norm_sq"], stats.se("grad_norm_sq"),
                    stats.mean["dist_sq"], stats.se("dist_sq")])
    else:
        _write_json(out / f"{stem}.json", {
            "t": stats.grid, "n_paths": stats.n_paths,
            "divergence_count": stats.divergence_count, "seed": seed,
            "mean": {k: v for k, v in stats.mean.items() if k != "state"},
            "se": {k: stats.se(k) for k in stats.mean if k != "state"},
        })
    print(f"wrote {out / (stem + '.' + fmt)} "
          f"({stats.n_paths} paths, {stats.divergence_count} diverged)")
    return 0


def _bound_grid(cfg: dict, bound: RateBound, m: int | None,
                overrides: argparse.Namespace):
    """(axis values, evaluate() arguments) for a bound curve."""
    sec = cfg.get("simulation", {})
    if bound.kind in ("vr_ct", "vr_dt"):
        n_epochs = _get(sec, "n_epochs", _as_int, where="simulation")
        if n_epochs is None:
            T = _get(sec, "t", _as_float, where="simulation")
            h = bound.inputs.h
            if T is None or m is None:
                raise ConfigError("variance-reduced bound curves need "
                                  "'n_epochs' (or 't' with [schedule] m)")
            n_epochs = int(round(T / (m * h)))
        js = np.arange(n_epochs + 1)
        return js.astype(float), js
    if bound.is_continuous:
        dt = getattr(overrides, "dt", None)
        if dt is None:
            dt = _get(sec, "dt", _as_float, required=True, where="simulation")
        T = _get(sec, "t", _as_float, required=True, where="simulation")
        n = int(round(T / dt))
        stride = _get(sec, "record_every", _as_int,
                      default=max(1, n // 1000), where="simulation")
        ks = np.arange(0, n + 1, stride)
        if ks[-1] != n:
            ks = np.append(ks, n)
        ts = ks * dt
        return ts, ts
    n_steps = _get(sec, "n_steps", _as_int, required=True, where="simulation")
    stride = _get(sec, "record_every", _as_int,
                  default=max(1, n_steps // 1000), where="simulation")
    ks = np.arange(0, n_steps + 1, stride)
    if ks[-1] != n_steps:
        ks = np.append(ks, n_steps)
    return ks.astype(float), ks


def cmd_bound(cfg: dict, kind: str, overrides: argparse.Namespace) -> int:
    problem = build_problem(cfg)
    adj, batch, m = build_schedules(cfg)
    if adj is None:
        raise ConfigError("bound evaluation needs key 'h' in [schedule]")
    sec = cfg.get("simulation", {})
    x0 = _get(sec, "x0", _as_vector, required=True, where="simulation")
    inputs = BoundInputs.from_problem(problem, x0, adj, batch, m=m)
    try:
        bound = RateBound(kind=kind, inputs=inputs)
        axis, args = _bound_grid(cfg, bound, m, overrides)
        values = []
        for a in args:
            try:
                values.append(bound.evaluate(a))
            except (ZeroDivisionError, ValueError):
                if a != 0:
                    raise
                values.append(math.inf)  # randomized-output bounds diverge at t=0
        values = np.array(values)
    except (AdmissibilityError, ValueError) as e:
        raise ConfigError(str(e)) from e
    out, fmt, name = _output_params(cfg, overrides)
    stem = name or f"bound_{kind}"
    if fmt == "csv":
        _write_csv(out / f"{stem}.csv", ["t", "bound"], [axis, values])
    else:
        _write_json(out / f"{stem}.json", {"kind": kind, "t": axis,
                                           "bound": values})
    print(f"wrote {out / (stem + '.' + fmt)}")
    return 0


def cmd_verify(cfg: dict, experiment: str, overrides: argparse.Namespace) -> int:
    if experiment not in _EXPERIMENTS:
        raise ConfigError(f"unknown experiment {experiment!r}; valid: "
                          f"{list(_EXPERIMENTS)}")
    vsec = cfg.get("verify", {})
    declared = _get(vsec, "experiment", _as_str, where="verify")
    if declared is not None and declared != experiment:
        raise ConfigError(f"config declares experiment {declared!r} but "
                          f"{experiment!r} was requested")
    slack = _get(vsec, "slack_se", _as_float, default=3.0, where="verify")
    n_cp = _get(vsec, "n_checkpoints", _as_int, default=30, where="verify")
    n_paths, seed = _ensemble_params(cfg, overrides)
    if n_paths < 2 and experiment != "landscape":
        raise ConfigError(f"experiment {experiment!r} needs n_paths >= 2")
    out, fmt, name = _output_params(cfg, overrides)

    problem = build_problem(cfg)
    sim = cfg.get("simulation", {})

    if experiment == "bound":
        kind = _get(vsec, "kind", _as_str, required=True, where="verify")
        adj, batch, m = build_schedules(cfg)
        if adj is None:
            raise ConfigError("bound verification needs key 'h' in [schedule]")
        x0 = _get(sim, "x0", _as_vector, required=True, where="simulation")
        inputs = BoundInputs.from_problem(problem, x0, adj, batch, m=m)
        try:
            bound = RateBound(kind=kind, inputs=inputs)
            bound.evaluate(0 if not bound.is_continuous else
                           _get(sim, "t", _as_float, default=1.0,
                                where="simulation"))
        except (AdmissibilityError, ValueError) as e:
            raise ConfigError(str(e)) from e
        spec = build_run_spec(cfg, problem, overrides,
                              weights=kind in _WEIGHTED_KINDS)
        stats = ensemble_run(spec, n_paths, seed)
        report = verify_bound(stats, bound, slack_se=slack, n_checkpoints=n_cp)
        stem = name or f"report_bound_{kind}"
        curve_stem = f"{name}_curve" if name else f"curve_{kind}"
        _write_csv(out / f"{curve_stem}.csv",
                   ["t", "empirical_mean", "se", "bound"],
                   [report.checkpoints.astype(float), report.empirical,
                    report.se, report.reference])
    elif experiment == "time-change":
        adj, _, _ = build_schedules(cfg)
        if adj is None:
            raise ConfigError("the time-change experiment needs 'h' in [schedule]")
        t_w = _get(vsec, "t_w", _as_float, required=True, where="verify")
        frac = _get(vsec, "min_pass_fraction", _as_float, default=0.95,
                    where="verify")
        x0 = _get(sim, "x0", _as_vector, required=True, where="simulation")
        dt = getattr(overrides, "dt", None) or _get(sim, "dt", _as_float,
                                                    where="simulation")
        try:
            report = time_change_experiment(problem, x0, adj.h, t_w, n_paths,
                                            seed, dt=dt, n_checkpoints=n_cp,
                                            slack_se=slack,
                                            min_pass_fraction=frac)
        except ValueError as e:
            raise ConfigError(str(e)) from e
        stem = name or "report_time-change"
    elif experiment == "landscape":
        lam = _get(vsec, "lambda", _as_vector, required=True, where="verify")
        sigma = _get(vsec, "sigma", _as_float, default=0.0, where="verify")
        tol_mult = _get(vsec, "tol_mult", _as_float, default=5.0, where="verify")
        slope_tol = _get(vsec, "slope_tol", _as_float, default=0.02,
                         where="verify")
        x0 = _get(sim, "x0", _as_vector, required=True, where="simulation")
        dt = getattr(overrides, "dt", None) or _get(sim, "dt", _as_float,
                                                    required=True,
                                                    where="simulation")
        T = _get(sim, "t", _as_float, required=True, where="simulation")
        try:
            report = landscape_stretch_experiment(lam, x0, dt, T,
                                                  n_paths=n_paths, seed=seed,
                                                  sigma=sigma, slack_se=slack,
                                                  tol_mult=tol_mult,
                                                  slope_tol=slope_tol,
                                                  n_checkpoints=n_cp)
        except ValueError as e:
            raise ConfigError(str(e)) from e
        stem = name or "report_landscape"
    elif experiment == "weak-error":
        h_list = _get(vsec, "h_list", _as_vector, required=True, where="verify")
        x0 = _get(sim, "x0", _as_vector, required=True, where="simulation")
        T = _get(sim, "t", _as_float, required=True, where="simulation")
        try:
            report = weak_error_experiment(problem, h_list, T, n_paths, seed, x0)
        except ValueError as e:
            raise ConfigError(str(e)) from e
        stem = name or "report_weak-error"
    elif experiment == "ball":
        adj, batch, _ = build_schedules(cfg)
        if adj is None:
            raise ConfigError("the ball experiment needs 'h' in [schedule]")
        if batch.family != "constant":
            raise ConfigError("the ball experiment needs a constant batch size")
        mode = _get(vsec, "ball_mode", _as_str, required=True, where="verify")
        t_long = _get(vsec, "t_long", _as_float, required=True, where="verify")
        tail = _get(vsec, "tail_fraction", _as_float, default=0.5, where="verify")
        rel_tol = _get(vsec, "rel_tol", _as_float, default=0.10, where="verify")
        dt = getattr(overrides, "dt", None) or _get(sim, "dt", _as_float,
                                                    default=adj.h,
                                                    where="simulation")
        x0 = _get(sim, "x0", _as_vector, where="simulation")
        try:
            report = ball_experiment(problem, adj.h, batch.b, dt, t_long,
                                     n_paths, seed, mode, tail_fraction=tail,
                                     slack_se=slack,
                                     isotropic_rel_tol=rel_tol, x0=x0)
        except ValueError as e:
            raise ConfigError(str(e)) from e
        stem = name or "report_ball"
    else:  # pl-probe
        adj, batch, _ = build_schedules(cfg)
        if adj is None:
            raise ConfigError("the supermartingale probe needs 'h' in [schedule]")
        x0 = _get(sim, "x0", _as_vector, required=True, where="simulation")
        dt = getattr(overrides, "dt", None) or _get(sim, "dt", _as_float,
                                                    required=True,
                                                    where="simulation")
        T = _get(sim, "t", _as_float, required=True, where="simulation")
        try:
            report = pl_supermartingale_probe(problem, adj, batch, x0, dt, T,
                                              n_paths, seed, slack_se=slack,
                                              n_checkpoints=n_cp)
        except ValueError as e:
            raise ConfigError(str(e)) from e
        stem = name or "report_pl-probe"

    payload = report.to_json_dict()
    payload["seed"] = seed
    _write_json(out / f"{stem}.json", payload)
    status = "PASS" if report.passed else "FAIL"
    print(f"{status} {experiment} (max violation {report.max_violation_se:.3g} SE, "
          f"{report.n_paths} paths, {report.runtime_seconds:.1f}s) -> "
          f"{out / (stem + '.json')}")
    return 0 if report.passed else 1


def cmd_suite(config_dir, overrides: argparse.Namespace) -> int:
    config_dir = Path(config_dir)
    if not config_dir.is_dir():
        raise ConfigError(f"not a directory: {config_dir}")
    files = sorted(p for p in config_dir.iterdir()
                   if p.suffix.lower() in (".ini", ".json") and p.is_file())
    if not files:
        raise ConfigError(f"no .ini or .json configs in {config_dir}")
    results = []
    t0 = time.perf_counter()
    for path in files:
        cfg = load_config(path)
        experiment = _get(cfg.get("verify", {}), "experiment", _as_str,
                          required=True, where="verify")
        if experiment not in _EXPERIMENTS:
            raise ConfigError(f"{path}: unknown experiment {experiment!r}; "
                              f"valid: {list(_EXPERIMENTS)}")
        code = cmd_verify(cfg, experiment, overrides)
        results.append({"config": path.name, "experiment": experiment,
                        "passed": code == 0})
    out, _, name = _output_params({}, overrides)
    all_passed = all(r["passed"] for r in results)
    _write_json(out / f"{name or 'suite_report'}.json", {
        "all_passed": all_passed,
        "runtime_seconds": time.perf_counter() - t0,
        "results": results,
    })
    for r in results:
        print(f"{'PASS' if r['passed'] else 'FAIL'}  {r['experiment']:<12} "
              f"{r['config']}")
    print(f"{'all experiments passed' if all_passed else 'FAILURES present'} "
          f"({len(results)} configs, {time.perf_counter() - t0:.1f}s)")
    return 0 if all_passed else 1


# -- entry point --------------------------------------------------------------


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="sgflow",
        description="Simulate stochastic-gradient methods and their diffusion "
                    "limits, evaluate convergence-rate guarantees, and verify "
                    "them by Monte Carlo.")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, config_required=True):
        if config_required:
            p.add_argument("--config", required=True, help="INI or JSON config file")
        p.add_argument("--seed", type=int, default=None,
                       help=f"master seed (overrides config; default {DEFAULT_SEED})")
        p.add_argument("--paths", type=int, default=None,
                       help="ensemble size (overrides config)")
        p.add_argument("--dt", type=float, default=None,
                       help="integrator step (overrides config)")
        p.add_argument("--out", default=None,
                       help="output directory (overrides config)")
        p.add_argument("--format", choices=("csv", "json"), default=None,
                       help="output format (overrides config)")

    p_sim = sub.add_parser("simulate", help="run one trajectory or an ensemble")
    common(p_sim)
    p_bound = sub.add_parser("bound", help="evaluate a rate guarantee as a curve")
    p_bound.add_argument("kind", help="guarantee kind, e.g. smooth_ct or pl_dt")
    common(p_bound)
    p_verify = sub.add_parser("verify", help="run one verification experiment")
    p_verify.add_argument("experiment", help=f"one of {', '.join(_EXPERIMENTS)}")
    common(p_verify)
    p_suite = sub.add_parser("suite", help="run every experiment config in a directory")
    p_suite.add_argument("config_dir", help="directory of verify configs")
    common(p_suite, config_required=False)
    return parser


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        if args.command == "simulate":
            return cmd_simulate(load_config(args.config), args)
        if args.command == "bound":
            return cmd_bound(load_config(args.config), args.kind, args)
        if args.command == "verify":
            return cmd_verify(load_config(args.config), args.experiment, args)
        return cmd_suite(args.config_dir, args)
    except ConfigError as e:
        print(f"config error: {e}", file=sys.stderr)
        return 2
    except AdmissibilityError as e:
        print(f"config error: {e}", file=sys.stderr)
        return 2
    except EnsembleDivergenceError as e:
        print(f"run failed: {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
