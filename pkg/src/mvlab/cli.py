"""Configuration-driven experiment runner.

Reads a TOML config, runs one experiment, and writes next to each other:
``results.csv`` (the single source of truth), ``metadata.toml`` (the fully
resolved config plus tool version; re-running with it as the config
reproduces the CSV byte for byte), and for rate experiments an optional
``plot.gp`` gnuplot script. Plot scripts are conveniences and are never read
back.

Exit codes: 0 success, 2 configuration error, 3 blow-up, 4 I/O error.

The seed is mandatory and never defaulted from the clock; the thread count
is advisory metadata and must not change any output byte.
"""

from __future__ import annotations

import argparse
import dataclasses
import sys
from pathlib import Path as FsPath

import numpy as np

try:
    import tomllib
except ModuleNotFoundError:  # python < 3.11
    import tomli as tomllib

from . import __version__, galerkin, ldp, models, rng, solvers
from .errors import BlowUpError, ConfigError
from .grids import TimeGrid

EXPERIMENTS = ("simulate", "chaos-compare", "assumptions", "ldp", "spde", "holder")

_MODEL_PARAMS = {
    "zero": {"d": 1, "m": 1},
    "brownian": {"d": 1, "scale": 1.0},
    "cubic": {"p": 2.0},
    "linear_meanfield": {"a": -1.0, "c": 0.0, "s": 0.0},
    "granular_curie_weiss": {"beta": 1.0, "K": 1.0, "noise_scale": 1.0},
    "plasma_cucker_smale": {"beta": 0.0, "d": 1},
    "kinetic_dorsogna": {"C1": 1.0, "C2": 0.0, "l1": 1.0, "l2": 1.0, "d": 1},
    "bounded_sin_tanh": {},
}

_SCHEMA = {
    "experiment": None,
    "seed": None,
    "threads": None,
    "meta": dict,  # written by the runner; accepted and ignored on input
    "model": {"id": None, "params": dict},
    "x0": {"kind": None, "value": None, "mean": None, "std": None},
    "solver": {"scheme": None, "T": None, "n": None, "M": None, "N": None,
               "inner_steps": None},
    "output": {"times": None},
    "holder": {"q": None, "lags": None},
    "ldp": {"epsilons": None, "trials": None, "delta": None, "side": None,
            "bridge": None, "plot": None},
    "assumptions": {"conditions": None, "radii": None, "points_per_radius": None,
                    "ensemble_size": None, "constant_cap": None},
    "spde": {"K": None, "K_noise": None, "r": None, "q": None, "q_scale": None,
             "T": None, "n": None, "inner_steps": None, "M": None,
             "x0": {"kind": None, "mode": None, "amplitude": None,
                    "scale": None, "decay": None},
             "p": None},
}


def _validate_keys(cfg, schema, path="") -> None:
    for key, val in cfg.items():
        where = f"{path}.{key}" if path else key
        if key not in schema:
            raise ConfigError(f"unknown config key: {where}")
        sub = schema[key]
        if sub is dict:
            continue  # free-form table (validated downstream)
        if isinstance(sub, dict):
            if not isinstance(val, dict):
                raise ConfigError(f"config key {where} must be a table")
            _validate_keys(val, sub, where)


def _parse_override(text: str):
    if "=" not in text:
        raise ConfigError(f"override {text!r} is not of the form key=value")
    key, raw = text.split("=", 1)
    try:
        value = tomllib.loads(f"v = {raw}")["v"]
    except tomllib.TOMLDecodeError:
        value = raw
    return key.strip(), value


def _apply_override(cfg: dict, dotted: str, value) -> None:
    parts = dotted.split(".")
    node = cfg
    for part in parts[:-1]:
        node = node.setdefault(part, {})
        if not isinstance(node, dict):
            raise ConfigError(f"cannot override through scalar key {part!r}")
    node[parts[-1]] = value


def _toml_scalar(v) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    if isinstance(v, str):
        return '"' + v.replace("\\", "\\\\").replace('"', '\\"') + '"'
    if isinstance(v, (list, tuple)):
        return "[" + ", ".join(_toml_scalar(x) for x in v) + "]"
    raise ConfigError(f"cannot serialize config value {v!r}")


def _dump_toml(cfg: dict, fh, prefix="") -> None:
    tables = []
    for key, val in cfg.items():
        if isinstance(val, dict):
            tables.append((key, val))
        else:
            fh.write(f"{key} = {_toml_scalar(val)}\n")
    for key, val in tables:
        name = f"{prefix}.{key}" if prefix else key
        fh.write(f"\n[{name}]\n")
        _dump_toml(val, fh, name)


def build_model(section: dict) -> models.CoefficientModel:
    if "id" not in section:
        raise ConfigError("missing config key: model.id")
    model_id = section["id"]
    if model_id not in _MODEL_PARAMS:
        raise ConfigError(f"unknown model id {model_id!r}; known: {sorted(_MODEL_PARAMS)}")
    defaults = dict(_MODEL_PARAMS[model_id])
    params = section.get("params", {})
    for key in params:
        if key not in defaults:
            raise ConfigError(f"unknown parameter {key!r} for model {model_id!r}")
    defaults.update(params)
    if model_id == "zero":
        return models.model_zero(d=int(defaults["d"]), m=int(defaults["m"]))
    if model_id == "brownian":
        return models.model_brownian(d=int(defaults["d"]), scale=defaults["scale"])
    if model_id == "cubic":
        return models.model_cubic(p=defaults["p"])
    if model_id == "linear_meanfield":
        return models.model_linear_meanfield(defaults["a"], defaults["c"], defaults["s"])
    if model_id == "granular_curie_weiss":
        return models.curie_weiss(defaults["beta"], defaults["K"], defaults["noise_scale"])
    if model_id == "plasma_cucker_smale":
        return models.cucker_smale(beta=defaults["beta"], d=int(defaults["d"]))
    if model_id == "kinetic_dorsogna":
        return models.dorsogna(defaults["C1"], defaults["C2"], defaults["l1"],
                               defaults["l2"], d=int(defaults["d"]))
    return models.bounded_sin_tanh()


def build_x0(section: dict, model) -> callable:
    kind = section.get("kind", "constant")
    if kind == "constant":
        value = np.broadcast_to(np.atleast_1d(np.asarray(
            section.get("value", 0.0), dtype=float)), (model.d,))
        return solvers.x0_constant(value)
    if kind == "gaussian":
        return solvers.x0_gaussian(mean=section.get("mean", 0.0),
                                   std=section.get("std", 1.0), d=model.d)
    raise ConfigError(f"unknown x0 kind {kind!r}")


def _solver_config(section: dict, seed: int) -> solvers.SolverConfig:
    grid = TimeGrid(float(section.get("T", 1.0)), int(section.get("n", 100)))
    return solvers.SolverConfig(
        grid=grid,
        M=int(section.get("M", 2)),
        N=int(section.get("N", section.get("M", 2))),
        inner_steps=int(section.get("inner_steps", 1)),
        seed=seed)


def _mean_table(pe, times):
    grid = pe.grid
    rows = []
    for t in times:
        k = int(round(t / grid.dt))
        if not (0 <= k <= grid.n):
            raise ConfigError(f"output time {t} outside the horizon")
        x = pe.states[:, k, 0]
        rows.append((float(grid.points[k]), float(x.mean()),
                     float(x.std(ddof=1) / np.sqrt(x.shape[0]))))
    return rows


def run_experiment(cfg: dict, outdir: FsPath) -> None:
    seed = int(cfg["seed"])
    model = build_model(cfg.get("model", {"id": "zero"}))
    results = outdir / "results.csv"

    kind = cfg["experiment"]
    if kind == "simulate":
        sc = _solver_config(cfg.get("solver", {}), seed)
        x0 = build_x0(cfg.get("x0", {}), model)
        scheme = cfg.get("solver", {}).get("scheme", "frozen")
        if scheme == "frozen":
            _, pe = solvers.euler_frozen_measure(model, sc, x0)
        elif scheme == "interacting":
            pe = solvers.interacting_particles(model, sc, x0)
        else:
            raise ConfigError(f"unknown scheme {scheme!r}")
        solvers.paths_to_csv(pe, results)

    elif kind == "chaos-compare":
        sc = _solver_config(cfg.get("solver", {}), seed)
        x0 = build_x0(cfg.get("x0", {}), model)
        times = cfg.get("output", {}).get("times", [sc.grid.T / 2, sc.grid.T])
        frozen_cfg = solvers.SolverConfig(grid=sc.grid, M=sc.M, N=sc.N,
                                          inner_steps=sc.inner_steps,
                                          seed=rng.derive_seed(seed, 0))
        inter_cfg = solvers.SolverConfig(grid=sc.grid, M=sc.M, N=sc.N,
                                         inner_steps=sc.inner_steps,
                                         seed=rng.derive_seed(seed, 1))
        _, pe_f = solvers.euler_frozen_measure(model, frozen_cfg, x0)
        pe_i = solvers.interacting_particles(model, inter_cfg, x0)
        rows_f = _mean_table(pe_f, times)
        rows_i = _mean_table(pe_i, times)
        with open(results, "w", newline="") as fh:
            fh.write("time,mean_frozen,se_frozen,mean_interacting,se_interacting,"
                     "gap,combined_se\n")
            for (t, mf, sf), (_, mi, si) in zip(rows_f, rows_i):
                comb = float(np.hypot(sf, si))
                fh.write(f"{t!r},{mf!r},{sf!r},{mi!r},{si!r},"
                         f"{abs(mf - mi)!r},{comb!r}\n")

    elif kind == "assumptions":
        sec = cfg.get("assumptions", {})
        conditions = sec.get("conditions", ["A3", "A4"])
        sampler = models.SamplerConfig(
            radii=tuple(sec.get("radii", (0.5, 1.0, 2.0, 4.0))),
            points_per_radius=int(sec.get("points_per_radius", 64)),
            ensemble_size=int(sec.get("ensemble_size", 64)),
            constant_cap=float(sec.get("constant_cap", 1e8)))
        with open(results, "w", newline="") as fh:
            fh.write("condition,radius,constant,violations\n")
            for cond in conditions:
                rep = models.check_assumption(model, cond, sampler, seed)
                for radius, const in rep.per_radius.items():
                    nviol = sum(1 for v in rep.violations if v.radius == radius)
                    fh.write(f"{cond},{radius!r},{const!r},{nviol}\n")

    elif kind == "ldp":
        sec = cfg.get("ldp", {})
        sc = cfg.get("solver", {})
        grid = TimeGrid(float(sc.get("T", 1.0)), int(sc.get("n", 1000)))
        x0_sec = cfg.get("x0", {})
        x0 = np.broadcast_to(np.atleast_1d(np.asarray(
            x0_sec.get("value", 0.0), dtype=float)), (model.d,))
        event = ldp.ExitEvent(delta=float(sec.get("delta", 0.5)),
                              side=sec.get("side", "upper"),
                              bridge=bool(sec.get("bridge", True)))
        est = ldp.small_noise_experiment(
            model, x0, grid, sec.get("epsilons", [0.1]),
            event, sec.get("trials", 10000), seed)
        if model.id == "brownian" and event.side == "upper" and event.delta > 0:
            est = dataclasses.replace(
                est, reference_rate=ldp.rate_function_hit_level(event.delta, grid.T))
        est.to_csv(results)
        if sec.get("plot", True):
            est.write_gnuplot(outdir / "plot.gp", "results.csv")

    elif kind == "spde":
        sec = cfg.get("spde", {})
        K = int(sec.get("K", 16))
        K_noise = int(sec.get("K_noise", 0))
        if "q" in sec:
            q = tuple(float(v) for v in sec["q"])
        else:
            q = tuple(float(sec.get("q_scale", 0.5)) / k for k in range(1, K_noise + 1))
        config = galerkin.SpdeConfig(
            K=K, r=float(sec.get("r", 2.0)),
            grid=TimeGrid(float(sec.get("T", 0.25)), int(sec.get("n", 100))),
            M=int(sec.get("M", 2)), seed=seed, K_noise=K_noise, q=q,
            inner_steps=int(sec.get("inner_steps", 1)))
        x0_sec = sec.get("x0", {})
        x0_kind = x0_sec.get("kind", "single_mode")
        if x0_kind == "single_mode":
            sampler = galerkin.field_x0_single_mode(
                k=int(x0_sec.get("mode", 1)),
                amplitude=float(x0_sec.get("amplitude", 1.0)))
        elif x0_kind == "smooth_random":
            sampler = galerkin.field_x0_smooth_random(
                scale=float(x0_sec.get("scale", 1.0)),
                decay=float(x0_sec.get("decay", 2.0)))
        else:
            raise ConfigError(f"unknown spde x0 kind {x0_kind!r}")
        paths = galerkin.spde_solve(config, sampler)
        report = galerkin.energy_report(paths, p=float(sec.get("p", 2.0)))
        with open(results, "w", newline="") as fh:
            fh.write("field,sup_h2,int_lr,sup_hp\n")
            for i in range(paths.M):
                fh.write(f"{i},{float(report.sup_h2[i])!r},"
                         f"{float(report.int_lr[i])!r},{float(report.sup_hp[i])!r}\n")
            fh.write(f"mean,{report.mean_sup_h2!r},{report.mean_int_lr!r},"
                     f"{report.mean_sup_hp!r}\n")

    elif kind == "holder":
        sc = _solver_config(cfg.get("solver", {}), seed)
        x0 = build_x0(cfg.get("x0", {}), model)
        pe = solvers.interacting_particles(model, sc, x0)
        sec = cfg.get("holder", {})
        lags = sec.get("lags")
        if lags is None:
            lags = [k * sc.grid.dt for k in (10, 18, 32, 56, 100, 178, 316)
                    if k <= sc.grid.n]
        table = solvers.holder_increment_stats(pe, float(sec.get("q", 2.0)), lags)
        with open(results, "w", newline="") as fh:
            fh.write("lag,avg\n")
            for lag, avg in table:
                fh.write(f"{float(lag)!r},{float(avg)!r}\n")

    else:
        raise ConfigError(f"unknown experiment {kind!r}; known: {EXPERIMENTS}")


def load_config(path, overrides=()) -> dict:
    try:
        with open(path, "rb") as fh:
            cfg = tomllib.load(fh)
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"config parse error: {exc}") from exc
    for item in overrides:
        key, value = _parse_override(item)
        _apply_override(cfg, key, value)
    _validate_keys(cfg, _SCHEMA)
    if "experiment" not in cfg:
        raise ConfigError("missing config key: experiment")
    if cfg["experiment"] not in EXPERIMENTS:
        raise ConfigError(f"unknown experiment {cfg['experiment']!r}; known: {EXPERIMENTS}")
    if "seed" not in cfg:
        raise ConfigError("missing config key: seed (runs must be reproducible; "
                          "no wall-clock default)")
    return cfg


def write_metadata(cfg: dict, outdir: FsPath) -> None:
    meta = dict(cfg)
    meta["meta"] = {"tool": "mvlab", "version": __version__,
                    "outdir": str(outdir)}
    with open(outdir / "metadata.toml", "w") as fh:
        _dump_toml(meta, fh)


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="mvlab", description="Run one mvlab experiment from a TOML config.")
    parser.add_argument("--config", required=True, help="path to the TOML config")
    parser.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                        help="dotted-key override applied after the file parse")
    parser.add_argument("--out", default=".", help="output directory")
    parser.add_argument("--threads", type=int, default=None,
                        help="advisory thread count (never changes results)")
    parser.add_argument("--seed", type=int, default=None, help="override the seed")
    args = parser.parse_args(argv)

    overrides = list(args.set)
    if args.seed is not None:
        overrides.append(f"seed={args.seed}")
    if args.threads is not None:
        overrides.append(f"threads={args.threads}")

    try:
        cfg = load_config(args.config, overrides)
    except (ConfigError, OSError) as exc:
        print(f"error: category=config: {exc}", file=sys.stderr)
        return 2

    outdir = FsPath(args.out)
    try:
        outdir.mkdir(parents=True, exist_ok=True)
        run_experiment(cfg, outdir)
        write_metadata(cfg, outdir)
    except ConfigError as exc:
        print(f"error: category=config: {exc}", file=sys.stderr)
        return 2
    except BlowUpError as exc:
        print(f"error: category=blowup: {exc}", file=sys.stderr)
        return 3
    except OSError as exc:
        print(f"error: category=io: {exc}", file=sys.stderr)
        return 4
    return 0


if __name__ == "__main__":
    sys.exit(main())
