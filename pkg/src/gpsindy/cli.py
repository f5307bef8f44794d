"""Command-line front end: simulate | fit | rollout | benchmark | summarize.

Runs are described by an INI file; ``--set section.key=value`` overrides
file values. Exit codes: 0 success, 2 configuration or input error,
3 numerical failure, 4 I/O error.
"""

from __future__ import annotations

import argparse
import configparser
import logging
import math
import sys
from dataclasses import replace
from pathlib import Path
from typing import Callable, Dict, List, Optional, Sequence

import numpy as np

from . import __version__
from .benchmodels import figure_eight_dataset, generate_dataset, get_system, sample_grid
from .errors import ConfigError, Divergence, GPSINDyError, ParseError
from .evalbench import (FrequencySweepConfig, NoiseSweepConfig, emit_report, load_report,
                        report_filename, run_frequency_sweep, run_noise_sweep, summarize,
                        trajectory_rmse)
from .funclib import LibrarySpec
from .gpsmooth import KernelInput, SmootherConfig
from .kernels import FAMILY_ORDER
from .sparsereg import AdmmConfig
from .sysid import METHODS, fit_method, load_model, rollout_model, save_model
from .trajdata import NoiseSpec, TrajectoryDataset, load_csv, save_csv, train_test_split

log = logging.getLogger("gpsindy")

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC, EXIT_IO = 0, 2, 3, 4


# --- config schema ---------------------------------------------------------------

def _bool(v: str) -> bool:
    s = v.strip().lower()
    if s in ("1", "true", "yes", "on"):
        return True
    if s in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"expected a boolean, got {v!r}")


def _floats(v: str) -> List[float]:
    return [float(x) for x in v.replace(",", " ").split()]


def _ints(v: str) -> List[int]:
    return [int(x) for x in v.replace(",", " ").split()]


def _words(v: str) -> List[str]:
    return [x for x in v.replace(",", " ").split()]


def _optional(parse: Callable) -> Callable:
    return lambda v: None if v.strip().lower() in ("", "none") else parse(v)


def _lambda(v: str):
    return None if v.strip().lower() in ("schedule", "cv", "auto") else float(v)


def _seeds(v: str) -> List[int]:
    vals = _ints(v)
    return list(range(vals[0])) if len(vals) == 1 else vals


# section -> key -> (parser, default, help). A default of None means "derived".
SCHEMA: Dict[str, Dict[str, tuple]] = {
    "data": {
        "system": (str, None, "lotka-volterra | unicycle | figure-eight"),
        "input": (_optional(str), None, "trajectory CSV to read instead of simulating"),
        "duration": (_optional(float), None, "simulated seconds (30; 22.85 for figure-eight)"),
        "dt": (_optional(float), None, "sampling interval in s (0.1; 1/rate_hz for figure-eight)"),
        "x0": (_optional(_floats), None, "initial state, space or comma separated"),
        "sigma": (float, 0.0, "measurement noise standard deviation"),
        "seed": (int, 0, "noise seed"),
        "noise_on_xdot": (_bool, True, "also corrupt simulated derivatives"),
        "train_fraction": (float, 0.8, "leading fraction of rows used for training"),
        "fd": (_bool, False, "fill missing derivatives by central differences"),
    },
    "library": {
        "poly_order": (int, None, "maximum monomial degree (0-3)"),
        "include_sin": (_bool, None, "sin of each state"),
        "include_cos": (_bool, None, "cos of each state"),
        "include_cross_trig_products": (_bool, None, "monomial x trig products"),
        "include_control": (_bool, None, "control columns and their sin/cos"),
    },
    "smoother": {
        "derivative_kernel_input": (KernelInput.parse, KernelInput.SMOOTHED_STATE,
                                    "time | state | control"),
        "candidate_families": (_words, [f.value for f in FAMILY_ORDER], "kernel families to try"),
        "restarts": (int, 2, "optimizer starts per kernel family"),
        "jitter_base": (float, 1e-10, "initial relative Cholesky jitter"),
        "max_fit_points": (_optional(int), None, "subsample size for hyperparameter fitting"),
        "standardize": (_optional(_bool), None, "smooth in standardized units (system default)"),
    },
    "solver": {
        "method": (str, "gpsindy", " | ".join(METHODS)),
        "lambda": (_lambda, 0.1, "LASSO weight, or 'schedule' for validation selection"),
        "normalize_columns": (_bool, False, "scale library columns to unit norm"),
        "rho": (float, 1.0, "starting ADMM penalty"),
        "adaptive_rho": (_bool, True, "rebalance the penalty from the residuals"),
        "relaxation": (float, 1.6, "ADMM over-relaxation weight in (0, 2)"),
        "abs_tol": (float, 1e-6, "ADMM absolute tolerance"),
        "rel_tol": (float, 1e-4, "ADMM relative tolerance"),
        "max_iter": (_optional(int), None, "ADMM iteration cap (10000; 2000 in frequency sweeps)"),
    },
    "benchmark": {
        "sweep": (str, "noise", "noise | frequency"),
        "methods": (_words, None, "methods to compare (noise: sindy gpsindy; frequency: all)"),
        "sigmas": (_floats, None, "noise levels (noise: 0.05..0.25; frequency: 0 0.1)"),
        "seeds": (_seeds, [0], "seed count N (0..N-1) or explicit list"),
        "freqs": (_floats, [50.0, 25.0, 10.0, 5.0], "frequency sweep rates in Hz"),
        "rollouts": (int, 45, "figure-eight runs in the frequency sweep"),
        "root_seed": (int, 0, "root of all derived seeds"),
        "timing": (_bool, False, "record wall time (makes reports nondeterministic)"),
    },
    "output": {
        "data": (_optional(str), None, "simulate: output CSV"),
        "model": (_optional(str), None, "fit: output model JSON"),
        "report_dir": (str, ".", "benchmark: directory for the report CSV"),
    },
}


def config_help() -> str:
    lines = ["config keys ([section] key = value; override with --set section.key=value):"]
    for section, keys in SCHEMA.items():
        lines.append(f"  [{section}]")
        for key, (_, default, text) in keys.items():
            d = "derived" if default is None else default
            if isinstance(d, list):
                d = " ".join(str(x) for x in d)
            lines.append(f"    {key:<28} {text} (default: {d})")
    return "\n".join(lines)


class RunConfig(dict):
    """Parsed configuration: ``cfg[section][key]`` with schema defaults filled in."""

    def get_value(self, section: str, key: str):
        return self[section][key]


def load_config(path: Optional[str], overrides: Sequence[str] = ()) -> RunConfig:
    raw: Dict[str, Dict[str, str]] = {s: {} for s in SCHEMA}
    if path is not None:
        parser = configparser.ConfigParser(interpolation=None)
        try:
            with open(path, encoding="utf-8") as fh:
                parser.read_file(fh)
        except configparser.Error as exc:
            raise ConfigError(f"{path}: {exc}") from exc
        for section in parser.sections():
            if section not in SCHEMA:
                raise ConfigError(f"unknown config section [{section}]")
            for key, value in parser.items(section):
                raw[section][key] = value
    for item in overrides:
        name, sep, value = item.partition("=")
        section, dot, key = name.strip().partition(".")
        if not sep or not dot:
            raise ConfigError(f"--set expects section.key=value, got {item!r}")
        if section not in SCHEMA:
            raise ConfigError(f"unknown config section [{section}]")
        raw[section][key.strip()] = value.strip()
    cfg = RunConfig()
    for section, keys in SCHEMA.items():
        unknown = sorted(set(raw[section]) - set(keys))
        if unknown:
            raise ConfigError(f"unknown key(s) in [{section}]: {', '.join(unknown)}")
        cfg[section] = {}
        for key, (parse, default, _) in keys.items():
            if key in raw[section]:
                try:
                    cfg[section][key] = parse(raw[section][key])
                except (ValueError, TypeError) as exc:
                    raise ConfigError(f"[{section}] {key}: {exc}") from exc
            else:
                cfg[section][key] = default
    _validate(cfg)
    return cfg


def _validate(cfg: RunConfig) -> None:
    d = cfg["data"]
    if d["system"] is not None:
        get_system(d["system"])  # raises ConfigError on unknown names
    if not 0 < d["train_fraction"] < 1:
        raise ConfigError("[data] train_fraction must lie in (0, 1)")
    if d["sigma"] < 0:
        raise ConfigError("[data] sigma must be >= 0")
    if cfg["solver"]["method"] not in METHODS:
        raise ConfigError(f"[solver] method must be one of {', '.join(METHODS)}")
    if cfg["benchmark"]["sweep"] not in ("noise", "frequency"):
        raise ConfigError("[benchmark] sweep must be 'noise' or 'frequency'")
    for m in cfg["benchmark"]["methods"] or ():
        if m not in METHODS:
            raise ConfigError(f"[benchmark] unknown method {m!r}")
    try:
        _smoother(cfg, None)
        _library(cfg, None, 0)
        _admm(cfg)
    except ConfigError:
        raise
    except (ValueError, TypeError) as exc:
        raise ConfigError(str(exc)) from exc


def _system(cfg):
    name = cfg["data"]["system"]
    return None if name is None else get_system(name)


def _library(cfg, system, m: int) -> LibrarySpec:
    base = system.library if system is not None else LibrarySpec(include_control=m > 0)
    over = {k: v for k, v in cfg["library"].items() if v is not None}
    return replace(base, **over)


def _smoother(cfg, system) -> SmootherConfig:
    s = cfg["smoother"]
    std = s["standardize"]
    if std is None:
        std = bool(system.standardize) if system is not None else False
    return SmootherConfig(derivative_kernel_input=s["derivative_kernel_input"],
                          candidate_families=tuple(s["candidate_families"]),
                          restarts=s["restarts"], jitter_base=s["jitter_base"],
                          max_fit_points=s["max_fit_points"], standardize=std)


def _admm(cfg, max_iter: int = 10_000) -> AdmmConfig:
    s = cfg["solver"]
    return AdmmConfig(rho=s["rho"], abs_tol=s["abs_tol"], rel_tol=s["rel_tol"],
                      max_iter=max_iter if s["max_iter"] is None else s["max_iter"],
                      adaptive_rho=s["adaptive_rho"],
                      relaxation=s["relaxation"])


# --- data acquisition --------------------------------------------------------------

def _simulate(cfg) -> TrajectoryDataset:
    d = cfg["data"]
    system = _system(cfg)
    if system is None:
        raise ConfigError("[data] system is required to simulate")
    noise = NoiseSpec(d["sigma"], d["seed"])
    if system.name == "figure-eight":
        duration = d["duration"] or 22.85
        rate = 1.0 / d["dt"] if d["dt"] else 50.0
        return figure_eight_dataset(duration=duration, rate_hz=rate, noise=noise)
    t = sample_grid(d["duration"] or 30.0, d["dt"] or 0.1)
    return generate_dataset(system, t, x0=d["x0"], noise=noise, noise_on_xdot=d["noise_on_xdot"])


def _dataset(cfg) -> TrajectoryDataset:
    path = cfg["data"]["input"]
    return load_csv(path) if path else _simulate(cfg)


# --- commands ------------------------------------------------------------------------

def cmd_simulate(cfg) -> int:
    data = _simulate(cfg)
    out = cfg["output"]["data"] or f"{_system(cfg).name}.csv"
    save_csv(data, out)
    cols = 1 + data.n * (2 if data.Xdot is not None else 1) + data.m
    print(f"wrote {out}: {data.r} rows x {cols} columns (n={data.n}, m={data.m})")
    return EXIT_OK


def cmd_fit(cfg) -> int:
    data = _dataset(cfg)
    if data.Xdot is None:
        if not cfg["data"]["fd"]:
            raise ConfigError("data has no derivative columns (dx1..dxn); rerun with --fd "
                              "to estimate them by central differences")
        data = data.with_derivatives()
    system = _system(cfg)
    lib = _library(cfg, system, data.m)
    train, val = train_test_split(data, cfg["data"]["train_fraction"])
    controls = None
    if system is not None and system.controls is not None and not cfg["data"]["input"]:
        controls = system.controls
    solver = cfg["solver"]
    res = fit_method(solver["method"], train, val, lib, _smoother(cfg, system), solver["lambda"],
                     _admm(cfg), solver["normalize_columns"], controls)
    model = res.model
    out = cfg["output"]["model"] or "model.json"
    save_model(model, out)
    print(f"method: {model.method}")
    for j, eq in enumerate(model.equations()):
        nnz = int(np.count_nonzero(np.abs(model.xi[:, j]) > 1e-6))
        lam = model.lambdas[j] if model.lambdas else float("nan")
        print(f"  column {j + 1}: lambda={lam:g} nnz={nnz}  {eq}")
    if model.smoother:
        print("kernels:")
        for kind in ("states", "derivatives"):
            fams = ", ".join(f["family"] for f in model.smoother[kind])
            print(f"  {kind}: {fams}")
    print(f"wrote {out}")
    return EXIT_OK


def cmd_rollout(args) -> int:
    model = load_model(args.model)
    data = load_csv(args.data)
    if data.n != model.state_dim:
        raise ConfigError(f"data has {data.n} states, model expects {model.state_dim}")
    start = int(math.floor(data.r * args.train_fraction)) if args.start is None else args.start
    if not 0 <= start < data.r:
        raise ConfigError(f"start row {start} outside the data (0..{data.r - 1})")
    stop = data.r
    if args.horizon is not None:
        if args.horizon < 1:
            raise ConfigError("--horizon must be >= 1")
        if start + args.horizon > data.r:
            log.warning("horizon %d exceeds the data; clipped to %d samples",
                        args.horizon, data.r - start)
        stop = min(data.r, start + args.horizon)
    seg = data.rows(slice(start, stop))
    if model.library.include_control and seg.U is None:
        raise ConfigError("model uses controls but the data has none")
    pred = rollout_model(model, seg.X[0], seg.t, seg.U)
    out = args.output or "predictions.csv"
    save_csv(TrajectoryDataset(t=seg.t, X=pred, U=seg.U), out)
    per_col = [trajectory_rmse(pred, seg.X, [j]) for j in range(seg.n)]
    print(f"rollout rows {start}..{stop - 1} ({seg.r} samples) -> {out}")
    for j, v in enumerate(per_col):
        print(f"  rmse x{j + 1}: {v:.6g}")
    print(f"  rmse all: {trajectory_rmse(pred, seg.X):.6g}")
    return EXIT_OK


def cmd_benchmark(cfg, progress=None) -> int:
    b = cfg["benchmark"]
    system = _system(cfg)
    solver = cfg["solver"]
    if b["sweep"] == "noise":
        if system is None:
            raise ConfigError("[data] system is required for a noise sweep")
        methods = b["methods"] or ["sindy", "gpsindy"]
        sigmas = b["sigmas"] or [0.05, 0.10, 0.15, 0.20, 0.25]
        d = cfg["data"]
        sweep_cfg = NoiseSweepConfig(duration=d["duration"] or 30.0, dt=d["dt"] or 0.1,
                                     train_fraction=d["train_fraction"],
                                     lam=solver["lambda"], root_seed=b["root_seed"],
                                     noise_on_xdot=d["noise_on_xdot"],
                                     smoother=_smoother(cfg, system), admm=_admm(cfg),
                                     timing=b["timing"])
        report = run_noise_sweep(system, methods, sigmas, b["seeds"], sweep_cfg, progress)
    else:
        name = system.name if system is not None else "figure-eight"
        methods = b["methods"] or list(METHODS)
        sigmas = b["sigmas"] or [0.0, 0.1]
        d = cfg["data"]
        sweep_cfg = FrequencySweepConfig(duration=d["duration"] or 22.85,
                                         train_fraction=d["train_fraction"],
                                         root_seed=b["root_seed"], lam=solver["lambda"],
                                         normalize_columns=solver["normalize_columns"],
                                         smoother=_smoother(cfg, system),
                                         admm=_admm(cfg, FrequencySweepConfig.admm.max_iter),
                                         timing=b["timing"])
        report = run_frequency_sweep(None, methods, b["freqs"], sigmas, b["rollouts"], sweep_cfg,
                                     name, progress)
    out_dir = Path(cfg["output"]["report_dir"])
    out_dir.mkdir(parents=True, exist_ok=True)
    path = out_dir / report_filename(report.config["system"], b["sweep"], report.config)
    emit_report(report, path)
    print(f"wrote {path}: {len(report)} rows, {report.divergent_count} divergent")
    return EXIT_OK


def cmd_summarize(args) -> int:
    report = load_report(args.report)
    rows = summarize(report, args.metric)
    print("system,method,sigma,frequency_hz,count,divergent,mean,median,q25,q75")
    for r in rows:
        print(",".join([r["system"], r["method"], f"{r['sigma']:g}", f"{r['frequency_hz']:g}",
                        str(r["count"]), str(r["divergent"])]
                       + [f"{r[k]:.6g}" for k in ("mean", "median", "q25", "q75")]))
    return EXIT_OK


# --- entry point ---------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    fmt = argparse.RawDescriptionHelpFormatter
    parser = argparse.ArgumentParser(prog="gpsindy", description=__doc__, epilog=config_help(),
                                     formatter_class=fmt)
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="count", default=0)
    sub = parser.add_subparsers(dest="command", required=True)

    def with_config(p):
        p.add_argument("config", nargs="?", help="INI configuration file")
        p.add_argument("--set", action="append", default=[], metavar="SECTION.KEY=VALUE",
                       help="override a config value (repeatable)")
        return p

    p = with_config(sub.add_parser("simulate", help="simulate a benchmark system to CSV",
                                   epilog=config_help(), formatter_class=fmt))
    p.add_argument("-o", "--output", help="output CSV (overrides [output] data)")

    p = with_config(sub.add_parser("fit", help="learn a model from data",
                                   epilog=config_help(), formatter_class=fmt))
    p.add_argument("--fd", action="store_true", help="difference states when Xdot is missing")
    p.add_argument("-o", "--output", help="output model JSON (overrides [output] model)")

    p = sub.add_parser("rollout", help="integrate a model over the held-out data")
    p.add_argument("--model", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--horizon", type=int, help="number of samples to predict")
    p.add_argument("--start", type=int, help="first row (default: first validation row)")
    p.add_argument("--train-fraction", type=float, default=0.8)
    p.add_argument("-o", "--output", help="predicted trajectory CSV")

    p = with_config(sub.add_parser("benchmark", help="run a noise or frequency sweep",
                                   epilog=config_help(), formatter_class=fmt))

    p = sub.add_parser("summarize", help="quantile table of a report CSV")
    p.add_argument("report")
    p.add_argument("--metric", default="traj_rmse", choices=["traj_rmse", "coeff_mse", "log_rmse"])
    return parser


def _run(args) -> int:
    if args.command in ("simulate", "fit", "benchmark"):
        overrides = list(args.set)
        if args.command == "fit" and args.fd:
            overrides.append("data.fd=true")
        if getattr(args, "output", None):
            key = {"simulate": "data", "fit": "model"}[args.command]
            overrides.append(f"output.{key}={args.output}")
        cfg = load_config(args.config, overrides)
        if args.command == "simulate":
            return cmd_simulate(cfg)
        if args.command == "fit":
            return cmd_fit(cfg)
        progress = (lambda msg: log.info("%s", msg)) if args.verbose else None
        return cmd_benchmark(cfg, progress)
    if args.command == "rollout":
        return cmd_rollout(args)
    return cmd_summarize(args)


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s: %(message)s")
    try:
        return _run(args)
    except Divergence as exc:
        print(f"error: rollout diverged at step {exc.step}", file=sys.stderr)
        return EXIT_NUMERIC
    except ParseError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO
    except ArithmeticError as exc:
        print(f"error: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (GPSINDyError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
