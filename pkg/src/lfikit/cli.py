"""Command-line front end: simulate, train, estimate, benchmark, bootstrap, presets.

Every command is reproducible from (config, seed): output files carry no
timestamps and rerunning with the same inputs rewrites byte-identical
bytes, for any ``--jobs`` value. Exit codes: 1 usage, 2 configuration,
3 runtime failure.
"""

import argparse
import json
import os
import sys

import numpy as np

from .bootstrap import bootstrap_interval, bootstrap_region, bootstrap_run
from .config import ExperimentConfig, PRESETS, preset_config
from .errors import (
    BundleFormatError,
    ConfigError,
    InvalidArgumentError,
    LfiError,
    SchemaMismatchError,
)
from .estimators import (
    FittedReconstructionMap,
    abc_estimate,
    estimate,
    fit_rm,
    fit_rmdr,
    sle_estimate,
)
from .evaluation import (
    AbcEstimator,
    MapEstimator,
    RmdrloEstimator,
    SleEstimator,
    run_benchmark,
)
from .rng import RngStream
from .simulators import Dataset
from .toys import GaussianMeanModel

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_CONFIG = 2
EXIT_RUNTIME = 3

_SIM_STREAM = 0xC517
_BOOT_POINT_STREAM = 0xC001

_CONFIG_ERRORS = (ConfigError, BundleFormatError, SchemaMismatchError, InvalidArgumentError)


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


# ---------------------------------------------------------------------------
# dataset CSV convention: header row, index column (t or n), series columns
# ---------------------------------------------------------------------------


def write_dataset_csv(data: Dataset, path, index_name="t"):
    grid = (
        data.time_grid
        if data.time_grid is not None
        else np.arange(1, data.length + 1, dtype=float)
    )
    names = data.names
    with open(path, "w", newline="") as fh:
        fh.write(index_name + "," + ",".join(names) + "\n")
        for i in range(data.length):
            row = [repr(float(grid[i]))] + [repr(float(data.series[n][i])) for n in names]
            fh.write(",".join(row) + "\n")


def read_dataset_csv(path) -> Dataset:
    try:
        with open(path) as fh:
            lines = fh.read().splitlines()
    except OSError as exc:
        raise ConfigError(f"cannot read dataset: {exc}") from None
    if not lines:
        raise ConfigError(f"{path}: empty dataset file")
    header = [h.strip() for h in lines[0].split(",")]
    if len(header) < 2:
        raise ConfigError(f"{path}: line 1: need an index column and at least one series")
    columns = [[] for _ in header]
    for lineno, line in enumerate(lines[1:], start=2):
        if not line.strip():
            continue
        parts = line.split(",")
        if len(parts) != len(header):
            raise ConfigError(f"{path}: line {lineno}: expected {len(header)} fields")
        try:
            for col, part in zip(columns, parts):
                col.append(float(part))
        except ValueError:
            raise ConfigError(f"{path}: line {lineno}: non-numeric value") from None
    if not columns[0]:
        raise ConfigError(f"{path}: no data rows")
    series = {name: np.asarray(col) for name, col in zip(header[1:], columns[1:])}
    return Dataset(series, time_grid=np.asarray(columns[0]))


# ---------------------------------------------------------------------------
# command implementations
# ---------------------------------------------------------------------------


def _config_from_args(args) -> ExperimentConfig:
    if getattr(args, "preset", None):
        return preset_config(args.preset)
    if getattr(args, "config", None):
        return ExperimentConfig.from_file(args.config)
    return ExperimentConfig({})


def _parse_theta(raw):
    try:
        theta = np.array([float(v) for v in raw.split(",") if v.strip() != ""])
    except ValueError:
        raise UsageError(f"--theta must be comma-separated numbers, got {raw!r}") from None
    if theta.shape[0] == 0:
        raise UsageError("--theta is empty")
    return theta


def cmd_simulate(args) -> int:
    if args.reps < 1:
        raise UsageError("--reps must be >= 1")
    cfg = _config_from_args(args)
    model = cfg.build_model()
    theta = _parse_theta(args.theta)
    out = cfg.outdir(args.out)
    os.makedirs(out, exist_ok=True)
    root = RngStream(cfg.seed(), _SIM_STREAM)
    for i in range(args.reps):
        data = model.simulate(theta, root.substream(i))
        write_dataset_csv(
            data,
            os.path.join(out, f"sim_{i}.csv"),
            index_name=getattr(model, "index_name", "t"),
        )
    print(f"wrote {args.reps} dataset(s) to {out}")
    return EXIT_OK


def _train_map(cfg, method, n_override=None):
    model = cfg.build_model()
    design = cfg.design(model)
    train_cfg = cfg.train_config()
    n = cfg.train_n(n_override)
    jobs = cfg.jobs()
    if method == "rm":
        return model, fit_rm(model, design, n, train_cfg, jobs=jobs)
    pipeline = cfg.build_pipeline()
    if pipeline is None:
        raise ConfigError("rmdr training needs a summary pipeline ([pipeline] name)")
    return model, fit_rmdr(model, pipeline, design, n, train_cfg, jobs=jobs)


def cmd_train(args) -> int:
    cfg = _config_from_args(args)
    out = cfg.outdir(args.out)
    os.makedirs(out, exist_ok=True)
    _, (fitted, history) = _train_map(cfg, args.method, args.n)
    bundle_path = os.path.join(out, f"model_{args.method}.lfim")
    fitted.save(bundle_path)
    history.to_csv(os.path.join(out, "history.csv"))
    final_val = history.rows[-1][2]
    best_val = min(r[2] for r in history.rows)
    print(f"saved {bundle_path}")
    print(f"final validation loss {final_val!r} (best {best_val!r} at epoch {history.best_epoch})")
    return EXIT_OK


def cmd_estimate(args) -> int:
    cfg = _config_from_args(args)
    data = read_dataset_csv(args.data)
    diagnostics = {}
    if args.bundle:
        fitted = FittedReconstructionMap.load(args.bundle)
        theta = estimate(fitted, data, clamp=args.clamp)
        name = "rmdr" if fitted.is_dimension_reduced else "rm"
    elif args.estimator in ("sle", "abc"):
        model = cfg.build_model()
        design = cfg.design(model)
        pipeline = cfg.build_pipeline()
        if pipeline is None:
            raise ConfigError(f"{args.estimator} needs a summary pipeline")
        name = args.estimator
        if name == "sle":
            theta = sle_estimate(data, model, pipeline, design, cfg.sle_config())
        else:
            theta, diagnostics = abc_estimate(data, model, pipeline, design, cfg.abc_config())
    else:
        raise UsageError("estimate needs --bundle or --estimator {sle,abc}")
    record = {
        "estimator": name,
        "theta_hat": [float(v) for v in theta],
        "diagnostics": diagnostics,
        "seeds": {"seed": cfg.seed()},
    }
    text = json.dumps(record, indent=2, sort_keys=True) + "\n"
    if args.out:
        with open(args.out, "w") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)
    return EXIT_OK


def cmd_benchmark(args) -> int:
    cfg = _config_from_args(args)
    names = cfg.estimator_names()
    model = cfg.build_model()
    design = cfg.design(model)
    grid = cfg.grid(model, design)
    out = cfg.outdir(args.out)

    estimators = {}
    fitted_rmdr = None
    if "rm" in names:
        _, (fitted, _) = _train_map(cfg, "rm")
        estimators["rm"] = MapEstimator(fitted)
    if "rmdr" in names or "rmdrlo" in names:
        _, (fitted_rmdr, _) = _train_map(cfg, "rmdr")
    if "rmdr" in names:
        estimators["rmdr"] = MapEstimator(fitted_rmdr)
    if "sle" in names or "abc" in names:
        pipeline = cfg.build_pipeline()
        if pipeline is None:
            raise ConfigError("sle/abc benchmarking needs a summary pipeline")
        if "sle" in names:
            estimators["sle"] = SleEstimator(model, pipeline, design, cfg.sle_config())
        if "abc" in names:
            estimators["abc"] = AbcEstimator(model, pipeline, design, cfg.abc_config())
    if "rmdrlo" in names:
        if model.name != "fn":
            raise ConfigError("rmdrlo benchmarking is defined for the fn model")
        estimators["rmdrlo"] = RmdrloEstimator(
            fitted_rmdr,
            model,
            budget=cfg.rmdrlo_budget(),
            seed=cfg.seed() + 4,
            noise_sd=cfg.rmdrlo_noise_sd(),
        )

    reports = run_benchmark(model, estimators, grid, out_dir=out, jobs=cfg.jobs())
    for name in sorted(reports):
        rep = reports[name]
        flag = "" if rep.valid else " [INVALID]"
        print(f"{name}: IBIAS2={rep.ibias2:.4g} IVAR={rep.ivar:.4g} IMSE={rep.imse:.4g}{flag}")
    print(f"reports written to {out}")
    return EXIT_OK


def _self_test_bootstrap(args, cfg) -> int:
    """Coverage harness: nominal 90% intervals on the Gaussian location toy."""
    model = GaussianMeanModel(m=100, sd=1.0, lo=-5.0, hi=5.0)

    def mean_estimator(data):
        return np.array([data.series["y"].mean()])

    theta_true = np.array([0.3])
    outer = 200
    b = args.b or 200
    alpha = 0.1
    root = RngStream(cfg.seed(), _BOOT_POINT_STREAM)
    hits = 0
    for rep in range(outer):
        data = model.simulate(theta_true, root.substream(rep))
        theta_hat = mean_estimator(data)
        result = bootstrap_run(mean_estimator, model, theta_hat, b, seed=cfg.seed() + rep)
        lo, hi = bootstrap_interval(result, 0, alpha)
        if lo <= theta_true[0] <= hi:
            hits += 1
    coverage = hits / outer
    print(f"self-test coverage of nominal 90% intervals: {coverage:.3f} ({hits}/{outer})")
    if not 0.85 <= coverage <= 0.95:
        print("self-test FAILED: coverage outside [0.85, 0.95]")
        return EXIT_RUNTIME
    return EXIT_OK


def cmd_bootstrap(args) -> int:
    cfg = _config_from_args(args)
    if args.self_test:
        return _self_test_bootstrap(args, cfg)
    if not args.data:
        raise UsageError("bootstrap needs --data (or --self-test)")
    data = read_dataset_csv(args.data)
    model = cfg.build_model()
    design = cfg.design(model)
    b = cfg.bootstrap_b(args.b)
    alpha = cfg.bootstrap_alpha(args.alpha)

    if args.bundle:
        fitted = FittedReconstructionMap.load(args.bundle)
        estimator = MapEstimator(fitted)
    elif args.estimator == "sle":
        pipeline = cfg.build_pipeline()
        estimator = SleEstimator(model, pipeline, design, cfg.sle_config())
    elif args.estimator == "abc":
        pipeline = cfg.build_pipeline()
        estimator = AbcEstimator(model, pipeline, design, cfg.abc_config())
    else:
        raise UsageError("bootstrap needs --bundle or --estimator {sle,abc}")

    theta_hat = np.asarray(estimator(data), dtype=float)
    result = bootstrap_run(
        estimator,
        model,
        theta_hat,
        b,
        seed=cfg.seed() + 5,
        design=design,
        jobs=cfg.jobs(),
        drop_failures=True,
    )
    if result.failures > 0.1 * b:
        print(f"bootstrap: {result.failures} of {b} replicates failed", file=sys.stderr)
        return EXIT_RUNTIME
    out = cfg.outdir(args.out)
    os.makedirs(out, exist_ok=True)
    result.to_csv(os.path.join(out, "bootstrap.csv"))
    d = result.estimates.shape[1]
    lines = [f"point estimate: {[float(v) for v in result.point]}"]
    if result.clamped:
        lines.append("note: point estimate clamped into the design box")
    lines.append(f"replicates: {result.estimates.shape[0]} (failures: {result.failures})")
    for j in range(d):
        lo, hi = bootstrap_interval(result, j, alpha)
        lines.append(f"theta_{j}: {100 * (1 - alpha):g}% interval ({lo!r}, {hi!r})")
    if cfg.bootstrap_region() or args.region:
        region = bootstrap_region(result, alpha)
        lines.append(f"region center: {[float(v) for v in region.center]}")
        lines.append(f"region radius2 (chi2_{d} at {1 - alpha:g}): {region.radius2!r}")
    report = "\n".join(lines) + "\n"
    with open(os.path.join(out, "intervals.txt"), "w") as fh:
        fh.write(report)
    sys.stdout.write(report)
    return EXIT_OK


def cmd_presets(args) -> int:
    if args.show:
        sys.stdout.write(preset_config(args.show).canonical_text())
        return EXIT_OK
    if args.write:
        if not args.out:
            raise UsageError("presets --write needs --out FILE")
        preset_config(args.write).write(args.out)
        print(f"wrote {args.out}")
        return EXIT_OK
    for name in sorted(PRESETS):
        print(name)
    return EXIT_OK


# ---------------------------------------------------------------------------
# entry point
# ---------------------------------------------------------------------------


def _build_parser() -> _Parser:
    parser = _Parser(prog="lfikit", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    def add_common(p):
        p.add_argument("--config", help="experiment config file (INI)")
        p.add_argument("--preset", help="named preset instead of a config file")
        p.add_argument("--out", help="output directory or file")

    p_sim = sub.add_parser("simulate", help="write replicate datasets as CSV")
    add_common(p_sim)
    p_sim.add_argument("--theta", required=True, help="comma-separated parameter values")
    p_sim.add_argument("--reps", type=int, default=1, help="number of datasets")
    p_sim.set_defaults(func=cmd_simulate)

    p_train = sub.add_parser("train", help="fit a reconstruction map")
    add_common(p_train)
    p_train.add_argument("--method", choices=("rm", "rmdr"), default="rmdr")
    p_train.add_argument("--n", type=int, help="training pairs (overrides config)")
    p_train.set_defaults(func=cmd_train)

    p_est = sub.add_parser("estimate", help="estimate parameters from a dataset CSV")
    add_common(p_est)
    p_est.add_argument("--data", required=True, help="dataset CSV")
    p_est.add_argument("--bundle", help="trained model bundle (.lfim)")
    p_est.add_argument("--estimator", choices=("sle", "abc"), help="simulation-based estimator")
    p_est.add_argument("--clamp", action="store_true", help="clamp the estimate into the box")
    p_est.set_defaults(func=cmd_estimate)

    p_bench = sub.add_parser("benchmark", help="paired Monte Carlo risk benchmark")
    add_common(p_bench)
    p_bench.set_defaults(func=cmd_benchmark)

    p_boot = sub.add_parser("bootstrap", help="parametric bootstrap intervals/region")
    add_common(p_boot)
    p_boot.add_argument("--data", help="dataset CSV")
    p_boot.add_argument("--bundle", help="trained model bundle (.lfim)")
    p_boot.add_argument("--estimator", choices=("sle", "abc"))
    p_boot.add_argument("--b", type=int, help="bootstrap replicates")
    p_boot.add_argument("--alpha", type=float, help="interval level alpha")
    p_boot.add_argument("--region", action="store_true", help="also report the region")
    p_boot.add_argument(
        "--self-test", action="store_true", help="run the interval coverage harness"
    )
    p_boot.set_defaults(func=cmd_bootstrap)

    p_pre = sub.add_parser("presets", help="list or export experiment presets")
    p_pre.add_argument("--show", help="print a preset's canonical config")
    p_pre.add_argument("--write", help="write a preset to --out")
    p_pre.add_argument("--out", help="output file for --write")
    p_pre.set_defaults(func=cmd_presets)

    return parser


def main(argv=None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
        return args.func(args)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except _CONFIG_ERRORS as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except LfiError as exc:
        print(f"runtime error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
