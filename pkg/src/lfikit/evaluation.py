"""Monte Carlo risk approximation with bias/variance decomposition.

Risk at one parameter point is approximated over L replicate datasets; the
integrated criteria average over Q test points. Benchmarks are paired: every
estimator sees exactly the same replicate datasets, cell by cell.
"""

import hashlib
import json
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .errors import BenchmarkError, InvalidArgumentError, LfiError
from .rng import RngStream
from .simulators import RETRY_CAP, DesignBox, design_to_theta
from . import estimators as est

_GRID_STREAM = 0x6E1D


@dataclass
class TestGrid:
    """Q test parameter points, each replicated L times from substream (q, l)."""

    theta_points: np.ndarray
    replicates: int
    mode: str
    seed: int

    def __post_init__(self):
        self.theta_points = np.atleast_2d(np.asarray(self.theta_points, dtype=float))
        if self.theta_points.shape[0] < 1 or self.replicates < 1:
            raise InvalidArgumentError("need Q >= 1 points and L >= 1 replicates")
        if self.mode not in ("uniform-sample", "explicit-grid"):
            raise InvalidArgumentError(f"unknown grid mode {self.mode!r}")

    @property
    def q(self):
        return self.theta_points.shape[0]

    @staticmethod
    def uniform(model_name: str, design: DesignBox, q: int, replicates: int, seed: int):
        root = RngStream(seed, _GRID_STREAM)
        points = [
            design_to_theta(model_name, design.sample(root.substream(10_000 + i)))
            for i in range(q)
        ]
        return TestGrid(np.asarray(points), replicates, "uniform-sample", seed)

    @staticmethod
    def explicit(points, replicates: int, seed: int):
        return TestGrid(np.asarray(points, dtype=float), replicates, "explicit-grid", seed)


def fn_grid(stride: int = 1) -> np.ndarray:
    """The 41x41 evaluation lattice (-0.2 + 0.03j, -0.4 + 0.04l), subsampled."""
    j = np.arange(0, 41, stride)
    t1 = -0.2 + 0.03 * j
    t2 = -0.4 + 0.04 * j
    return np.array([(a, b) for a in t1 for b in t2])


def mse_decompose(theta_q, estimates):
    """Squared bias, variance, and MSE of estimates against one truth."""
    theta_q = np.asarray(theta_q, dtype=float)
    estimates = np.atleast_2d(np.asarray(estimates, dtype=float))
    if estimates.shape[0] < 1 or estimates.shape[1] != theta_q.shape[0]:
        raise InvalidArgumentError("estimates must be (L, d) matching theta")
    diffs = estimates - theta_q
    mse = float(np.mean(np.sum(diffs * diffs, axis=1)))
    center = estimates.mean(axis=0)
    bias = center - theta_q
    bias2 = float(bias @ bias)
    spread = estimates - center
    var = float(np.mean(np.sum(spread * spread, axis=1)))
    return bias2, var, mse


@dataclass
class EvalReport:
    """Per-point and integrated risk for one estimator on one grid."""

    estimator: str
    theta_points: np.ndarray
    bias2: np.ndarray
    var: np.ndarray
    mse: np.ndarray
    n_ok: np.ndarray
    ibias2: float
    ivar: float
    imse: float
    raw_estimates: np.ndarray  # (Q, L, d); NaN rows mark failed cells
    valid: bool = True
    notes: list = field(default_factory=list)
    config_digest: str = ""


def imse_decompose(grid: TestGrid, all_estimates, estimator: str = "estimator") -> EvalReport:
    """Integrated metrics from a complete (Q, L, d) estimate array."""
    all_estimates = np.asarray(all_estimates, dtype=float)
    q, l = grid.q, grid.replicates
    if all_estimates.shape != (q, l, grid.theta_points.shape[1]):
        raise InvalidArgumentError(
            f"estimates must have shape {(q, l, grid.theta_points.shape[1])}"
        )
    missing = [
        (qi, li)
        for qi in range(q)
        for li in range(l)
        if not np.isfinite(all_estimates[qi, li]).all()
    ]
    if missing:
        raise BenchmarkError(f"missing grid cells: {missing[:20]}")
    return _assemble_report(estimator, grid, all_estimates, config_digest="")


def _assemble_report(name, grid, raw, config_digest="", notes=None, valid=True):
    q = grid.q
    bias2 = np.empty(q)
    var = np.empty(q)
    mse = np.empty(q)
    n_ok = np.empty(q, dtype=int)
    for qi in range(q):
        rows = raw[qi]
        ok = np.isfinite(rows).all(axis=1)
        n_ok[qi] = int(ok.sum())
        if n_ok[qi] == 0:
            bias2[qi] = var[qi] = mse[qi] = np.nan
            continue
        bias2[qi], var[qi], mse[qi] = mse_decompose(grid.theta_points[qi], rows[ok])
    usable = n_ok > 0
    ibias2 = float(np.mean(bias2[usable]))
    ivar = float(np.mean(var[usable]))
    return EvalReport(
        estimator=name,
        theta_points=grid.theta_points,
        bias2=bias2,
        var=var,
        mse=mse,
        n_ok=n_ok,
        ibias2=ibias2,
        ivar=ivar,
        imse=ibias2 + ivar,
        raw_estimates=raw,
        valid=valid,
        notes=notes or [],
        config_digest=config_digest,
    )


# ---------------------------------------------------------------------------
# picklable estimator adapters for benchmarking and the CLI
# ---------------------------------------------------------------------------


@dataclass
class MapEstimator:
    fitted: est.FittedReconstructionMap
    clamp: bool = False

    def __call__(self, data):
        return est.estimate(self.fitted, data, clamp=self.clamp)


@dataclass
class SleEstimator:
    model: object
    pipeline: object
    design: DesignBox
    cfg: est.SleConfig

    def __call__(self, data):
        return est.sle_estimate(data, self.model, self.pipeline, self.design, self.cfg)


@dataclass
class AbcEstimator:
    model: object
    pipeline: object
    design: DesignBox
    cfg: est.AbcConfig

    def __call__(self, data):
        theta, _ = est.abc_estimate(data, self.model, self.pipeline, self.design, self.cfg)
        return theta


@dataclass
class RmdrloEstimator:
    fitted: est.FittedReconstructionMap
    model: object
    budget: int | None = None
    seed: int = 0
    noise_sd: float = 0.06

    def __call__(self, data):
        loglik = est.fn_gaussian_loglik(self.model, data, noise_sd=self.noise_sd)
        from .optim import ObjectiveSpec

        spec = ObjectiveSpec(
            objective=None, bounds=self.fitted.design, budget=self.budget, seed=self.seed
        )
        return est.rmdrlo_estimate(data, self.fitted, loglik, spec)


# ---------------------------------------------------------------------------
# benchmark orchestration
# ---------------------------------------------------------------------------


def _simulate_cell(model, theta, grid_seed, q, l):
    root = RngStream(grid_seed)
    last = None
    for attempt in range(RETRY_CAP + 1):
        rng = root.substream(q, l, attempt)
        try:
            return model.simulate(theta, rng)
        except LfiError as exc:
            last = exc
    raise BenchmarkError(f"cell ({q},{l}) failed {RETRY_CAP + 1} times: {last}")


def _dataset_digest(data):
    h = hashlib.sha256()
    for name in data.names:
        h.update(name.encode())
        h.update(np.ascontiguousarray(data.series[name], dtype="<f8").tobytes())
    return h.hexdigest()[:16]


def _run_cell(args):
    model, grid_theta, grid_seed, q, l, estimator_items = args
    data = _simulate_cell(model, grid_theta, grid_seed, q, l)
    digest = _dataset_digest(data)
    results = {}
    failures = {}
    for name, estimator in estimator_items:
        try:
            results[name] = np.asarray(estimator(data), dtype=float)
        except LfiError as exc:
            failures[name] = f"{type(exc).__name__}: {exc}"
    return q, l, digest, results, failures


def run_benchmark(model, estimator_map, grid: TestGrid, out_dir=None, jobs: int = 1):
    """Paired-design benchmark: every estimator sees the same (q, l) dataset.

    Returns {estimator name: EvalReport} and, when ``out_dir`` is given,
    writes per_theta.csv, integrated.csv, and manifest.json. Estimators
    failing on more than 5% of cells are marked invalid.
    """
    if not estimator_map:
        raise InvalidArgumentError("need at least one estimator")
    names = list(estimator_map)
    q_count, l_count = grid.q, grid.replicates
    d = grid.theta_points.shape[1]
    raw = {name: np.full((q_count, l_count, d), np.nan) for name in names}
    failure_notes = {name: [] for name in names}
    digests = np.empty((q_count, l_count), dtype=object)

    tasks = [
        (model, grid.theta_points[qi], grid.seed, qi, li, list(estimator_map.items()))
        for qi in range(q_count)
        for li in range(l_count)
    ]
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            outcomes = list(pool.map(_run_cell, tasks, chunksize=1))
    else:
        outcomes = [_run_cell(t) for t in tasks]

    for qi, li, digest, results, failures in outcomes:
        digests[qi, li] = digest
        for name in names:
            if name in results:
                raw[name][qi, li] = results[name]
            else:
                failure_notes[name].append(f"({qi},{li}): {failures[name]}")

    config_digest = hashlib.sha256(
        json.dumps(
            {
                "model": model.name,
                "grid_seed": grid.seed,
                "q": q_count,
                "l": l_count,
                "mode": grid.mode,
                "estimators": names,
            },
            sort_keys=True,
        ).encode()
    ).hexdigest()[:16]

    reports = {}
    for name in names:
        n_fail = len(failure_notes[name])
        valid = n_fail <= 0.05 * q_count * l_count
        notes = list(failure_notes[name])
        if not valid:
            notes.append(f"invalid: {n_fail} of {q_count * l_count} cells failed (> 5%)")
        reports[name] = _assemble_report(
            name, grid, raw[name], config_digest=config_digest, notes=notes, valid=valid
        )

    if out_dir is not None:
        os.makedirs(out_dir, exist_ok=True)
        write_reports(reports, grid, out_dir, digests)
    return reports


def write_reports(reports, grid, out_dir, digests=None):
    d = grid.theta_points.shape[1]
    theta_cols = ",".join(f"theta_{i}" for i in range(d))
    with open(os.path.join(out_dir, "per_theta.csv"), "w", newline="") as fh:
        fh.write(f"estimator,q,{theta_cols},bias2,var,mse,n_ok\n")
        for name in sorted(reports):
            rep = reports[name]
            for qi in range(grid.q):
                theta = ",".join(repr(v) for v in grid.theta_points[qi])
                fh.write(
                    f"{name},{qi},{theta},{rep.bias2[qi]!r},{rep.var[qi]!r},"
                    f"{rep.mse[qi]!r},{rep.n_ok[qi]}\n"
                )
    with open(os.path.join(out_dir, "integrated.csv"), "w", newline="") as fh:
        fh.write("estimator,IBIAS2,IVAR,IMSE\n")
        for name in sorted(reports):
            rep = reports[name]
            fh.write(f"{name},{rep.ibias2!r},{rep.ivar!r},{rep.imse!r}\n")
    manifest = {
        "grid": {
            "mode": grid.mode,
            "seed": grid.seed,
            "q": grid.q,
            "l": grid.replicates,
        },
        "estimators": {
            name: {"valid": rep.valid, "notes": rep.notes, "config": rep.config_digest}
            for name, rep in sorted(reports.items())
        },
    }
    if digests is not None:
        manifest["dataset_digests"] = [list(row) for row in digests]
    with open(os.path.join(out_dir, "manifest.json"), "w") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")
