"""Parametric bootstrap: simulate at the point estimate, re-estimate, repeat.

Intervals are component-wise empirical percentiles of the bootstrap
estimates; the ellipsoidal region uses the bootstrap mean and covariance
with a chi-squared radius computed by a Wilson-Hilferty start plus Newton
refinement on the regularized incomplete gamma CDF.
"""

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass

import numpy as np

from .errors import (
    DecompositionError,
    InvalidArgumentError,
    LfiError,
    RegionError,
    TrainingDataError,
)
from .linalg import AUTO_JITTER, cho_solve, cholesky
from .rng import RngStream
from .simulators import RETRY_CAP

_BOOT_STREAM = 0xB007


@dataclass
class BootstrapResult:
    estimates: np.ndarray  # (B, d)
    point: np.ndarray
    b: int
    seed: int
    clamped: bool = False
    failures: int = 0

    def __post_init__(self):
        self.estimates = np.atleast_2d(np.asarray(self.estimates, dtype=float))
        self.point = np.asarray(self.point, dtype=float)

    def to_csv(self, path):
        d = self.estimates.shape[1]
        with open(path, "w", newline="") as fh:
            fh.write("b," + ",".join(f"theta_{i}" for i in range(d)) + "\n")
            for i, row in enumerate(self.estimates):
                fh.write(f"{i}," + ",".join(repr(v) for v in row) + "\n")


def _one_replicate(args):
    model, theta, seed, index, estimator, drop_failures = args
    root = RngStream(seed, _BOOT_STREAM)
    last = None
    for attempt in range(RETRY_CAP + 1):
        rng = root.substream(index, attempt)
        try:
            data = model.simulate(theta, rng)
            return np.asarray(estimator(data), dtype=float)
        except LfiError as exc:
            last = exc
    if drop_failures:
        return None
    raise TrainingDataError(f"bootstrap replicate {index} kept failing: {last}")


def bootstrap_run(
    estimator,
    model,
    theta_hat,
    b: int,
    seed: int,
    design=None,
    jobs: int = 1,
    drop_failures: bool = False,
):
    """B independent simulate-then-estimate cycles at theta_hat.

    Replicates that keep failing past the retry cap either abort the run or,
    with ``drop_failures``, are dropped and counted in ``result.failures``.
    """
    if b < 1:
        raise InvalidArgumentError("b must be >= 1")
    theta_hat = np.asarray(theta_hat, dtype=float)
    clamped = False
    if design is not None:
        from .simulators import design_to_theta, theta_to_design

        coords = theta_to_design(model.name, theta_hat)
        if not design.contains(coords):
            coords = design.clamp(coords)
            theta_hat = design_to_theta(model.name, coords)
            clamped = True
    tasks = [(model, theta_hat, int(seed), i, estimator, drop_failures) for i in range(int(b))]
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            rows = list(pool.map(_one_replicate, tasks, chunksize=8))
    else:
        rows = [_one_replicate(t) for t in tasks]
    kept = [r for r in rows if r is not None]
    failures = len(rows) - len(kept)
    if not kept:
        raise TrainingDataError("every bootstrap replicate failed")
    return BootstrapResult(
        estimates=np.asarray(kept),
        point=theta_hat,
        b=int(b),
        seed=int(seed),
        clamped=clamped,
        failures=failures,
    )


def _percentile(column, level):
    """Linear interpolation at level * (B - 1) on the sorted column."""
    return float(np.quantile(column, level))


def bootstrap_interval(result: BootstrapResult, j: int, alpha: float):
    """Empirical (alpha/2, 1 - alpha/2) percentile interval for component j."""
    if not 0.0 < alpha < 1.0:
        raise InvalidArgumentError(f"alpha must be in (0, 1), got {alpha}")
    if result.estimates.shape[0] < 2:
        raise InvalidArgumentError("interval needs at least B = 2 bootstrap estimates")
    column = result.estimates[:, j]
    return _percentile(column, alpha / 2.0), _percentile(column, 1.0 - alpha / 2.0)


@dataclass
class ConfidenceRegion:
    center: np.ndarray
    covariance: np.ndarray
    radius2: float
    _chol: np.ndarray

    def contains(self, theta) -> bool:
        z = np.linalg.solve(self._chol, np.asarray(theta, dtype=float) - self.center)
        return float(z @ z) <= self.radius2

    def mahalanobis2(self, theta) -> float:
        diff = np.asarray(theta, dtype=float) - self.center
        return float(diff @ cho_solve(self._chol, diff))


def bootstrap_region(result: BootstrapResult, alpha: float) -> ConfidenceRegion:
    """Ellipsoid {theta : (mean - theta)' Sigma^-1 (mean - theta) <= chi2_d(1-alpha)}."""
    if not 0.0 < alpha < 1.0:
        raise InvalidArgumentError(f"alpha must be in (0, 1), got {alpha}")
    b, d = result.estimates.shape
    if b <= d:
        raise RegionError(f"need B > d for a region; got B={b}, d={d}")
    center = result.estimates.mean(axis=0)
    spread = result.estimates - center
    cov = spread.T @ spread / (b - 1)
    try:
        chol = cholesky(cov, jitter=AUTO_JITTER)
    except DecompositionError:
        raise RegionError(
            "bootstrap covariance is singular even after jitter; increase B"
        ) from None
    return ConfidenceRegion(
        center=center,
        covariance=cov,
        radius2=chi2_quantile(1.0 - alpha, d),
        _chol=chol,
    )


# ---------------------------------------------------------------------------
# chi-squared quantiles without a special-functions dependency
# ---------------------------------------------------------------------------


def normal_quantile(p: float) -> float:
    """Acklam's rational approximation to the standard normal inverse CDF."""
    if not 0.0 < p < 1.0:
        raise InvalidArgumentError(f"p must be in (0, 1), got {p}")
    a = (
        -3.969683028665376e01,
        2.209460984245205e02,
        -2.759285104469687e02,
        1.383577518672690e02,
        -3.066479806614716e01,
        2.506628277459239e00,
    )
    b = (
        -5.447609879822406e01,
        1.615858368580409e02,
        -1.556989798598866e02,
        6.680131188771972e01,
        -1.328068155288572e01,
    )
    c = (
        -7.784894002430293e-03,
        -3.223964580411365e-01,
        -2.400758277161838e00,
        -2.549732539343734e00,
        4.374664141464968e00,
        2.938163982698783e00,
    )
    d = (
        7.784695709041462e-03,
        3.224671290700398e-01,
        2.445134137142996e00,
        3.754408661907416e00,
    )
    p_low = 0.02425
    if p < p_low:
        q = math.sqrt(-2.0 * math.log(p))
        return (((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) / (
            (((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0
        )
    if p > 1.0 - p_low:
        q = math.sqrt(-2.0 * math.log(1.0 - p))
        return -(((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) / (
            (((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0
        )
    q = p - 0.5
    r = q * q
    return (((((a[0] * r + a[1]) * r + a[2]) * r + a[3]) * r + a[4]) * r + a[5]) * q / (
        ((((b[0] * r + b[1]) * r + b[2]) * r + b[3]) * r + b[4]) * r + 1.0
    )


def gammainc_lower(a: float, x: float) -> float:
    """Regularized lower incomplete gamma P(a, x) via series / continued fraction."""
    if x <= 0.0:
        return 0.0
    log_prefactor = -x + a * math.log(x) - math.lgamma(a)
    if x < a + 1.0:
        term = 1.0 / a
        total = term
        n = 0
        while n < 500:
            n += 1
            term *= x / (a + n)
            total += term
            if abs(term) < abs(total) * 1e-16:
                break
        return total * math.exp(log_prefactor)
    # modified Lentz continued fraction for the upper tail Q(a, x)
    tiny = 1e-300
    b = x + 1.0 - a
    c = 1.0 / tiny
    d = 1.0 / b
    h = d
    for i in range(1, 500):
        an = -i * (i - a)
        b += 2.0
        d = an * d + b
        if abs(d) < tiny:
            d = tiny
        c = b + an / c
        if abs(c) < tiny:
            c = tiny
        d = 1.0 / d
        delta = d * c
        h *= delta
        if abs(delta - 1.0) < 1e-16:
            break
    return 1.0 - math.exp(log_prefactor) * h


def chi2_cdf(x: float, d: int) -> float:
    return gammainc_lower(d / 2.0, x / 2.0)


def chi2_pdf(x: float, d: int) -> float:
    if x <= 0.0:
        return 0.0
    half = d / 2.0
    return math.exp((half - 1.0) * math.log(x) - x / 2.0 - half * math.log(2.0) - math.lgamma(half))


def chi2_quantile(p: float, d: int) -> float:
    """Wilson-Hilferty start refined by Newton steps on the exact CDF."""
    if not 0.0 < p < 1.0:
        raise InvalidArgumentError(f"p must be in (0, 1), got {p}")
    if d < 1:
        raise InvalidArgumentError("degrees of freedom must be >= 1")
    z = normal_quantile(p)
    a = 2.0 / (9.0 * d)
    x = d * (1.0 - a + z * math.sqrt(a)) ** 3
    x = max(x, 1e-10)
    for _ in range(60):
        err = chi2_cdf(x, d) - p
        slope = chi2_pdf(x, d)
        if slope <= 0.0:
            break
        step = err / slope
        new_x = x - step
        if new_x <= 0.0:
            new_x = x / 2.0
        if abs(new_x - x) <= 1e-12 * max(1.0, x):
            x = new_x
            break
        x = new_x
    return x
