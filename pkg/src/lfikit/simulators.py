"""The four generative models behind one simulate(theta, rng) -> Dataset interface.

Models: Ricker population dynamics with Poisson observation, the M/G/1
queue's inter-departure recursion, the Lotka-Volterra birth/predation/death
jump process simulated event-by-event (exact SSA), and the FitzHugh-Nagumo
ODE observed through Gaussian voltage noise. Batch generation of training
pairs draws each pair from its own substream so the result is independent
of worker scheduling.
"""

import math
import struct
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass

import numpy as np

from ._accel import jit_kernel
from .errors import (
    BundleFormatError,
    ExplosionError,
    InvalidArgumentError,
    SimulationError,
    SimulationOverflowError,
    StiffnessError,
    SummaryError,
    TrainingDataError,
)
from .rng import RngStream, _poisson, _std_exponential, _std_normal, sample_uniform_box

#: incremented by every simulate() call; lets tests prove estimation is
#: amortized (no simulations at estimate time)
SIMULATION_CALLS = 0

#: latent-state guard for the Ricker map; beyond this the parameter is
#: outside any intended use and Poisson sampling would be meaningless
RICKER_LATENT_CAP = 1e12

#: default cap on Lotka-Volterra event counts
LV_MAX_EVENTS = 10_000_000

#: training pairs that fail to simulate are redrawn at most this many times
RETRY_CAP = 3


def _count_simulation():
    global SIMULATION_CALLS
    SIMULATION_CALLS += 1


def simulation_call_count() -> int:
    return SIMULATION_CALLS


# ---------------------------------------------------------------------------
# domain types
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class DesignBox:
    """Axis-aligned box supporting the uniform design density."""

    lo: tuple
    hi: tuple

    def __post_init__(self):
        lo = tuple(float(v) for v in self.lo)
        hi = tuple(float(v) for v in self.hi)
        object.__setattr__(self, "lo", lo)
        object.__setattr__(self, "hi", hi)
        if len(lo) != len(hi) or not lo:
            raise InvalidArgumentError("design box needs matching non-empty lo/hi")
        if not all(a < b for a, b in zip(lo, hi)):
            raise InvalidArgumentError("design box requires lo[i] < hi[i]")

    @property
    def dim(self) -> int:
        return len(self.lo)

    @property
    def lo_array(self) -> np.ndarray:
        return np.asarray(self.lo)

    @property
    def hi_array(self) -> np.ndarray:
        return np.asarray(self.hi)

    @property
    def widths(self) -> np.ndarray:
        return self.hi_array - self.lo_array

    def contains(self, point, atol=0.0) -> bool:
        point = np.asarray(point, dtype=float)
        return bool(
            (point >= self.lo_array - atol).all() and (point <= self.hi_array + atol).all()
        )

    def clamp(self, point) -> np.ndarray:
        return np.clip(np.asarray(point, dtype=float), self.lo_array, self.hi_array)

    def sample(self, rng: RngStream) -> np.ndarray:
        return sample_uniform_box(rng, self.lo_array, self.hi_array)


@dataclass
class Dataset:
    """One realization of a generative model: named aligned series."""

    series: dict
    time_grid: np.ndarray | None = None

    def __post_init__(self):
        if not self.series:
            raise InvalidArgumentError("dataset needs at least one series")
        self.series = {k: np.asarray(v, dtype=float) for k, v in self.series.items()}
        lengths = {v.shape[0] for v in self.series.values()}
        if len(lengths) != 1 or 0 in lengths:
            raise InvalidArgumentError("all series must share one positive length")
        if self.time_grid is not None:
            self.time_grid = np.asarray(self.time_grid, dtype=float)
            if self.time_grid.shape[0] != self.length:
                raise InvalidArgumentError("time grid length must match the series")
            if self.length > 1 and not (np.diff(self.time_grid) > 0).all():
                raise InvalidArgumentError("time grid must be strictly increasing")

    @property
    def length(self) -> int:
        return next(iter(self.series.values())).shape[0]

    @property
    def names(self) -> tuple:
        return tuple(self.series)

    def flatten(self) -> np.ndarray:
        """Concatenate the series in declaration order into one vector."""
        return np.concatenate([self.series[k] for k in self.series])


@dataclass
class TrainingSet:
    """Parameter/data pairs drawn from the design distribution.

    ``data`` holds either flattened raw output (kind="raw") or summary
    vectors (kind="summary"), one row per pair, aligned with ``theta``.
    """

    model_name: str
    design: DesignBox
    base_seed: int
    kind: str
    theta: np.ndarray
    data: np.ndarray

    def __post_init__(self):
        self.theta = np.asarray(self.theta, dtype=float)
        self.data = np.asarray(self.data, dtype=float)
        if self.kind not in ("raw", "summary"):
            raise InvalidArgumentError(f"unknown training-set kind {self.kind!r}")
        if self.theta.ndim != 2 or self.data.ndim != 2:
            raise InvalidArgumentError("theta and data must be 2-d")
        if self.theta.shape[0] != self.data.shape[0]:
            raise InvalidArgumentError("theta and data row counts differ")

    @property
    def n(self) -> int:
        return self.theta.shape[0]


# ---------------------------------------------------------------------------
# jitted kernels
# ---------------------------------------------------------------------------


@jit_kernel
def _ricker_step(n, eta, eps):
    return n * math.exp(eta - n + eps)


@jit_kernel
def _ricker_kernel(gen, eta, sigma, delta, m, n0):
    y = np.empty(m)
    n = n0
    for t in range(m):
        eps = sigma * _std_normal(gen)
        n = _ricker_step(n, eta, eps)
        if not math.isfinite(n) or n > RICKER_LATENT_CAP:
            return y, t + 1
        y[t] = _poisson(gen, delta * n)
    return y, 0


@jit_kernel
def _mg1_kernel(gen, t1, t2, t3, n):
    y = np.empty(n)
    arrival = 0.0
    departure = 0.0
    for i in range(n):
        u = t1 + (t2 - t1) * gen.random()
        if i > 0:
            arrival += _std_exponential(gen) / t3
        if arrival <= departure:
            yi = u
        else:
            yi = u + arrival - departure
        departure += yi
        y[i] = yi
    return y


@jit_kernel
def _lv_kernel(gen, th1, th2, th3, u0, v0, grid, max_events, log_cap):
    npts = grid.shape[0]
    gu = np.empty(npts)
    gv = np.empty(npts)
    ev_time = np.empty(log_cap)
    ev_kind = np.empty(log_cap, dtype=np.int64)
    u = u0
    v = v0
    t = 0.0
    gi = 0
    events = 0
    while gi < npts:
        h1 = th1 * u
        h2 = th2 * u * v
        h3 = th3 * v
        total = h1 + h2 + h3
        if total <= 0.0:
            # absorbed: hold the state to the end of the grid
            while gi < npts:
                gu[gi] = u
                gv[gi] = v
                gi += 1
            break
        t_next = t + _std_exponential(gen) / total
        while gi < npts and grid[gi] < t_next:
            gu[gi] = u
            gv[gi] = v
            gi += 1
        if gi >= npts:
            break
        t = t_next
        if events >= max_events:
            return gu, gv, 1, t, ev_time[:events], ev_kind[:events]
        x = gen.random() * total
        if x < h1:
            kind = 0
            u += 1
        elif x < h1 + h2:
            kind = 1
            u -= 1
            v += 1
        else:
            kind = 2
            v -= 1
        if events < log_cap:
            ev_time[events] = t
            ev_kind[events] = kind
        events += 1
    n_logged = min(events, log_cap)
    return gu, gv, 0, t, ev_time[:n_logged], ev_kind[:n_logged]


@jit_kernel
def _fn_rk4_kernel(th1, th2, tau, zeta, step, nsteps):
    v = np.empty(nsteps + 1)
    r = np.empty(nsteps + 1)
    v[0] = 0.0
    r[0] = 0.0
    vi = 0.0
    ri = 0.0
    for i in range(nsteps):
        k1v = tau * (vi - vi * vi * vi / 3.0 + ri + zeta)
        k1r = -(vi - th1 + th2 * ri) / tau
        v2 = vi + 0.5 * step * k1v
        r2 = ri + 0.5 * step * k1r
        k2v = tau * (v2 - v2 * v2 * v2 / 3.0 + r2 + zeta)
        k2r = -(v2 - th1 + th2 * r2) / tau
        v3 = vi + 0.5 * step * k2v
        r3 = ri + 0.5 * step * k2r
        k3v = tau * (v3 - v3 * v3 * v3 / 3.0 + r3 + zeta)
        k3r = -(v3 - th1 + th2 * r3) / tau
        v4 = vi + step * k3v
        r4 = ri + step * k3r
        k4v = tau * (v4 - v4 * v4 * v4 / 3.0 + r4 + zeta)
        k4r = -(v4 - th1 + th2 * r4) / tau
        vi = vi + step * (k1v + 2.0 * k2v + 2.0 * k3v + k4v) / 6.0
        ri = ri + step * (k1r + 2.0 * k2r + 2.0 * k3r + k4r) / 6.0
        if not (math.isfinite(vi) and math.isfinite(ri)):
            return v, r, i + 1
        v[i + 1] = vi
        r[i + 1] = ri
    return v, r, 0


# ---------------------------------------------------------------------------
# simulation operations
# ---------------------------------------------------------------------------


def _check_theta(theta, d, name):
    theta = np.asarray(theta, dtype=float)
    if theta.shape != (d,):
        raise InvalidArgumentError(f"{name} expects a length-{d} parameter vector")
    if not np.isfinite(theta).all():
        raise InvalidArgumentError(f"{name} parameters must be finite")
    return theta


def simulate_ricker(theta, m: int, n0: float, rng: RngStream) -> Dataset:
    """Observed counts y(1..m) of a Ricker population with Poisson sampling."""
    theta = _check_theta(theta, 3, "ricker")
    eta, sigma, delta = theta
    if m < 1:
        raise InvalidArgumentError("m must be >= 1")
    if n0 <= 0:
        raise InvalidArgumentError("initial population must be positive")
    if sigma < 0 or delta <= 0:
        raise InvalidArgumentError("ricker requires sigma >= 0 and delta > 0")
    _count_simulation()
    y, failed_at = _ricker_kernel(rng.generator, eta, sigma, delta, int(m), float(n0))
    if failed_at:
        raise SimulationOverflowError(
            f"latent population left (0, {RICKER_LATENT_CAP:g}] at step {failed_at}",
            step=failed_at,
        )
    return Dataset({"y": y}, time_grid=np.arange(1, m + 1, dtype=float))


def ricker_latent_path(eta: float, m: int, n0: float) -> np.ndarray:
    """Noise-free latent trajectory N(1..m); the sigma=0 backbone of the map."""
    out = np.empty(int(m))
    n = float(n0)
    for t in range(out.shape[0]):
        n = _ricker_step(n, float(eta), 0.0)
        out[t] = n
    return out


def simulate_mg1(theta, n: int, rng: RngStream) -> Dataset:
    """Inter-departure times of a single-server queue with Uniform[t1,t2] service."""
    theta = _check_theta(theta, 3, "mg1")
    t1, t2, t3 = theta
    if not (0 <= t1 < t2):
        raise InvalidArgumentError("mg1 requires 0 <= theta1 < theta2")
    if t3 <= 0:
        raise InvalidArgumentError("mg1 requires theta3 > 0")
    if n < 1:
        raise InvalidArgumentError("n must be >= 1")
    _count_simulation()
    y = _mg1_kernel(rng.generator, t1, t2, t3, int(n))
    return Dataset({"y": y}, time_grid=np.arange(1, n + 1, dtype=float))


def simulate_lv(
    theta,
    u0: int,
    v0: int,
    t_end: float,
    grid_points: int,
    max_events: int,
    rng: RngStream,
    record_events: bool = False,
):
    """Exact-SSA prey/predator trajectory sampled onto an equispaced grid.

    The chain is piecewise constant between events, so last-value grid
    sampling is exact. With ``record_events`` the raw event log (times,
    reaction kinds) is returned alongside the Dataset for validation.
    """
    theta = _check_theta(theta, 3, "lv")
    if (theta <= 0).any():
        raise InvalidArgumentError("lv rates must be positive")
    if u0 < 0 or v0 < 0:
        raise InvalidArgumentError("initial abundances must be non-negative")
    if grid_points < 2:
        raise InvalidArgumentError("grid needs at least 2 points")
    if t_end <= 0:
        raise InvalidArgumentError("t_end must be positive")
    _count_simulation()
    grid = np.linspace(0.0, float(t_end), int(grid_points))
    log_cap = int(max_events) if record_events else 0
    gu, gv, status, t_reached, ev_time, ev_kind = _lv_kernel(
        rng.generator,
        theta[0],
        theta[1],
        theta[2],
        int(u0),
        int(v0),
        grid,
        int(max_events),
        log_cap,
    )
    if status:
        raise ExplosionError(
            f"event count exceeded {max_events} at simulated time {t_reached:.6g}",
            time_reached=t_reached,
        )
    data = Dataset({"u": gu, "v": gv}, time_grid=grid)
    if record_events:
        return data, (ev_time, ev_kind)
    return data


def solve_fn_ode(theta, tau: float, zeta: float, step: float, t_end: float) -> Dataset:
    """Fixed-step RK4 solution of the FitzHugh-Nagumo system from rest."""
    theta = _check_theta(theta, 2, "fn")
    if step <= 0:
        raise InvalidArgumentError("step must be positive")
    if t_end < step:
        raise InvalidArgumentError("t_end must be at least one step")
    nsteps = int(round(t_end / step))
    if abs(nsteps * step - t_end) > 1e-9 * max(1.0, t_end):
        raise InvalidArgumentError("step must divide t_end")
    v, r, failed_at = _fn_rk4_kernel(theta[0], theta[1], tau, zeta, float(step), nsteps)
    if failed_at:
        raise StiffnessError(
            f"state became non-finite at t={failed_at * step:.6g}",
            time_reached=failed_at * step,
        )
    grid = np.arange(nsteps + 1) * step
    return Dataset({"v": v, "r": r}, time_grid=grid)


def simulate_fn(
    theta,
    noise_sd: float,
    obs_times,
    rng: RngStream,
    tau: float = 3.0,
    zeta: float = 0.4,
    step: float = 0.0125,
) -> Dataset:
    """Voltage observations with additive Gaussian noise at the given times."""
    obs_times = np.asarray(obs_times, dtype=float)
    if obs_times.ndim != 1 or obs_times.shape[0] == 0:
        raise InvalidArgumentError("obs_times must be a non-empty vector")
    if noise_sd < 0:
        raise InvalidArgumentError("noise_sd must be >= 0")
    _count_simulation()
    t_end = float(obs_times.max())
    solution = solve_fn_ode(theta, tau, zeta, step, t_end)
    idx = np.rint(obs_times / step).astype(int)
    if np.abs(idx * step - obs_times).max() > 1e-9 * max(1.0, t_end):
        raise InvalidArgumentError("every observation time must sit on the solver grid")
    clean = solution.series["v"][idx]
    gen = rng.generator
    noise = np.empty(clean.shape[0])
    for i in range(noise.shape[0]):
        noise[i] = _std_normal(gen)
    return Dataset({"y": clean + noise_sd * noise}, time_grid=obs_times)


def fn_observation_times(count: int = 1000, spacing: float = 0.025) -> np.ndarray:
    """The default voltage sampling grid t_i = spacing * i, i = 1..count."""
    return spacing * np.arange(1, count + 1)


# ---------------------------------------------------------------------------
# model objects
# ---------------------------------------------------------------------------

#: reparameterizations between the design box and natural parameter units,
#: keyed by model name so loaded estimator bundles can reuse them
_COORD_MAPS = {}


def register_coord_map(model_name, to_theta, to_design):
    _COORD_MAPS[model_name] = (to_theta, to_design)


def design_to_theta(model_name, coords) -> np.ndarray:
    coords = np.asarray(coords, dtype=float)
    if model_name in _COORD_MAPS:
        return _COORD_MAPS[model_name][0](coords)
    return coords


def theta_to_design(model_name, theta) -> np.ndarray:
    theta = np.asarray(theta, dtype=float)
    if model_name in _COORD_MAPS:
        return _COORD_MAPS[model_name][1](theta)
    return theta


# the queue's design density lives on (theta1, theta2 - theta1, theta3),
# which keeps service and inter-arrival magnitudes comparable
register_coord_map(
    "mg1",
    lambda c: np.array([c[0], c[0] + c[1], c[2]]),
    lambda t: np.array([t[0], t[1] - t[0], t[2]]),
)


class _CoordMixin:
    def design_to_theta(self, coords):
        return design_to_theta(self.name, coords)

    def theta_to_design(self, theta):
        return theta_to_design(self.name, theta)


class RickerModel(_CoordMixin):
    """Ricker map with Poisson observation; theta = (eta, sigma, delta)."""

    name = "ricker"
    index_name = "t"
    parameter_names = ("eta", "sigma", "delta")
    design = DesignBox(lo=(2.0, 0.0, 1.0), hi=(5.0, 0.3, 4.0))

    def __init__(self, m=1000, n0=2.0):
        self.m = int(m)
        self.n0 = float(n0)

    @property
    def output_length(self):
        return self.m

    def simulate(self, theta, rng):
        return simulate_ricker(theta, self.m, self.n0, rng)


class Mg1Model(_CoordMixin):
    """M/G/1 queue; theta = (theta1, theta2, theta3) with theta1 < theta2.

    The design distribution lives on (theta1, theta2 - theta1, theta3), which
    keeps service and inter-arrival scales comparable; ``design_to_theta``
    maps design coordinates back to theta.
    """

    name = "mg1"
    index_name = "n"
    parameter_names = ("theta1", "theta2", "theta3")
    design = DesignBox(lo=(0.0, 0.0, 0.0), hi=(10.0, 10.0, 1.0 / 3.0))

    def __init__(self, n=1000):
        self.n = int(n)

    @property
    def output_length(self):
        return self.n

    def simulate(self, theta, rng):
        return simulate_mg1(theta, self.n, rng)


class LvModel(_CoordMixin):
    """Lotka-Volterra jump process; theta = (birth, predation, death) rates."""

    name = "lv"
    index_name = "t"
    parameter_names = ("theta1", "theta2", "theta3")
    design = DesignBox(lo=(0.3, 0.005, 0.1), hi=(0.6, 0.01, 0.4))

    def __init__(self, u0=50, v0=100, t_end=30.0, grid_points=1000, max_events=LV_MAX_EVENTS):
        self.u0 = int(u0)
        self.v0 = int(v0)
        self.t_end = float(t_end)
        self.grid_points = int(grid_points)
        self.max_events = int(max_events)

    @property
    def output_length(self):
        return 2 * self.grid_points

    def simulate(self, theta, rng):
        return simulate_lv(
            theta, self.u0, self.v0, self.t_end, self.grid_points, self.max_events, rng
        )


class FnModel(_CoordMixin):
    """FitzHugh-Nagumo voltage observations; theta = (theta1, theta2)."""

    name = "fn"
    index_name = "t"
    parameter_names = ("theta1", "theta2")
    design = DesignBox(lo=(-0.2, -0.4), hi=(1.0, 1.2))

    def __init__(self, n_obs=1000, spacing=0.025, noise_sd=0.06, tau=3.0, zeta=0.4, step=0.0125):
        self.n_obs = int(n_obs)
        self.spacing = float(spacing)
        self.noise_sd = float(noise_sd)
        self.tau = float(tau)
        self.zeta = float(zeta)
        self.step = float(step)

    @property
    def output_length(self):
        return self.n_obs

    @property
    def obs_times(self):
        return fn_observation_times(self.n_obs, self.spacing)

    def simulate(self, theta, rng):
        return simulate_fn(
            theta,
            self.noise_sd,
            self.obs_times,
            rng,
            tau=self.tau,
            zeta=self.zeta,
            step=self.step,
        )

    def solve(self, theta):
        return solve_fn_ode(theta, self.tau, self.zeta, self.step, float(self.obs_times.max()))

    def clean_voltage(self, theta):
        """Noise-free voltage at the observation times."""
        sol = self.solve(theta)
        idx = np.rint(self.obs_times / self.step).astype(int)
        return sol.series["v"][idx]


MODEL_REGISTRY = {
    "ricker": RickerModel,
    "mg1": Mg1Model,
    "lv": LvModel,
    "fn": FnModel,
}


def get_model(name: str, **options):
    try:
        cls = MODEL_REGISTRY[name]
    except KeyError:
        raise InvalidArgumentError(
            f"unknown model {name!r}; available: {sorted(MODEL_REGISTRY)}"
        ) from None
    return cls(**options)


# ---------------------------------------------------------------------------
# training-pair generation
# ---------------------------------------------------------------------------


def _make_pair(model, design, base_seed, index, transform):
    """Draw one (theta, vector) pair; retries with fresh substreams on failure."""
    root = RngStream(base_seed)
    last_error = None
    for attempt in range(RETRY_CAP + 1):
        rng = root.substream(index, attempt)
        coords = design.sample(rng)
        theta = model.design_to_theta(coords)
        try:
            data = model.simulate(theta, rng)
            vec = model_flatten(model, data) if transform is None else transform(data)
        except (SimulationError, SummaryError) as exc:
            last_error = exc
            continue
        return theta, np.asarray(vec, dtype=float)
    raise TrainingDataError(
        f"pair {index} failed {RETRY_CAP + 1} times; last error: {last_error}"
    )


def model_flatten(model, data: Dataset) -> np.ndarray:
    """Flatten a Dataset to the model's fixed raw input vector."""
    vec = data.flatten()
    if vec.shape[0] != model.output_length:
        raise SimulationError(
            f"{model.name} produced length {vec.shape[0]}, expected {model.output_length}"
        )
    return vec


def _pair_block(args):
    model, design, base_seed, indices, transform = args
    thetas = []
    rows = []
    for i in indices:
        theta, vec = _make_pair(model, design, base_seed, i, transform)
        thetas.append(theta)
        rows.append(vec)
    return np.asarray(thetas), np.asarray(rows)


def generate_training_pairs(
    model,
    design: DesignBox,
    n: int,
    base_seed: int,
    transform=None,
    jobs: int = 1,
) -> TrainingSet:
    """n independent (theta, data) pairs; pair i owns substream i.

    ``transform`` maps each Dataset to a fixed-length vector (a summary
    pipeline's ``summarize``); without it the raw flattened output is kept.
    Results are identical for any ``jobs`` because every pair's randomness
    is derived from (base_seed, pair index, attempt).
    """
    if n < 1:
        raise InvalidArgumentError("n must be >= 1")
    jobs = max(1, int(jobs))
    indices = np.arange(int(n))
    if jobs == 1:
        thetas, rows = _pair_block((model, design, base_seed, indices, transform))
    else:
        chunks = np.array_split(indices, min(jobs * 4, len(indices)))
        tasks = [(model, design, base_seed, chunk, transform) for chunk in chunks if len(chunk)]
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            parts = list(pool.map(_pair_block, tasks))
        thetas = np.concatenate([p[0] for p in parts])
        rows = np.concatenate([p[1] for p in parts])
    kind = "raw" if transform is None else "summary"
    return TrainingSet(
        model_name=model.name,
        design=design,
        base_seed=int(base_seed),
        kind=kind,
        theta=thetas,
        data=rows,
    )


# ---------------------------------------------------------------------------
# training-set persistence: "LFI1" binary container and CSV export
# ---------------------------------------------------------------------------

_MAGIC = b"LFI1"
_VERSION = 1


def save_training_set(ts: TrainingSet, path):
    with open(path, "wb") as fh:
        name = ts.model_name.encode("utf-8")
        fh.write(_MAGIC)
        fh.write(struct.pack("<I", _VERSION))
        fh.write(struct.pack("<I", len(name)))
        fh.write(name)
        fh.write(struct.pack("<B", 0 if ts.kind == "raw" else 1))
        d = ts.theta.shape[1]
        k = ts.data.shape[1]
        fh.write(struct.pack("<IIQQ", d, k, ts.n, ts.base_seed))
        fh.write(np.asarray(ts.design.lo, dtype="<f8").tobytes())
        fh.write(np.asarray(ts.design.hi, dtype="<f8").tobytes())
        block = np.hstack([ts.theta, ts.data]).astype("<f8")
        fh.write(block.tobytes())


def load_training_set(path) -> TrainingSet:
    with open(path, "rb") as fh:
        raw = fh.read()
    if raw[:4] != _MAGIC:
        raise BundleFormatError(f"bad magic bytes {raw[:4]!r}, expected {_MAGIC!r}")
    off = 4
    (version,) = struct.unpack_from("<I", raw, off)
    off += 4
    if version != _VERSION:
        raise BundleFormatError(f"unsupported container version {version}")
    (name_len,) = struct.unpack_from("<I", raw, off)
    off += 4
    name = raw[off : off + name_len].decode("utf-8")
    off += name_len
    (kind_flag,) = struct.unpack_from("<B", raw, off)
    off += 1
    d, k, n, base_seed = struct.unpack_from("<IIQQ", raw, off)
    off += struct.calcsize("<IIQQ")
    lo = np.frombuffer(raw, dtype="<f8", count=d, offset=off).copy()
    off += 8 * d
    hi = np.frombuffer(raw, dtype="<f8", count=d, offset=off).copy()
    off += 8 * d
    expected = n * (d + k)
    block = np.frombuffer(raw, dtype="<f8", count=-1, offset=off)
    if block.shape[0] != expected:
        raise BundleFormatError(
            f"truncated container: {block.shape[0]} values, expected {expected}"
        )
    block = block.reshape(n, d + k).copy()
    return TrainingSet(
        model_name=name,
        design=DesignBox(lo=tuple(lo), hi=tuple(hi)),
        base_seed=int(base_seed),
        kind="raw" if kind_flag == 0 else "summary",
        theta=block[:, :d],
        data=block[:, d:],
    )


def training_set_to_csv(ts: TrainingSet, path):
    d = ts.theta.shape[1]
    k = ts.data.shape[1]
    header = [f"theta_{i}" for i in range(d)] + [f"x_{j}" for j in range(k)]
    with open(path, "w", newline="") as fh:
        fh.write(",".join(header) + "\n")
        for i in range(ts.n):
            row = [repr(v) for v in ts.theta[i]] + [repr(v) for v in ts.data[i]]
            fh.write(",".join(row) + "\n")
