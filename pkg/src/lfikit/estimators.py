"""The five estimation procedures behind one Dataset-in, parameters-out surface.

* rm / rmdr: a learned reconstruction map evaluated on raw data or on a
  summary vector. Both are amortized: estimation is a forward pass only.
* sle: maximizes a Gaussian approximation to the summary distribution whose
  moments come from fresh simulations at each candidate parameter.
* abc: pseudo-marginal random-walk sampling of the kernel-smoothed posterior
  with bandwidth-tempered parallel rungs; the estimate is the posterior mean.
* rmdrlo: the rmdr estimate seeds a local simplex search on an explicit
  log-likelihood when one is available.
"""

import logging
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import (
    ConfigError,
    DecompositionError,
    InvalidArgumentError,
    SchemaMismatchError,
    SimulationError,
)
from .linalg import cho_logdet, cholesky
from .nn import (
    MlpNetwork,
    Standardizer,
    TrainConfig,
    forward,
    init_network,
    load_model,
    save_model,
    train,
)
from .optim import ObjectiveSpec, annealing_search, nelder_mead
from .rng import RngStream, _std_normal, hash_floats
from .simulators import (
    DesignBox,
    Dataset,
    design_to_theta,
    generate_training_pairs,
    theta_to_design,
)
from .summaries import SummaryPipeline, pipeline_from_manifest

log = logging.getLogger(__name__)

_SLE_STREAM = 0x51E
_ABC_STREAM = 0xABC
_PENALTY = -1e10


# ---------------------------------------------------------------------------
# reconstruction maps
# ---------------------------------------------------------------------------

_RAW_MANIFEST_HEADER = "raw-input v1"


def _raw_manifest(model_name, length):
    return f"{_RAW_MANIFEST_HEADER}\nmodel={model_name}\nm={length}\n"


@dataclass
class FittedReconstructionMap:
    """A trained network plus everything needed to reapply it to new data."""

    model_name: str
    design: DesignBox
    network: MlpNetwork
    pipeline: SummaryPipeline | None
    provenance: dict = field(default_factory=dict)

    @property
    def is_dimension_reduced(self):
        return self.pipeline is not None

    def manifest(self) -> str:
        if self.pipeline is not None:
            return self.pipeline.manifest()
        return _raw_manifest(self.model_name, self.network.input_size)

    def save(self, path):
        provenance = dict(self.provenance)
        provenance["model"] = self.model_name
        provenance["design_lo"] = list(self.design.lo)
        provenance["design_hi"] = list(self.design.hi)
        save_model(self.network, self.manifest(), path, provenance=provenance)

    @staticmethod
    def load(path) -> "FittedReconstructionMap":
        bundle = load_model(path)
        manifest = bundle.manifest
        if manifest.startswith(_RAW_MANIFEST_HEADER):
            pipeline = None
            model_name = manifest.splitlines()[1].partition("=")[2]
        else:
            pipeline = pipeline_from_manifest(manifest)
            model_name = pipeline.model_name
        prov = bundle.provenance
        design = DesignBox(lo=tuple(prov["design_lo"]), hi=tuple(prov["design_hi"]))
        return FittedReconstructionMap(
            model_name=model_name,
            design=design,
            network=bundle.network,
            pipeline=pipeline,
            provenance=prov,
        )


def _fit_map(model, design, n, cfg: TrainConfig, pipeline, jobs=1):
    transform = None if pipeline is None else pipeline.summarize
    ts = generate_training_pairs(model, design, n, cfg.seed, transform=transform, jobs=jobs)
    targets = np.array([theta_to_design(model.name, t) for t in ts.theta])
    n_val = max(1, int(round(0.25 * ts.n)))
    n_train = ts.n - n_val
    if n_train < 1:
        raise InvalidArgumentError("training set too small for a 75/25 split")
    x_train, x_val = ts.data[:n_train], ts.data[n_train:]
    y_train, y_val = targets[:n_train], targets[n_train:]
    standardizer = Standardizer.fit(
        x_train,
        design.lo_array,
        design.hi_array,
        standardize_inputs=cfg.standardize_inputs,
        scale_targets=cfg.scale_targets,
    )
    sizes = [x_train.shape[1], *cfg.hidden, design.dim]
    net = init_network(sizes, cfg.seed)
    net, history = train(
        net,
        standardizer.transform_x(x_train),
        standardizer.transform_y(y_train),
        standardizer.transform_x(x_val),
        standardizer.transform_y(y_val),
        cfg,
    )
    net.standardizer = standardizer
    provenance = {
        "n": int(ts.n),
        "seed": int(cfg.seed),
        "config": cfg.digest(),
        "kind": ts.kind,
        "best_epoch": history.best_epoch,
    }
    fitted = FittedReconstructionMap(
        model_name=model.name,
        design=design,
        network=net,
        pipeline=pipeline,
        provenance=provenance,
    )
    return fitted, history


def fit_rm(model, design: DesignBox, n: int, cfg: TrainConfig, jobs: int = 1):
    """Learn data -> parameters directly on flattened raw output."""
    return _fit_map(model, design, n, cfg, pipeline=None, jobs=jobs)


def fit_rmdr(model, pipeline: SummaryPipeline, design: DesignBox, n: int, cfg: TrainConfig, jobs: int = 1):
    """Learn summaries -> parameters; the dimension-reduced variant."""
    if pipeline.model_name != model.name:
        raise SchemaMismatchError(
            f"pipeline is for {pipeline.model_name!r}, model is {model.name!r}"
        )
    return _fit_map(model, design, n, cfg, pipeline=pipeline, jobs=jobs)


def estimate(fitted: FittedReconstructionMap, data: Dataset, clamp: bool = False) -> np.ndarray:
    """Apply a fitted map to one dataset. No simulations happen here."""
    if fitted.pipeline is not None:
        x = fitted.pipeline.summarize(data)
    else:
        x = data.flatten()
        if x.shape[0] != fitted.network.input_size:
            raise SchemaMismatchError(
                f"raw input length {x.shape[0]} does not match the trained "
                f"network ({fitted.network.input_size})"
            )
    std = fitted.network.standardizer or Standardizer.identity(
        fitted.network.input_size, fitted.network.output_size
    )
    out = forward(fitted.network, std.transform_x(x))
    coords = std.inverse_y(out)
    if clamp:
        coords = fitted.design.clamp(coords)
    return design_to_theta(fitted.model_name, coords)


# ---------------------------------------------------------------------------
# synthetic likelihood
# ---------------------------------------------------------------------------


@dataclass
class SleConfig:
    n_s: int = 100
    jitter: object = "auto"
    budget: int | None = None
    seed: int = 0


def sle_loglik(theta, s_obs, model, pipeline: SummaryPipeline, cfg: SleConfig, rng=None) -> float:
    """Gaussian log-density of s_obs under moments estimated at theta.

    Moments use divisor n_s. Without an explicit rng the substream is
    derived from (seed, hash(theta)), so repeated evaluation at one theta
    is deterministic: the optimizer sees a fixed surface.
    """
    s_obs = np.asarray(s_obs, dtype=float)
    k = s_obs.shape[0]
    if cfg.n_s <= k:
        raise ConfigError(f"n_s={cfg.n_s} must exceed the summary dimension K={k}")
    theta = np.asarray(theta, dtype=float)
    if rng is None:
        rng = RngStream(cfg.seed, _SLE_STREAM).substream(hash_floats(theta))
    rows = np.empty((cfg.n_s, k))
    try:
        for i in range(cfg.n_s):
            data = model.simulate(theta, rng.substream(i))
            rows[i] = pipeline.summarize(data)
    except (SimulationError, InvalidArgumentError) as exc:
        log.info("sle: simulation failed at theta=%s (%s); penalizing", theta, exc)
        return _PENALTY
    mu = rows.mean(axis=0)
    centered = rows - mu
    cov = centered.T @ centered / cfg.n_s
    try:
        ell = cholesky(cov, jitter=cfg.jitter)
    except DecompositionError as exc:
        log.info("sle: covariance not PD at theta=%s (%s); penalizing", theta, exc)
        return _PENALTY
    z = np.linalg.solve(ell, s_obs - mu)
    return float(-0.5 * z @ z - 0.5 * cho_logdet(ell))


def sle_estimate(data: Dataset, model, pipeline, design: DesignBox, cfg: SleConfig) -> np.ndarray:
    """Annealed search for the synthetic-likelihood maximizer over the box."""
    s_obs = pipeline.summarize(data)

    def objective(coords):
        theta = design_to_theta(model.name, coords)
        return -sle_loglik(theta, s_obs, model, pipeline, cfg)

    spec = ObjectiveSpec(objective=objective, bounds=design, budget=cfg.budget, seed=cfg.seed)
    result = annealing_search(spec)
    return design_to_theta(model.name, result.argmin)


# ---------------------------------------------------------------------------
# ABC with bandwidth-tempered parallel rungs
# ---------------------------------------------------------------------------


@dataclass
class AbcConfig:
    bandwidth: float | None = None
    chain_length: int = 3000
    burn_in: int = 500
    ladder: tuple = (1.0, 2.0, 4.0, 8.0)
    proposal_scale: object = None  # per-dimension; default 0.15 * box widths
    summary_sd: object = None  # pilot-estimated when absent
    pilot_size: int = 500
    swap_every: int = 10
    seed: int = 0

    def __post_init__(self):
        if self.burn_in >= self.chain_length:
            raise ConfigError("burn_in must be smaller than chain_length")
        ladder = tuple(float(t) for t in self.ladder)
        if not ladder or ladder[0] != 1.0 or any(
            b <= a for a, b in zip(ladder, ladder[1:])
        ):
            raise ConfigError("temperature ladder must increase strictly from 1")
        self.ladder = ladder


def _reflect_into_box(x, lo, hi):
    span = hi - lo
    out = x.copy()
    for i in range(out.shape[0]):
        v = out[i]
        # fold the real line onto [lo, hi] (reflecting random walk)
        period = 2.0 * span[i]
        v = (v - lo[i]) % period
        if v > span[i]:
            v = period - v
        out[i] = lo[i] + v
    return out


def _simulate_distance(model, theta, s_obs, sd, pipeline, rng):
    """Standardized summary distance of one synthetic dataset; inf on failure."""
    try:
        data = model.simulate(theta, rng)
        s = pipeline.summarize(data)
    except (SimulationError, InvalidArgumentError):
        return math.inf
    return float(np.linalg.norm((s - s_obs) / sd))


def _ess(samples):
    """Autocorrelation ESS (initial positive sequence), minimum across dims."""
    n = samples.shape[0]
    if n < 3:
        return float(n)
    ess_values = []
    for j in range(samples.shape[1]):
        x = samples[:, j] - samples[:, j].mean()
        var = x @ x / n
        if var == 0:
            ess_values.append(float(n))
            continue
        acc = 0.0
        for lag in range(1, min(n - 1, 2000)):
            rho = x[lag:] @ x[:-lag] / (n * var)
            if rho <= 0:
                break
            acc += rho
        ess_values.append(n / (1.0 + 2.0 * acc))
    return float(min(ess_values))


def _tune_bandwidth(h0, run_probe, lo=0.05, hi=0.3, rounds=8):
    """Scale h until the probe acceptance rate lands in [lo, hi]."""
    h = h0
    for _ in range(rounds):
        rate = run_probe(h)
        if rate < lo:
            h *= 1.6
        elif rate > hi:
            h /= 1.6
        else:
            break
    return h


def abc_estimate(data: Dataset, model, pipeline, design: DesignBox, cfg: AbcConfig):
    """Posterior-mean ABC estimate and chain diagnostics.

    Each proposal simulates a single dataset (pseudo-marginal weight), the
    prior is uniform over the design box, and rung r runs at bandwidth
    h * sqrt(ladder[r]). Adjacent rungs swap states on a fixed round-robin
    schedule so runs are reproducible.
    """
    root = RngStream(cfg.seed, _ABC_STREAM)
    s_obs = pipeline.summarize(data)
    lo = design.lo_array
    hi = design.hi_array
    widths = design.widths
    d = design.dim
    scale = (
        np.full(d, 0.15) * widths
        if cfg.proposal_scale is None
        else np.broadcast_to(np.asarray(cfg.proposal_scale, dtype=float), (d,)).copy()
    )

    # pilot phase: summary scales and an initial bandwidth from prior draws
    if cfg.summary_sd is None or cfg.bandwidth is None:
        pilot = []
        for i in range(cfg.pilot_size):
            rng = root.substream(0, i)
            coords = design.sample(rng)
            theta = design_to_theta(model.name, coords)
            try:
                pilot.append(pipeline.summarize(model.simulate(theta, rng)))
            except (SimulationError, InvalidArgumentError):
                continue
        if len(pilot) < max(10, cfg.pilot_size // 10):
            raise ConfigError("pilot simulations failed too often to calibrate ABC")
        pilot = np.asarray(pilot)
        sd = np.maximum(pilot.std(axis=0), 1e-12)
    if cfg.summary_sd is not None:
        sd = np.asarray(cfg.summary_sd, dtype=float)

    def run_chain(h, steps, record, probe_tag=0):
        """Round-robin-tempered pseudo-marginal chains at bandwidths h*sqrt(T_r)."""
        n_rungs = len(cfg.ladder)
        h_rungs = [h * math.sqrt(t) for t in cfg.ladder]
        states = []
        for r in range(n_rungs):
            rng = root.substream(1, probe_tag, r)
            coords = design.sample(rng)
            theta = design_to_theta(model.name, coords)
            dist = _simulate_distance(model, theta, s_obs, sd, pipeline, rng.substream(1))
            states.append([coords, dist])
        accepts = np.zeros(n_rungs)
        swap_tries = 0
        swaps = 0
        cold = np.empty((steps, d))
        pair_cursor = 0
        for step in range(steps):
            for r in range(n_rungs):
                rng = root.substream(2, probe_tag, step, r)
                gen = rng.generator
                coords, dist = states[r]
                prop = np.empty(d)
                for i in range(d):
                    prop[i] = coords[i] + scale[i] * _std_normal(gen)
                prop = _reflect_into_box(prop, lo, hi)
                theta = design_to_theta(model.name, prop)
                new_dist = _simulate_distance(
                    model, theta, s_obs, sd, pipeline, rng.substream(3)
                )
                if new_dist == math.inf:
                    accept = False
                elif dist == math.inf:
                    accept = True
                else:
                    log_ratio = -0.5 * (new_dist**2 - dist**2) / h_rungs[r] ** 2
                    accept = log_ratio >= 0 or gen.random() < math.exp(
                        max(log_ratio, -700.0)
                    )
                if accept:
                    states[r] = [prop, new_dist]
                    accepts[r] += 1
            if n_rungs > 1 and (step + 1) % cfg.swap_every == 0:
                r = pair_cursor % (n_rungs - 1)
                pair_cursor += 1
                swap_tries += 1
                da, db = states[r][1], states[r + 1][1]
                if math.isinf(da) or math.isinf(db):
                    log_ratio = -math.inf
                else:
                    log_ratio = -0.5 * (
                        (db**2 - da**2) / h_rungs[r] ** 2
                        + (da**2 - db**2) / h_rungs[r + 1] ** 2
                    )
                gen = root.substream(3, probe_tag, step).generator
                if log_ratio >= 0 or gen.random() < math.exp(max(log_ratio, -700.0)):
                    states[r], states[r + 1] = states[r + 1], states[r]
                    swaps += 1
            if record:
                cold[step] = states[0][0]
        return cold, accepts / steps, swap_tries, swaps

    h = cfg.bandwidth
    if h is None:
        dists = np.linalg.norm((pilot - s_obs) / sd, axis=1)
        h0 = float(np.quantile(dists, 0.05))
        if h0 <= 0:
            h0 = float(np.quantile(dists, 0.5)) or 1.0

        def probe(h_try):
            _, acc, _, _ = run_chain(h_try, 120, record=False, probe_tag=1)
            return float(acc[0])

        h = _tune_bandwidth(h0, probe)

    cold, acc_rates, swap_tries, swaps = run_chain(h, cfg.chain_length, record=True)
    kept = cold[cfg.burn_in :]
    theta_rows = np.array([design_to_theta(model.name, c) for c in kept])
    theta_hat = theta_rows.mean(axis=0)
    ess = _ess(kept)
    diagnostics = {
        "bandwidth": float(h),
        "acceptance_rates": [float(a) for a in acc_rates],
        "swap_attempts": int(swap_tries),
        "swap_rate": float(swaps / swap_tries) if swap_tries else 0.0,
        "ess": ess,
        "kept_steps": int(kept.shape[0]),
        "posterior_sd": [float(s) for s in theta_rows.std(axis=0)],
        "warnings": [],
    }
    if not 0.01 <= acc_rates[0] <= 0.6:
        diagnostics["warnings"].append(
            f"cold-chain acceptance {acc_rates[0]:.3f} outside [0.01, 0.6]"
        )
    return theta_hat, diagnostics


# ---------------------------------------------------------------------------
# rmdr + local optimization
# ---------------------------------------------------------------------------


def rmdrlo_estimate(
    data: Dataset,
    fitted: FittedReconstructionMap,
    loglik,
    spec: ObjectiveSpec,
    tol: float = 1e-8,
) -> np.ndarray:
    """Simplex polish of -loglik starting from the clamped rmdr estimate."""
    theta0 = estimate(fitted, data, clamp=True)
    coords0 = theta_to_design(fitted.model_name, theta0)

    def objective(coords):
        return -float(loglik(design_to_theta(fitted.model_name, coords)))

    local = ObjectiveSpec(
        objective=objective, bounds=spec.bounds, budget=spec.budget, seed=spec.seed
    )
    result = nelder_mead(local, coords0, tol=tol)
    return design_to_theta(fitted.model_name, result.argmin)


def fn_gaussian_loglik(model, data: Dataset, noise_sd: float = 0.06):
    """iid Gaussian log-likelihood of voltage observations around the ODE solution."""
    y = data.series["y"]

    def loglik(theta):
        try:
            clean = model.clean_voltage(theta)
        except (SimulationError, InvalidArgumentError):
            return _PENALTY
        resid = y - clean
        m = y.shape[0]
        return -0.5 * m * math.log(2.0 * math.pi * noise_sd**2) - 0.5 * float(
            resid @ resid
        ) / noise_sd**2

    return loglik
