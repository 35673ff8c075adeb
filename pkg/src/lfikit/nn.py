"""Fully-connected network with ReLU hidden layers, trained by mini-batch Adam.

Each layer is one parameter matrix A of shape (n_out, n_in + 1) packing the
weight block and the bias column, applied as A @ (x, 1). Hidden activations
are ReLU (subgradient 0 at 0), the output layer is identity. Training uses
squared-error loss, seeded shuffling, and keeps the weight snapshot with the
lowest validation loss.
"""

import json
import struct
from dataclasses import dataclass, field

import numpy as np

from .errors import BundleFormatError, DivergenceError, InvalidArgumentError
from .rng import RngStream

#: substream tags so initialization and shuffling never share draws
_INIT_STREAM = 0x1A17
_SHUFFLE_STREAM = 0x5F0E


@dataclass
class Standardizer:
    """Per-dimension input whitening plus an affine box -> [0,1] target map."""

    in_mean: np.ndarray
    in_sd: np.ndarray
    out_lo: np.ndarray
    out_span: np.ndarray

    def transform_x(self, x):
        return (x - self.in_mean) / self.in_sd

    def transform_y(self, y):
        return (y - self.out_lo) / self.out_span

    def inverse_y(self, y):
        return self.out_lo + y * self.out_span

    @staticmethod
    def identity(k, d):
        return Standardizer(np.zeros(k), np.ones(k), np.zeros(d), np.ones(d))

    @staticmethod
    def fit(x, box_lo, box_hi, standardize_inputs=True, scale_targets=True):
        k = x.shape[1]
        lo = np.asarray(box_lo, dtype=float)
        span = np.asarray(box_hi, dtype=float) - lo
        if standardize_inputs:
            mean = x.mean(axis=0)
            sd = np.maximum(x.std(axis=0), 1e-12)
        else:
            mean, sd = np.zeros(k), np.ones(k)
        if not scale_targets:
            lo, span = np.zeros(lo.shape[0]), np.ones(lo.shape[0])
        return Standardizer(mean, sd, lo, span)


@dataclass
class MlpNetwork:
    """Weights per layer plus the (optional) standardizer fitted at train time."""

    weights: list
    standardizer: Standardizer | None = None

    @property
    def layer_sizes(self):
        sizes = [self.weights[0].shape[1] - 1]
        for a in self.weights:
            sizes.append(a.shape[0])
        return tuple(sizes)

    @property
    def input_size(self):
        return self.layer_sizes[0]

    @property
    def output_size(self):
        return self.layer_sizes[-1]

    def copy_weights(self):
        return [a.copy() for a in self.weights]


def init_network(layer_sizes, seed) -> MlpNetwork:
    """He-style uniform init (+-sqrt(6/fan_in)) with zero biases."""
    if len(layer_sizes) < 2 or any(s < 1 for s in layer_sizes):
        raise InvalidArgumentError("layer sizes need at least input and output, all >= 1")
    gen = RngStream(seed, _INIT_STREAM).generator
    weights = []
    for fan_in, fan_out in zip(layer_sizes[:-1], layer_sizes[1:]):
        bound = np.sqrt(6.0 / fan_in)
        a = np.zeros((fan_out, fan_in + 1))
        a[:, :-1] = gen.uniform(-bound, bound, size=(fan_out, fan_in))
        weights.append(a)
    return MlpNetwork(weights)


def forward_batch(net: MlpNetwork, x) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if x.ndim != 2 or x.shape[1] != net.input_size:
        raise InvalidArgumentError(
            f"input has shape {x.shape}, network expects (*, {net.input_size})"
        )
    h = x
    last = len(net.weights) - 1
    for layer, a in enumerate(net.weights):
        z = h @ a[:, :-1].T + a[:, -1]
        h = np.maximum(z, 0.0) if layer < last else z
    return h


def forward(net: MlpNetwork, x) -> np.ndarray:
    """Single-input composition of affine maps and activations."""
    x = np.asarray(x, dtype=float)
    if x.ndim != 1:
        raise InvalidArgumentError("forward expects a 1-d input vector")
    return forward_batch(net, x[None, :])[0]


def loss_and_gradient(net: MlpNetwork, x, y):
    """Mean over the batch of ||out - target||^2, and its exact gradient."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.ndim != 2 or y.ndim != 2 or x.shape[0] != y.shape[0] or x.shape[0] == 0:
        raise InvalidArgumentError("batch must be non-empty with aligned rows")
    if y.shape[1] != net.output_size:
        raise InvalidArgumentError(
            f"targets have width {y.shape[1]}, network outputs {net.output_size}"
        )
    n = x.shape[0]
    last = len(net.weights) - 1
    pre = []
    acts = [x]
    h = x
    for layer, a in enumerate(net.weights):
        z = h @ a[:, :-1].T + a[:, -1]
        h = np.maximum(z, 0.0) if layer < last else z
        pre.append(z)
        acts.append(h)
    diff = h - y
    loss = float(np.sum(diff * diff)) / n
    grads = [None] * len(net.weights)
    delta = 2.0 * diff / n
    for layer in range(last, -1, -1):
        gw = delta.T @ acts[layer]
        gb = delta.sum(axis=0)
        grads[layer] = np.hstack([gw, gb[:, None]])
        if layer > 0:
            delta = (delta @ net.weights[layer][:, :-1]) * (pre[layer - 1] > 0.0)
    return loss, grads


@dataclass
class AdamState:
    m: list
    v: list
    step: int = 0
    alpha: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8

    @staticmethod
    def for_network(net, alpha=1e-3, beta1=0.9, beta2=0.999, epsilon=1e-8):
        return AdamState(
            m=[np.zeros_like(a) for a in net.weights],
            v=[np.zeros_like(a) for a in net.weights],
            alpha=alpha,
            beta1=beta1,
            beta2=beta2,
            epsilon=epsilon,
        )


def adam_step(state: AdamState, net: MlpNetwork, grads):
    """One bias-corrected Adam update, applied in place."""
    if len(grads) != len(net.weights):
        raise InvalidArgumentError("gradient list does not match network layers")
    state.step += 1
    b1c = 1.0 - state.beta1**state.step
    b2c = 1.0 - state.beta2**state.step
    for i, g in enumerate(grads):
        state.m[i] = state.beta1 * state.m[i] + (1.0 - state.beta1) * g
        state.v[i] = state.beta2 * state.v[i] + (1.0 - state.beta2) * g * g
        m_hat = state.m[i] / b1c
        v_hat = state.v[i] / b2c
        net.weights[i] -= state.alpha * m_hat / (np.sqrt(v_hat) + state.epsilon)
    return net, state


@dataclass
class TrainConfig:
    batch_size: int = 128
    max_epochs: int = 500
    patience: int = 25
    alpha: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8
    standardize_inputs: bool = True
    scale_targets: bool = True
    hidden: tuple = (32, 32)
    seed: int = 0

    def __post_init__(self):
        self.hidden = tuple(int(h) for h in self.hidden)
        if self.batch_size < 1:
            raise InvalidArgumentError("batch_size must be >= 1")
        if self.patience > self.max_epochs:
            raise InvalidArgumentError("patience cannot exceed max_epochs")

    def digest(self) -> str:
        return json.dumps(
            {k: list(v) if isinstance(v, tuple) else v for k, v in self.__dict__.items()},
            sort_keys=True,
        )


@dataclass
class TrainHistory:
    rows: list = field(default_factory=list)  # (epoch, train_loss, val_loss)
    best_epoch: int = 0

    def to_csv(self, path):
        with open(path, "w", newline="") as fh:
            fh.write("epoch,train_loss,val_loss\n")
            for epoch, tr, vl in self.rows:
                fh.write(f"{epoch},{tr!r},{vl!r}\n")


def _epoch_loss(net, x, y):
    out = forward_batch(net, x)
    diff = out - y
    return float(np.sum(diff * diff)) / x.shape[0]


def train(net: MlpNetwork, x_train, y_train, x_val, y_val, cfg: TrainConfig):
    """Mini-batch Adam with per-epoch reshuffling and validation early stopping.

    Inputs and targets are given in standardized space; the caller owns the
    Standardizer. Returns the weight snapshot with minimum validation loss
    and the per-epoch loss history.
    """
    x_train = np.asarray(x_train, dtype=float)
    y_train = np.asarray(y_train, dtype=float)
    x_val = np.asarray(x_val, dtype=float)
    y_val = np.asarray(y_val, dtype=float)
    if x_train.shape[0] == 0 or x_val.shape[0] == 0:
        raise InvalidArgumentError("training and validation sets must be non-empty")
    n = x_train.shape[0]
    shuffle_gen = RngStream(cfg.seed, _SHUFFLE_STREAM).generator
    state = AdamState.for_network(
        net, alpha=cfg.alpha, beta1=cfg.beta1, beta2=cfg.beta2, epsilon=cfg.epsilon
    )
    history = TrainHistory()
    best_val = np.inf
    best_weights = net.copy_weights()
    since_best = 0
    for epoch in range(1, cfg.max_epochs + 1):
        perm = shuffle_gen.permutation(n)
        for start in range(0, n, cfg.batch_size):
            idx = perm[start : start + cfg.batch_size]
            loss, grads = loss_and_gradient(net, x_train[idx], y_train[idx])
            if not np.isfinite(loss):
                raise DivergenceError(f"training loss diverged at epoch {epoch}", epoch=epoch)
            adam_step(state, net, grads)
        train_loss = _epoch_loss(net, x_train, y_train)
        val_loss = _epoch_loss(net, x_val, y_val)
        if not (np.isfinite(train_loss) and np.isfinite(val_loss)):
            raise DivergenceError(f"loss diverged at epoch {epoch}", epoch=epoch)
        history.rows.append((epoch, train_loss, val_loss))
        if val_loss < best_val:
            best_val = val_loss
            best_weights = net.copy_weights()
            history.best_epoch = epoch
            since_best = 0
        else:
            since_best += 1
            if since_best > cfg.patience:
                break
    net.weights = best_weights
    return net, history


# ---------------------------------------------------------------------------
# fitted-bundle persistence: "LFIM" container
# ---------------------------------------------------------------------------

_MAGIC = b"LFIM"
_VERSION = 1


@dataclass
class ModelBundle:
    network: MlpNetwork
    manifest: str
    provenance: dict


def save_model(net: MlpNetwork, manifest: str, path, provenance=None, standardizer=None):
    """Write network weights, summary manifest, and scaling constants."""
    standardizer = standardizer if standardizer is not None else net.standardizer
    if standardizer is None:
        standardizer = Standardizer.identity(net.input_size, net.output_size)
    manifest_bytes = manifest.encode("utf-8")
    prov_bytes = json.dumps(provenance or {}, sort_keys=True).encode("utf-8")
    sizes = net.layer_sizes
    with open(path, "wb") as fh:
        fh.write(_MAGIC)
        fh.write(struct.pack("<I", _VERSION))
        fh.write(struct.pack("<I", len(manifest_bytes)))
        fh.write(manifest_bytes)
        fh.write(struct.pack("<I", len(prov_bytes)))
        fh.write(prov_bytes)
        fh.write(struct.pack("<I", len(sizes)))
        fh.write(struct.pack(f"<{len(sizes)}I", *sizes))
        for arr in (
            standardizer.in_mean,
            standardizer.in_sd,
            standardizer.out_lo,
            standardizer.out_span,
        ):
            fh.write(struct.pack("<I", arr.shape[0]))
            fh.write(np.asarray(arr, dtype="<f8").tobytes())
        for a in net.weights:
            fh.write(np.asarray(a, dtype="<f8").tobytes())


def load_model(path) -> ModelBundle:
    with open(path, "rb") as fh:
        raw = fh.read()
    if raw[:4] != _MAGIC:
        raise BundleFormatError(f"bad magic bytes {raw[:4]!r}, expected {_MAGIC!r}")
    off = 4
    (version,) = struct.unpack_from("<I", raw, off)
    off += 4
    if version != _VERSION:
        raise BundleFormatError(f"unsupported bundle version {version}")

    def read_block():
        nonlocal off
        (length,) = struct.unpack_from("<I", raw, off)
        off2 = off + 4
        block = raw[off2 : off2 + length]
        if len(block) != length:
            raise BundleFormatError("truncated bundle")
        off = off2 + length
        return block

    manifest = read_block().decode("utf-8")
    provenance = json.loads(read_block().decode("utf-8"))
    (n_sizes,) = struct.unpack_from("<I", raw, off)
    off += 4
    sizes = struct.unpack_from(f"<{n_sizes}I", raw, off)
    off += 4 * n_sizes

    def read_f64():
        nonlocal off
        (count,) = struct.unpack_from("<I", raw, off)
        off += 4
        arr = np.frombuffer(raw, dtype="<f8", count=count, offset=off).copy()
        off += 8 * count
        if arr.shape[0] != count:
            raise BundleFormatError("truncated bundle")
        return arr

    standardizer = Standardizer(read_f64(), read_f64(), read_f64(), read_f64())
    weights = []
    for fan_in, fan_out in zip(sizes[:-1], sizes[1:]):
        count = fan_out * (fan_in + 1)
        arr = np.frombuffer(raw, dtype="<f8", count=count, offset=off)
        if arr.shape[0] != count:
            raise BundleFormatError("truncated bundle: missing weights")
        off += 8 * count
        weights.append(arr.reshape(fan_out, fan_in + 1).copy())
    net = MlpNetwork(weights, standardizer=standardizer)
    return ModelBundle(network=net, manifest=manifest, provenance=provenance)
