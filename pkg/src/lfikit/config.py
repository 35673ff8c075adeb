"""Declarative experiment configuration: a flat, sectioned key-value file.

The format is INI with a pinned schema version, a closed key set (unknown
keys are rejected), and a canonical emitter: parse -> emit is stable and
idempotent, which makes configs diff-friendly provenance records. Presets
encode the shipped experiment protocols at two scales, ``*-paper`` (full,
hours) and ``*-desk`` (minutes).
"""

import configparser
import io
import os

import numpy as np

from .errors import ConfigError
from .estimators import AbcConfig, SleConfig
from .evaluation import TestGrid, fn_grid
from .nn import TrainConfig
from .simulators import DesignBox, get_model
from .summaries import get_pipeline
from .toys import GaussianMeanModel

SCHEMA_VERSION = 1

#: canonical section order for emission
_SECTIONS = (
    "lfi",
    "model",
    "design",
    "pipeline",
    "train",
    "grid",
    "estimators",
    "sle",
    "abc",
    "rmdrlo",
    "bootstrap",
)

#: closed key sets per section
_KNOWN = {
    "lfi": {"schema", "seed", "outdir", "jobs"},
    "model": {
        "name",
        "m",
        "n0",
        "n",
        "u0",
        "v0",
        "t_end",
        "grid_points",
        "max_events",
        "n_obs",
        "spacing",
        "noise_sd",
        "tau",
        "zeta",
        "step",
        "sd",
        "lo",
        "hi",
    },
    "design": {"lo", "hi"},
    "pipeline": {"name", "k"},
    "train": {
        "n",
        "batch_size",
        "max_epochs",
        "patience",
        "alpha",
        "beta1",
        "beta2",
        "epsilon",
        "standardize_inputs",
        "scale_targets",
        "hidden",
    },
    "grid": {"mode", "q", "l", "points", "stride"},
    "estimators": {"use"},
    "sle": {"n_s", "budget"},
    "abc": {
        "bandwidth",
        "chain_length",
        "burn_in",
        "ladder",
        "proposal_scale",
        "pilot_size",
        "swap_every",
    },
    "rmdrlo": {"budget", "noise_sd"},
    "bootstrap": {"b", "alpha", "region"},
}

_MODEL_OPTION_KEYS = {
    "ricker": {"m", "n0"},
    "mg1": {"n"},
    "lv": {"u0", "v0", "t_end", "grid_points", "max_events"},
    "fn": {"n_obs", "spacing", "noise_sd", "tau", "zeta", "step"},
    "gaussian_toy": {"m", "sd", "lo", "hi"},
}

_INT_MODEL_KEYS = {"m", "n", "u0", "v0", "grid_points", "max_events", "n_obs"}


class ExperimentConfig:
    """Validated (section, key) -> string values with typed accessors."""

    def __init__(self, values: dict):
        self.values = dict(values)
        self._validate()

    # -- construction -----------------------------------------------------

    @staticmethod
    def from_text(text: str) -> "ExperimentConfig":
        parser = configparser.ConfigParser(interpolation=None)
        try:
            parser.read_string(text)
        except configparser.Error as exc:
            raise ConfigError(f"cannot parse config: {exc}") from None
        values = {}
        for section in parser.sections():
            if section not in _KNOWN:
                raise ConfigError(f"unknown section [{section}]")
            for key, value in parser.items(section):
                if key not in _KNOWN[section]:
                    raise ConfigError(f"unknown key {key!r} in section [{section}]")
                values[(section, key)] = value.strip()
        return ExperimentConfig(values)

    @staticmethod
    def from_file(path) -> "ExperimentConfig":
        try:
            with open(path) as fh:
                text = fh.read()
        except OSError as exc:
            raise ConfigError(f"cannot read config file: {exc}") from None
        return ExperimentConfig.from_text(text)

    def _validate(self):
        for section, key in self.values:
            if section not in _KNOWN or key not in _KNOWN[section]:
                raise ConfigError(f"unknown key {key!r} in section [{section}]")
        schema = self._get_int("lfi", "schema", SCHEMA_VERSION)
        if schema != SCHEMA_VERSION:
            raise ConfigError(f"unsupported config schema {schema}")
        # normalize every stored value through its typed accessor
        self.model_name()
        self.seed()
        self.jobs()

    # -- raw getters -------------------------------------------------------

    def _get(self, section, key, default=None):
        return self.values.get((section, key), default)

    def _get_int(self, section, key, default):
        raw = self._get(section, key)
        if raw is None:
            return default
        try:
            return int(raw)
        except ValueError:
            raise ConfigError(f"[{section}] {key} must be an integer, got {raw!r}") from None

    def _get_float(self, section, key, default):
        raw = self._get(section, key)
        if raw is None:
            return default
        try:
            return float(raw)
        except ValueError:
            raise ConfigError(f"[{section}] {key} must be a number, got {raw!r}") from None

    def _get_bool(self, section, key, default):
        raw = self._get(section, key)
        if raw is None:
            return default
        low = raw.lower()
        if low in ("1", "true", "yes", "on"):
            return True
        if low in ("0", "false", "no", "off"):
            return False
        raise ConfigError(f"[{section}] {key} must be a boolean, got {raw!r}")

    def _get_floats(self, section, key):
        raw = self._get(section, key)
        if raw is None:
            return None
        try:
            return tuple(float(v) for v in raw.split(",") if v.strip() != "")
        except ValueError:
            raise ConfigError(f"[{section}] {key} must be comma-separated numbers") from None

    # -- typed accessors ---------------------------------------------------

    def seed(self) -> int:
        env = os.environ.get("LFI_SEED")
        if env is not None:
            try:
                return int(env)
            except ValueError:
                raise ConfigError(f"LFI_SEED must be an integer, got {env!r}") from None
        return self._get_int("lfi", "seed", 0)

    def jobs(self) -> int:
        jobs = self._get_int("lfi", "jobs", 1)
        if jobs < 1:
            raise ConfigError("jobs must be >= 1")
        return jobs

    def outdir(self, override=None) -> str:
        return override or self._get("lfi", "outdir", "out")

    def model_name(self) -> str:
        return self._get("model", "name", "ricker")

    def build_model(self):
        name = self.model_name()
        known = _MODEL_OPTION_KEYS.get(name)
        if known is None:
            raise ConfigError(f"unknown model {name!r}")
        options = {}
        for key in known:
            raw = self._get("model", key)
            if raw is None:
                continue
            options[key] = int(raw) if key in _INT_MODEL_KEYS else float(raw)
        if name == "gaussian_toy":
            return GaussianMeanModel(**options)
        return get_model(name, **options)

    def design(self, model) -> DesignBox:
        lo = self._get_floats("design", "lo")
        hi = self._get_floats("design", "hi")
        if lo is None and hi is None:
            return model.design
        if lo is None or hi is None:
            raise ConfigError("[design] needs both lo and hi")
        return DesignBox(lo=lo, hi=hi)

    def pipeline_name(self) -> str:
        return self._get("pipeline", "name", self.model_name())

    def build_pipeline(self):
        name = self.pipeline_name()
        if name == "none":
            return None
        options = {}
        k = self._get_int("pipeline", "k", 0)
        if k:
            options["k"] = k
        return get_pipeline(name, **options)

    def train_config(self) -> TrainConfig:
        hidden = self._get("train", "hidden")
        if hidden is not None:
            try:
                hidden = tuple(int(v) for v in hidden.split(",") if v.strip() != "")
            except ValueError:
                raise ConfigError("[train] hidden must be comma-separated integers") from None
        else:
            hidden = (32, 32)
        return TrainConfig(
            batch_size=self._get_int("train", "batch_size", 128),
            max_epochs=self._get_int("train", "max_epochs", 500),
            patience=self._get_int("train", "patience", 25),
            alpha=self._get_float("train", "alpha", 1e-3),
            beta1=self._get_float("train", "beta1", 0.9),
            beta2=self._get_float("train", "beta2", 0.999),
            epsilon=self._get_float("train", "epsilon", 1e-8),
            standardize_inputs=self._get_bool("train", "standardize_inputs", True),
            scale_targets=self._get_bool("train", "scale_targets", True),
            hidden=hidden,
            seed=self.seed(),
        )

    def train_n(self, override=None) -> int:
        n = override if override is not None else self._get_int("train", "n", 2000)
        if n < 4:
            raise ConfigError("training size must be at least 4")
        return n

    def grid(self, model, design) -> TestGrid:
        mode = self._get("grid", "mode", "uniform")
        l = self._get_int("grid", "l", 10)
        seed = self.seed() + 1  # test data never reuses training randomness
        if mode == "uniform":
            q = self._get_int("grid", "q", 30)
            return TestGrid.uniform(model.name, design, q, l, seed)
        if mode == "explicit":
            raw = self._get("grid", "points")
            if not raw:
                raise ConfigError("[grid] explicit mode needs points")
            try:
                points = [
                    [float(v) for v in chunk.split(",")]
                    for chunk in raw.split(";")
                    if chunk.strip()
                ]
            except ValueError:
                raise ConfigError("[grid] points must be 'a,b,c; d,e,f; ...'") from None
            return TestGrid.explicit(np.asarray(points), l, seed)
        if mode == "fn-grid":
            stride = self._get_int("grid", "stride", 5)
            return TestGrid.explicit(fn_grid(stride), l, seed)
        raise ConfigError(f"unknown grid mode {mode!r}")

    def estimator_names(self):
        raw = self._get("estimators", "use", "rmdr")
        names = [n.strip() for n in raw.split(",") if n.strip()]
        if not names:
            raise ConfigError("[estimators] use must list at least one estimator")
        valid = {"rm", "rmdr", "sle", "abc", "rmdrlo"}
        for n in names:
            if n not in valid:
                raise ConfigError(f"unknown estimator {n!r}; valid: {sorted(valid)}")
        return names

    def sle_config(self) -> SleConfig:
        return SleConfig(
            n_s=self._get_int("sle", "n_s", 100),
            budget=self._get_int("sle", "budget", 0) or None,
            seed=self.seed() + 2,
        )

    def abc_config(self) -> AbcConfig:
        ladder = self._get_floats("abc", "ladder") or (1.0, 2.0, 4.0, 8.0)
        scale = self._get_floats("abc", "proposal_scale")
        bandwidth = self._get_float("abc", "bandwidth", 0.0) or None
        return AbcConfig(
            bandwidth=bandwidth,
            chain_length=self._get_int("abc", "chain_length", 3000),
            burn_in=self._get_int("abc", "burn_in", 500),
            ladder=ladder,
            proposal_scale=np.asarray(scale) if scale else None,
            pilot_size=self._get_int("abc", "pilot_size", 500),
            swap_every=self._get_int("abc", "swap_every", 10),
            seed=self.seed() + 3,
        )

    def rmdrlo_budget(self):
        return self._get_int("rmdrlo", "budget", 0) or None

    def rmdrlo_noise_sd(self) -> float:
        return self._get_float("rmdrlo", "noise_sd", 0.06)

    def bootstrap_b(self, override=None) -> int:
        return override if override is not None else self._get_int("bootstrap", "b", 200)

    def bootstrap_alpha(self, override=None) -> float:
        return override if override is not None else self._get_float("bootstrap", "alpha", 0.1)

    def bootstrap_region(self) -> bool:
        return self._get_bool("bootstrap", "region", False)

    # -- canonical emission --------------------------------------------------

    def canonical_text(self) -> str:
        out = io.StringIO()
        values = dict(self.values)
        values.setdefault(("lfi", "schema"), str(SCHEMA_VERSION))
        sections = [s for s in _SECTIONS if any(k[0] == s for k in values)]
        for section in sections:
            out.write(f"[{section}]\n")
            for (sec, key), value in sorted(values.items()):
                if sec == section:
                    out.write(f"{key} = {value}\n")
            out.write("\n")
        return out.getvalue()

    def write(self, path):
        with open(path, "w") as fh:
            fh.write(self.canonical_text())


# ---------------------------------------------------------------------------
# presets: the shipped experiment protocols
# ---------------------------------------------------------------------------


def _preset(*value_dicts):
    values = {("lfi", "schema"): str(SCHEMA_VERSION), ("lfi", "seed"): "2024"}
    for block in value_dicts:
        values.update(block)
    return {k: str(v) for k, v in values.items()}


_RICKER_TABLE_POINTS = "2.5,0.2,1.5; 4,0.2,3; 4.5,0.2,3.5"

PRESETS = {
    "ricker-paper": _preset(
        {("model", "name"): "ricker"},
        {
            ("train", "n"): 125000,
            ("train", "max_epochs"): 500,
            ("grid", "mode"): "uniform",
            ("grid", "q"): 1000,
            ("grid", "l"): 100,
            ("estimators", "use"): "rm,rmdr",
        },
    ),
    "ricker-desk": _preset(
        {("model", "name"): "ricker"},
        {
            ("train", "n"): 20000,
            ("train", "max_epochs"): 160,
            ("train", "patience"): 20,
            ("grid", "mode"): "uniform",
            ("grid", "q"): 30,
            ("grid", "l"): 10,
            ("estimators", "use"): "rm,rmdr",
        },
    ),
    "ricker-table1-paper": _preset(
        {("model", "name"): "ricker"},
        {
            ("train", "n"): 125000,
            ("grid", "mode"): "explicit",
            ("grid", "points"): _RICKER_TABLE_POINTS,
            ("grid", "l"): 100,
            ("estimators", "use"): "rm,rmdr,sle,abc",
        },
    ),
    "ricker-table1-desk": _preset(
        {("model", "name"): "ricker"},
        {
            ("train", "n"): 20000,
            ("train", "max_epochs"): 160,
            ("train", "patience"): 20,
            ("grid", "mode"): "explicit",
            ("grid", "points"): _RICKER_TABLE_POINTS,
            ("grid", "l"): 20,
            ("estimators", "use"): "rm,rmdr,sle,abc",
            ("sle", "budget"): 500,
            ("abc", "chain_length"): 2500,
            ("abc", "burn_in"): 500,
        },
    ),
    "mg1-paper": _preset(
        {("model", "name"): "mg1"},
        {
            ("train", "n"): 125000,
            ("grid", "mode"): "uniform",
            ("grid", "q"): 1000,
            ("grid", "l"): 100,
            ("estimators", "use"): "rm,rmdr",
        },
    ),
    "mg1-desk": _preset(
        {("model", "name"): "mg1"},
        {
            ("train", "n"): 20000,
            ("train", "max_epochs"): 160,
            ("train", "patience"): 20,
            ("grid", "mode"): "uniform",
            ("grid", "q"): 30,
            ("grid", "l"): 10,
            ("estimators", "use"): "rm,rmdr",
        },
    ),
    "lv-paper": _preset(
        {("model", "name"): "lv"},
        {
            ("train", "n"): 125000,
            ("grid", "mode"): "uniform",
            ("grid", "q"): 200,
            ("grid", "l"): 100,
            ("estimators", "use"): "rm,rmdr",
        },
    ),
    "lv-desk": _preset(
        {("model", "name"): "lv"},
        {
            ("train", "n"): 2000,
            ("train", "max_epochs"): 120,
            ("train", "patience"): 20,
            ("grid", "mode"): "uniform",
            ("grid", "q"): 8,
            ("grid", "l"): 5,
            ("estimators", "use"): "rmdr",
        },
    ),
    "fn-grid-paper": _preset(
        {("model", "name"): "fn"},
        {
            ("pipeline", "k"): 51,
            ("train", "n"): 125000,
            ("grid", "mode"): "fn-grid",
            ("grid", "stride"): 1,
            ("grid", "l"): 100,
            ("estimators", "use"): "rm,rmdr",
        },
    ),
    "fn-grid-desk": _preset(
        {("model", "name"): "fn"},
        {
            ("pipeline", "k"): 51,
            ("train", "n"): 20000,
            ("train", "max_epochs"): 160,
            ("train", "patience"): 20,
            ("grid", "mode"): "fn-grid",
            ("grid", "stride"): 5,
            ("grid", "l"): 5,
            ("estimators", "use"): "rmdr",
        },
    ),
    "fn-rmdrlo-desk": _preset(
        {("model", "name"): "fn"},
        {
            ("pipeline", "k"): 51,
            ("train", "n"): 20000,
            ("train", "max_epochs"): 160,
            ("train", "patience"): 20,
            ("grid", "mode"): "fn-grid",
            ("grid", "stride"): 10,
            ("grid", "l"): 3,
            ("estimators", "use"): "rmdr,rmdrlo",
            ("rmdrlo", "budget"): 60,
        },
    ),
}


def preset_config(name: str) -> ExperimentConfig:
    try:
        values = PRESETS[name]
    except KeyError:
        raise ConfigError(f"unknown preset {name!r}; available: {sorted(PRESETS)}") from None
    return ExperimentConfig(
        {tuple(k) if isinstance(k, tuple) else k: v for k, v in values.items()}
    )
