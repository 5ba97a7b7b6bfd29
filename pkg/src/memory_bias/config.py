"""Experiment configuration: TOML tables mapped onto nested dataclasses.

Defaults reproduce the synthetic-task setup (L = 64, dt = 0.1, Adam 1e-3,
131072/32768 samples, batches 512/2048). Validation collects every problem
before raising, so a bad file is reported in one pass.
"""

import dataclasses
import hashlib
import json
import math
import types
import typing
from dataclasses import dataclass, field
from pathlib import Path

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib
import tomli_w

from .errors import ConfigError
from .losses import ERROR_KINDS, FAMILIES, NORMALIZATIONS
from .models import ACTIVATIONS

INF = math.inf


@dataclass
class KernelConfig:
    kind: str = "poly"
    power: float = 1.1
    offset: typing.Optional[float] = None
    alpha: float = 0.5
    values: typing.Optional[list[float]] = None

    def check(self, problems, prefix):
        if self.kind not in ("poly", "exponential", "tabulated"):
            problems.append(f"{prefix}.kind: unknown kernel kind {self.kind!r}")
        if self.kind == "poly" and not self.power > 0:
            problems.append(f"{prefix}.power: must be > 0")
        if self.offset is not None and not self.offset > 0:
            problems.append(f"{prefix}.offset: must be > 0")
        if self.kind == "exponential" and not 0 < self.alpha < 1:
            problems.append(f"{prefix}.alpha: must lie in (0, 1)")
        if self.kind == "tabulated" and not self.values:
            problems.append(f"{prefix}.values: required for tabulated kernels")

    def to_spec(self):
        if self.kind == "poly":
            spec = {"kind": "poly", "power": self.power}
            if self.offset is not None:
                spec["offset"] = self.offset
            return spec
        if self.kind == "exponential":
            return {"kind": "exponential", "alpha": self.alpha}
        return {"kind": "tabulated", "values": list(self.values)}


@dataclass
class ModelConfig:
    kind: str = "rnn"
    activation: str = "identity"
    hidden: int = 4
    shift: float = 1.0
    channels: list[int] = field(default_factory=lambda: [32, 32])
    width: int = 2
    dilations: typing.Optional[list[int]] = None
    bias: bool = True

    def check(self, problems, prefix):
        if self.kind not in ("rnn", "tcn"):
            problems.append(f"{prefix}.kind: unknown model kind {self.kind!r}")
        if self.activation not in ACTIVATIONS:
            problems.append(f"{prefix}.activation: expected one of {ACTIVATIONS}")
        if self.hidden < 1:
            problems.append(f"{prefix}.hidden: must be >= 1")
        if self.width < 1:
            problems.append(f"{prefix}.width: must be >= 1")
        if any(c < 1 for c in self.channels):
            problems.append(f"{prefix}.channels: widths must be >= 1")
        if self.dilations is not None:
            if len(self.dilations) != len(self.channels) + 1:
                problems.append(f"{prefix}.dilations: need len(channels) + 1 entries")
            if any(d < 1 for d in self.dilations):
                problems.append(f"{prefix}.dilations: must be >= 1")


@dataclass
class LossConfig:
    family: str = "poly"
    p: float = 0.0
    normalization: str = "bias_integral"
    error: str = "absolute"

    def check(self, problems, prefix):
        if self.family not in FAMILIES:
            problems.append(f"{prefix}.family: expected one of {FAMILIES}")
        if self.normalization not in NORMALIZATIONS:
            problems.append(f"{prefix}.normalization: expected one of {NORMALIZATIONS}")
        if self.error not in ERROR_KINDS:
            problems.append(f"{prefix}.error: expected one of {ERROR_KINDS}")
        if self.family == "poly" and (math.isnan(self.p) or self.p < -1):
            problems.append(f"{prefix}.p: must be >= -1")

    @property
    def power(self):
        return INF if self.family == "last" else self.p


@dataclass
class OptimizerConfig:
    name: str = "adam"
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    def check(self, problems, prefix):
        if self.name not in ("adam", "sgd"):
            problems.append(f"{prefix}.name: expected 'adam' or 'sgd'")
        if not self.lr > 0:
            problems.append(f"{prefix}.lr: must be > 0")
        if not (0 <= self.beta1 < 1 and 0 <= self.beta2 < 1):
            problems.append(f"{prefix}.beta1/beta2: must lie in [0, 1)")
        if not self.eps > 0:
            problems.append(f"{prefix}.eps: must be > 0")


@dataclass
class CopyingConfig:
    n_symbols: int = 10
    payload_len: int = 10
    delay: int = 20

    def check(self, problems, prefix):
        if self.n_symbols < 3:
            problems.append(f"{prefix}.n_symbols: must be >= 3")
        if self.payload_len < 1:
            problems.append(f"{prefix}.payload_len: must be >= 1")
        if self.delay < 0:
            problems.append(f"{prefix}.delay: must be >= 0")

    @property
    def length(self):
        return 2 * self.payload_len + self.delay


@dataclass
class SensitivityConfig:
    p_grid: list[float] = field(default_factory=lambda: [0.5 * i for i in range(12)])
    n_steps: list[int] = field(default_factory=lambda: [1, 16])
    lr: float = 0.1

    def check(self, problems, prefix):
        if not self.p_grid:
            problems.append(f"{prefix}.p_grid: must not be empty")
        if any(math.isnan(p) or p < -1 for p in self.p_grid):
            problems.append(f"{prefix}.p_grid: powers must be >= -1")
        if any(n < 0 for n in self.n_steps):
            problems.append(f"{prefix}.n_steps: must be >= 0")
        if not self.lr > 0:
            problems.append(f"{prefix}.lr: must be > 0")


@dataclass
class BiasCurveConfig:
    p_values: list[float] = field(default_factory=lambda: [-1.0, 0.0, 1.0, 2.0, INF])

    def check(self, problems, prefix):
        if not self.p_values:
            problems.append(f"{prefix}.p_values: must not be empty")
        if any(math.isnan(p) or p < -1 for p in self.p_values):
            problems.append(f"{prefix}.p_values: powers must be >= -1")


@dataclass
class BiasOracleConfig:
    p_values: list[float] = field(default_factory=lambda: [0.0, 1.0, 2.0, INF])
    lags: typing.Optional[list[int]] = None
    n_samples: int = 100_000
    magnitude: float = 1.0
    tolerance: float = 0.02

    def check(self, problems, prefix):
        if self.n_samples < 1:
            problems.append(f"{prefix}.n_samples: must be >= 1")
        if not self.magnitude > 0:
            problems.append(f"{prefix}.magnitude: must be > 0")
        if not self.tolerance > 0:
            problems.append(f"{prefix}.tolerance: must be > 0")
        if self.lags is not None and len(set(self.lags)) < 2:
            problems.append(f"{prefix}.lags: need at least two distinct lags")
        if any(math.isnan(p) or p < -1 for p in self.p_values):
            problems.append(f"{prefix}.p_values: powers must be >= -1")

    def lag_list(self, length):
        if self.lags is not None:
            return list(self.lags)
        return [0, length // 4, length // 2, 3 * length // 4]


@dataclass
class ExperimentConfig:
    task: str = "synthetic"
    seed: int = 0
    seq_len: int = 64
    dt: float = 0.1
    train_size: int = 131072
    test_size: int = 32768
    train_batch: int = 512
    test_batch: int = 2048
    epochs: int = 50
    checkpoint: typing.Optional[str] = None
    kernel: KernelConfig = field(default_factory=KernelConfig)
    model: ModelConfig = field(default_factory=ModelConfig)
    loss: LossConfig = field(default_factory=LossConfig)
    optimizer: OptimizerConfig = field(default_factory=OptimizerConfig)
    copying: CopyingConfig = field(default_factory=CopyingConfig)
    sensitivity: SensitivityConfig = field(default_factory=SensitivityConfig)
    bias_curve: BiasCurveConfig = field(default_factory=BiasCurveConfig)
    bias_oracle: BiasOracleConfig = field(default_factory=BiasOracleConfig)

    @property
    def length(self):
        """Sequence length actually used by the task."""
        return self.copying.length if self.task == "copying" else self.seq_len

    @property
    def horizon(self):
        return self.seq_len * self.dt

    def problems(self):
        problems = []
        if self.task not in ("synthetic", "copying"):
            problems.append(f"task: expected 'synthetic' or 'copying', got {self.task!r}")
        for name in ("seq_len", "train_size", "test_size", "train_batch", "test_batch"):
            if getattr(self, name) < 1:
                problems.append(f"{name}: must be >= 1")
        if self.epochs < 0:
            problems.append("epochs: must be >= 0")
        if not (self.dt > 0 and math.isfinite(self.dt)):
            problems.append("dt: must be a positive finite number")
        if self.train_batch > self.train_size:
            problems.append("train_batch: must not exceed train_size")
        if self.test_batch > self.test_size:
            problems.append("test_batch: must not exceed test_size")
        for section in ("kernel", "model", "loss", "optimizer", "copying", "sensitivity",
                        "bias_curve", "bias_oracle"):
            getattr(self, section).check(problems, section)
        return problems

    def validate(self):
        problems = self.problems()
        if problems:
            raise ConfigError(problems)
        return self

    def to_dict(self):
        return _strip_none(dataclasses.asdict(self))

    def to_toml(self):
        return tomli_w.dumps(self.to_dict())

    def hash(self):
        blob = json.dumps(self.to_dict(), sort_keys=True)
        return hashlib.sha256(blob.encode()).hexdigest()[:16]


def _strip_none(obj):
    if isinstance(obj, dict):
        return {k: _strip_none(v) for k, v in obj.items() if v is not None}
    return obj


def _type_ok(value, tp):
    origin = typing.get_origin(tp)
    if origin in (typing.Union, types.UnionType):
        return any(_type_ok(value, arg) for arg in typing.get_args(tp))
    if tp is type(None):
        return value is None
    if origin is list:
        (item,) = typing.get_args(tp)
        return isinstance(value, list) and all(_type_ok(v, item) for v in value)
    if tp is float:
        return isinstance(value, (int, float)) and not isinstance(value, bool)
    if tp is int:
        return isinstance(value, int) and not isinstance(value, bool)
    return isinstance(value, tp)


def _coerce(value, tp):
    # ints written where floats are expected become floats
    origin = typing.get_origin(tp)
    if tp is float:
        return float(value)
    if origin is list and typing.get_args(tp) == (float,):
        return [float(v) for v in value]
    if origin in (typing.Union, types.UnionType) and value is not None:
        inner = [a for a in typing.get_args(tp) if a is not type(None)]
        return _coerce(value, inner[0])
    return value


def _build(cls, data, prefix, problems):
    if not isinstance(data, dict):
        problems.append(f"{prefix or 'config'}: expected a table")
        return cls()
    hints = typing.get_type_hints(cls)
    names = {f.name for f in dataclasses.fields(cls)}
    for key in data:
        if key not in names:
            problems.append(f"{prefix}{key}: unknown field")
    kwargs = {}
    for f in dataclasses.fields(cls):
        if f.name not in data:
            continue
        value, tp = data[f.name], hints[f.name]
        if dataclasses.is_dataclass(tp):
            kwargs[f.name] = _build(tp, value, f"{prefix}{f.name}.", problems)
        elif _type_ok(value, tp):
            kwargs[f.name] = _coerce(value, tp)
        else:
            problems.append(f"{prefix}{f.name}: expected {_type_name(tp)}, got {value!r}")
    return cls(**kwargs)


def _type_name(tp):
    return getattr(tp, "__name__", None) or str(tp).replace("typing.", "")


def config_from_dict(data) -> ExperimentConfig:
    problems = []
    config = _build(ExperimentConfig, data, "", problems)
    problems += config.problems()
    if problems:
        raise ConfigError(problems)
    return config


def load_config(path=None) -> ExperimentConfig:
    """Read a TOML config; ``None`` gives the defaults."""
    if path is None:
        return ExperimentConfig().validate()
    try:
        with open(Path(path), "rb") as fh:
            data = tomllib.load(fh)
    except FileNotFoundError:
        raise ConfigError(f"config: file not found: {path}") from None
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"config: invalid TOML: {exc}") from None
    return config_from_dict(data)
