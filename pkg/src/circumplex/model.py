"""Dense two-head network for the three training regimes, with checkpoints."""

from __future__ import annotations

import json
import zlib
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from . import diffcore as dc
from .affect_core import LabelSpace, ValueRange, scale_array_from_unit
from .errors import ConfigError, ShapeError

REGIMES = ("discrete", "combined", "valence_arousal")
CHECKPOINT_VERSION = 1
# heads start near zero so tanh is unsaturated and logits near uniform
HEAD_INIT_GAIN = 0.01


@dataclass
class ModelConfig:
    input_dim: int
    num_classes: int
    hidden_dims: list[int] = field(default_factory=lambda: [256])
    regime: str = "combined"
    continuous_dims: int = 2
    seed: int = 0
    multi_label: bool = False

    def __post_init__(self):
        if self.regime not in REGIMES:
            raise ConfigError(f"unknown regime {self.regime!r}; expected one of {REGIMES}")
        if self.input_dim < 1 or self.num_classes < 2:
            raise ConfigError("input_dim must be >= 1 and num_classes >= 2")
        if self.continuous_dims not in (2, 3):
            raise ConfigError("continuous_dims must be 2 or 3")
        self.hidden_dims = [int(h) for h in self.hidden_dims]

    @property
    def has_classifier(self) -> bool:
        return self.regime != "valence_arousal"

    @property
    def has_regressor(self) -> bool:
        return self.regime != "discrete"


def segment_shapes(config: ModelConfig) -> dict[str, tuple[int, ...]]:
    shapes = {}
    width = config.input_dim
    for i, h in enumerate(config.hidden_dims):
        shapes[f"hidden{i}.W"] = (width, h)
        shapes[f"hidden{i}.b"] = (h,)
        width = h
    if config.has_classifier:
        shapes["cls.W"] = (width, config.num_classes)
        shapes["cls.b"] = (config.num_classes,)
    if config.has_regressor:
        shapes["reg.W"] = (width, config.continuous_dims)
        shapes["reg.b"] = (config.continuous_dims,)
    return shapes


def _segment_rng(seed: int, name: str) -> np.random.Generator:
    # one stream per segment: shared layers initialise identically in every regime
    return np.random.default_rng([int(seed), zlib.crc32(name.encode())])


class Model:
    def __init__(self, config: ModelConfig, params: dict[str, np.ndarray]):
        expected = segment_shapes(config)
        if set(params) != set(expected):
            raise ConfigError(f"weight segments {sorted(params)} do not match regime {config.regime!r}")
        for name, shape in expected.items():
            if params[name].shape != shape:
                raise ShapeError(f"segment {name} has shape {params[name].shape}, expected {shape}")
        self.config = config
        self.params = {k: np.asarray(v, dtype=np.float64) for k, v in params.items()}

    def graph(self, x, params: dict[str, dc.Tensor] | None = None):
        """Build the forward graph; returns ``(logits, continuous)`` tensors."""
        cfg = self.config
        x = dc.as_tensor(x)
        if x.ndim != 2 or x.shape[1] != cfg.input_dim:
            raise ShapeError(f"expected features of shape (N, {cfg.input_dim}), got {x.shape}")
        p = params if params is not None else {k: dc.Tensor(v) for k, v in self.params.items()}
        h = x
        for i in range(len(cfg.hidden_dims)):
            h = dc.relu(dc.affine(h, p[f"hidden{i}.W"], p[f"hidden{i}.b"]))
        logits = dc.affine(h, p["cls.W"], p["cls.b"]) if cfg.has_classifier else None
        cont = dc.tanh(dc.affine(h, p["reg.W"], p["reg.b"])) if cfg.has_regressor else None
        return logits, cont

    def forward(self, features):
        """Numeric forward pass: ``(logits or None, continuous or None)``."""
        logits, cont = self.graph(np.asarray(features, dtype=np.float64))
        return (None if logits is None else logits.value,
                None if cont is None else cont.value)

    def copy(self) -> "Model":
        return Model(ModelConfig(**asdict(self.config)), {k: v.copy() for k, v in self.params.items()})


def init_model(config: ModelConfig) -> Model:
    """He-normal hidden layers, down-scaled Glorot-normal heads, zero biases."""
    params = {}
    for name, shape in segment_shapes(config).items():
        if name.endswith(".b"):
            params[name] = np.zeros(shape)
            continue
        fan_in, fan_out = shape
        if name.startswith("hidden"):
            std = np.sqrt(2.0 / fan_in)
        else:
            std = HEAD_INIT_GAIN * np.sqrt(2.0 / (fan_in + fan_out))
        params[name] = _segment_rng(config.seed, name).standard_normal(shape) * std
    return Model(config, params)


def forward(model: Model, batch_features):
    return model.forward(batch_features)


@dataclass
class Prediction:
    labels: list | None
    scores: np.ndarray | None
    continuous: np.ndarray | None  # in [-1, 1]
    continuous_native: np.ndarray | None = None


def predict(model: Model, features, space: LabelSpace | None = None) -> Prediction:
    """Labels and/or affect values.

    Single-label: argmax of the logits (ties to the lower index). Multi-label:
    every class whose sigmoid score exceeds 0.5; ``scores`` keeps the ranking
    for top-k. With ``space`` given, continuous outputs are also mapped into
    that space's value range.
    """
    logits, cont = model.forward(features)
    labels = scores = None
    if logits is not None:
        if model.config.multi_label:
            scores = dc._sigmoid(logits)
            labels = [tuple(int(j) for j in np.flatnonzero(row > 0.5)) for row in scores]
        else:
            scores = logits
            labels = [int(i) for i in np.argmax(logits, axis=1)]
    native = None
    if cont is not None and space is not None:
        native = scale_array_from_unit(cont, space.value_range)
    return Prediction(labels, scores, cont, native)


# checkpoints -----------------------------------------------------------------

@dataclass
class ModelCheckpoint:
    config: ModelConfig
    weights: dict[str, np.ndarray]
    metadata: dict = field(default_factory=dict)

    @property
    def regime(self) -> str:
        return self.config.regime

    def model(self) -> Model:
        return Model(self.config, {k: v.copy() for k, v in self.weights.items()})

    @classmethod
    def from_model(cls, model: Model, **metadata) -> "ModelCheckpoint":
        return cls(ModelConfig(**asdict(model.config)), {k: v.copy() for k, v in model.params.items()}, dict(metadata))

    def save(self, path) -> Path:
        """Write an ``.npz`` archive: one array per weight segment plus a
        ``__meta__`` JSON string holding the format version, config and
        metadata. Arrays are stored as float64, so reloads are bit-exact."""
        path = Path(path)
        meta = json.dumps({"version": CHECKPOINT_VERSION, "config": asdict(self.config), "metadata": self.metadata},
                          sort_keys=True)
        with open(path, "wb") as fh:
            np.savez(fh, __meta__=np.array(meta), **self.weights)
        return path

    @classmethod
    def load(cls, path) -> "ModelCheckpoint":
        with np.load(Path(path), allow_pickle=False) as data:
            meta = json.loads(str(data["__meta__"]))
            if meta.get("version") != CHECKPOINT_VERSION:
                raise ConfigError(f"unsupported checkpoint version {meta.get('version')}")
            weights = {k: data[k].copy() for k in data.files if k != "__meta__"}
        config = ModelConfig(**meta["config"])
        Model(config, weights)  # shape check
        return cls(config, weights, meta["metadata"])


def warm_start(model: Model, donor: ModelCheckpoint) -> list[str]:
    """Copy every donor segment whose name and shape match; return their names."""
    copied = []
    for name, value in donor.weights.items():
        if name in model.params and model.params[name].shape == value.shape:
            model.params[name] = value.copy()
            copied.append(name)
    return copied
