"""Label spaces, value-range transforms and loss-weight derivation."""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from .errors import DegenerateClassError, RangeError

DIMS = ("valence", "arousal", "dominance")

# Published AffectNet train-split category counts (manually annotated subset,
# sums to 287,651 images).
AFFECTNET_TRAIN_COUNTS = {
    "neutral": 74874,
    "happiness": 134415,
    "sadness": 25459,
    "surprise": 14090,
    "fear": 6378,
    "disgust": 3803,
    "anger": 24882,
    "contempt": 3750,
}

EMOTIC_CATEGORIES = (
    "affection", "anger", "annoyance", "anticipation", "aversion",
    "confidence", "disapproval", "disconnection", "disquietment",
    "doubt_confusion", "embarrassment", "engagement", "esteem", "excitement",
    "fatigue", "fear", "happiness", "pain", "peace", "pleasure", "sadness",
    "sensitivity", "suffering", "surprise", "sympathy", "yearning",
)


class ValueRange(str, enum.Enum):
    UNIT_REAL = "unit_real"  # reals in [-1, 1]
    TEN_INT = "ten_int"  # integers in [1, 10]

    @property
    def bounds(self) -> tuple[float, float]:
        return (-1.0, 1.0) if self is ValueRange.UNIT_REAL else (1.0, 10.0)


@dataclass(frozen=True)
class LabelSpace:
    name: str
    categories: tuple[str, ...]
    multi_label: bool = False
    continuous_dims: tuple[str, ...] = ("valence", "arousal")
    value_range: ValueRange = ValueRange.UNIT_REAL

    def __post_init__(self):
        if len(self.categories) < 2:
            raise ValueError("a label space needs at least two categories")
        if len(set(self.categories)) != len(self.categories):
            raise ValueError("category names must be unique")
        bad = [d for d in self.continuous_dims if d not in DIMS]
        if bad:
            raise ValueError(f"unknown continuous dims: {bad}")
        order = [DIMS.index(d) for d in self.continuous_dims]
        if order != sorted(order) or len(set(order)) != len(order):
            raise ValueError("continuous dims must be an ordered subset of valence, arousal, dominance")

    @property
    def num_classes(self) -> int:
        return len(self.categories)

    def index(self, category: str) -> int:
        try:
            return self.categories.index(category)
        except ValueError:
            raise KeyError(f"{category!r} is not a category of {self.name}") from None


AFFECTNET8 = LabelSpace("affectnet8", tuple(AFFECTNET_TRAIN_COUNTS))
AFFECTNET7 = LabelSpace("affectnet7", tuple(c for c in AFFECTNET_TRAIN_COUNTS if c != "contempt"))
EMOTIC26 = LabelSpace(
    "emotic26",
    EMOTIC_CATEGORIES,
    multi_label=True,
    continuous_dims=DIMS,
    value_range=ValueRange.TEN_INT,
)

PRESETS = {s.name: s for s in (AFFECTNET8, AFFECTNET7, EMOTIC26)}


def get_space(name: str) -> LabelSpace:
    try:
        return PRESETS[name]
    except KeyError:
        raise KeyError(f"unknown label space {name!r}; known: {sorted(PRESETS)}") from None


@dataclass
class AffectSample:
    features: np.ndarray
    labels: tuple[int, ...]
    continuous: dict[str, float]
    space: LabelSpace
    metadata: dict = field(default_factory=dict)


@dataclass(frozen=True)
class ClassWeights:
    weights: np.ndarray
    source_counts: np.ndarray

    def __len__(self):
        return len(self.weights)


def _check_range(value, value_range: ValueRange, dim: str | None, *, allow_real: bool):
    lo, hi = value_range.bounds
    where = f" for {dim}" if dim else ""
    if not np.isfinite(value) or value < lo or value > hi:
        raise RangeError(f"value {value}{where} outside [{lo:g}, {hi:g}]")
    if not allow_real and value_range is ValueRange.TEN_INT and float(value) != round(value):
        raise RangeError(f"value {value}{where} is not an integer on the 1..10 scale")


def scale_to_unit(value: float, from_range: ValueRange, dim: str | None = None) -> float:
    """Map a value from ``from_range`` onto [-1, 1].

    The 1..10 scale maps affinely with 1 -> -1 and 10 -> 1. Non-integer values
    are accepted so continuous predictions can be rescaled too.
    """
    from_range = ValueRange(from_range)
    _check_range(value, from_range, dim, allow_real=True)
    if from_range is ValueRange.UNIT_REAL:
        return float(value)
    return (float(value) - 5.5) / 4.5


def scale_from_unit(value: float, to_range: ValueRange, dim: str | None = None) -> float:
    to_range = ValueRange(to_range)
    _check_range(value, ValueRange.UNIT_REAL, dim, allow_real=True)
    if to_range is ValueRange.UNIT_REAL:
        return float(value)
    return float(value) * 4.5 + 5.5


def scale_array_to_unit(values, from_range: ValueRange, dim: str | None = None) -> np.ndarray:
    """Vectorised :func:`scale_to_unit`."""
    values = np.asarray(values, dtype=np.float64)
    from_range = ValueRange(from_range)
    lo, hi = from_range.bounds
    if values.size and (not np.all(np.isfinite(values)) or values.min() < lo or values.max() > hi):
        where = f" for {dim}" if dim else ""
        raise RangeError(f"values{where} outside [{lo:g}, {hi:g}]")
    if from_range is ValueRange.UNIT_REAL:
        return values.copy()
    return (values - 5.5) / 4.5


def scale_array_from_unit(values, to_range: ValueRange, dim: str | None = None) -> np.ndarray:
    values = np.asarray(values, dtype=np.float64)
    if values.size and (not np.all(np.isfinite(values)) or values.min() < -1 or values.max() > 1):
        where = f" for {dim}" if dim else ""
        raise RangeError(f"values{where} outside [-1, 1]")
    if ValueRange(to_range) is ValueRange.UNIT_REAL:
        return values.copy()
    return values * 4.5 + 5.5


def _positive_counts(counts) -> np.ndarray:
    counts = np.asarray(counts)
    if counts.ndim != 1 or counts.size == 0:
        raise ValueError("counts must be a non-empty 1-d array")
    if np.any(counts <= 0):
        zero = [int(i) for i in np.flatnonzero(counts <= 0)]
        raise DegenerateClassError(f"classes {zero} have no occurrences")
    return counts


def compute_class_weights(counts) -> ClassWeights:
    """Normalised reciprocal class frequencies for weighted cross-entropy."""
    counts = _positive_counts(counts)
    inv = 1.0 / counts.astype(np.float64)
    return ClassWeights(weights=inv / inv.sum(), source_counts=counts.astype(np.int64))


def compute_pos_weights(counts, total: int) -> np.ndarray:
    """Per-class BCE positive weights ``total / count``."""
    counts = _positive_counts(counts)
    if np.any(counts > total):
        raise ValueError("a class count exceeds the total number of samples")
    return float(total) / counts.astype(np.float64)


def validate_sample(sample: AffectSample) -> list[str]:
    """Return every invariant the sample violates (empty when valid)."""
    space = sample.space
    problems = []
    labels = list(sample.labels)
    if not space.multi_label and len(labels) != 1:
        problems.append(f"single-label space {space.name} requires exactly one label, got {len(labels)}")
    if space.multi_label and len(labels) < 1:
        problems.append("multi-label sample needs at least one label")
    for lab in labels:
        if not (0 <= int(lab) < space.num_classes):
            problems.append(f"label index {lab} outside 0..{space.num_classes - 1}")
    if len(set(labels)) != len(labels):
        problems.append("duplicate label indices")
    for dim in space.continuous_dims:
        if dim not in sample.continuous:
            problems.append(f"missing continuous value for {dim}")
            continue
        try:
            _check_range(sample.continuous[dim], space.value_range, dim, allow_real=False)
        except RangeError as exc:
            problems.append(str(exc))
    extra = set(sample.continuous) - set(space.continuous_dims)
    if extra:
        problems.append(f"continuous dims {sorted(extra)} not declared by {space.name}")
    return problems


def label_counts(label_sets: Sequence[Sequence[int]], num_classes: int) -> np.ndarray:
    counts = np.zeros(num_classes, dtype=np.int64)
    for labels in label_sets:
        for lab in labels:
            counts[lab] += 1
    return counts


def continuous_matrix(samples: Sequence[AffectSample], dims: Sequence[str]) -> np.ndarray:
    return np.array([[s.continuous[d] for d in dims] for s in samples], dtype=np.float64).reshape(len(samples), len(dims))


def to_unit_matrix(values: np.ndarray, value_range: ValueRange, dims: Sequence[str] = ()) -> np.ndarray:
    """Scale an N x D block column by column, naming the dim on failure."""
    out = np.empty_like(np.asarray(values, dtype=np.float64))
    for j in range(out.shape[1]):
        out[:, j] = scale_array_to_unit(values[:, j], value_range, dims[j] if dims else None)
    return out


def counts_from_mapping(space: LabelSpace, counts: Mapping[str, int]) -> np.ndarray:
    return np.array([counts[c] for c in space.categories], dtype=np.int64)
