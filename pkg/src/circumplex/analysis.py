"""Dataset distribution statistics exported as plot-ready data."""

from __future__ import annotations

import csv
import io
import json
from collections import Counter
from dataclasses import asdict, dataclass, field
from typing import Mapping, Sequence

import numpy as np

from .affect_core import AffectSample, LabelSpace
from .errors import EmptyDatasetError, SpaceError


@dataclass
class CategoryHistogram:
    counts: dict[str, int]
    per_occurrence: dict[str, float]  # count / total label occurrences
    per_image: dict[str, float]  # count / number of samples

    @property
    def frequencies(self) -> dict[str, float]:
        return self.per_occurrence


@dataclass
class DistributionReport:
    split_name: str
    category_frequencies: dict[str, float] = field(default_factory=dict)
    category_counts: dict[str, int] = field(default_factory=dict)
    per_image_frequencies: dict[str, float] = field(default_factory=dict)
    va_stats: dict[str, dict[str, dict[str, float]]] = field(default_factory=dict)
    labels_per_image: dict[int, int] | None = None
    warnings: list[str] = field(default_factory=list)

    def to_json(self) -> str:
        data = asdict(self)
        if data["labels_per_image"] is not None:
            data["labels_per_image"] = {str(k): v for k, v in data["labels_per_image"].items()}
        return json.dumps(data, indent=2, sort_keys=True)


def _require(samples):
    if len(samples) == 0:
        raise EmptyDatasetError("no samples to analyse")


def category_histogram(samples: Sequence[AffectSample], space: LabelSpace) -> CategoryHistogram:
    _require(samples)
    counts = np.zeros(space.num_classes, dtype=np.int64)
    for s in samples:
        for lab in s.labels:
            counts[lab] += 1
    occurrences = counts.sum()
    names = space.categories
    return CategoryHistogram(
        counts={c: int(n) for c, n in zip(names, counts)},
        per_occurrence={c: float(n / occurrences) for c, n in zip(names, counts)},
        per_image={c: float(n / len(samples)) for c, n in zip(names, counts)},
    )


def five_numbers(values) -> dict[str, float]:
    """min / q1 / median / q3 / max with linear interpolation between order
    statistics (the inclusive rule, numpy's default)."""
    v = np.asarray(values, dtype=np.float64)
    q1, med, q3 = np.quantile(v, [0.25, 0.5, 0.75], method="linear")
    return {"min": float(v.min()), "q1": float(q1), "median": float(med), "q3": float(q3), "max": float(v.max())}


def va_statistics(samples: Sequence[AffectSample], space: LabelSpace, dims: Sequence[str] | None = None,
                  scatter_n: int | None = None, rng: np.random.Generator | None = None):
    """Per-category five-number summaries of each continuous dim.

    Multi-label samples count toward every category they carry. Categories
    without samples are left out and reported in ``warnings``. If
    ``scatter_n`` is given, also returns up to that many ``(category,
    valence, arousal)`` rows, subsampled with ``rng`` (first rows otherwise).
    """
    _require(samples)
    dims = list(dims or space.continuous_dims)
    missing = [d for d in dims if d not in space.continuous_dims]
    if missing:
        raise SpaceError(f"{space.name} has no continuous dims {missing}")
    per_cat: dict[int, list[AffectSample]] = {}
    for s in samples:
        for lab in s.labels:
            per_cat.setdefault(lab, []).append(s)
    stats, warnings = {}, []
    for idx, name in enumerate(space.categories):
        group = per_cat.get(idx)
        if not group:
            warnings.append(f"category {name} has no samples")
            continue
        stats[name] = {d: five_numbers([s.continuous[d] for s in group]) for d in dims}
    scatter = None
    if scatter_n is not None:
        if "valence" not in space.continuous_dims or "arousal" not in space.continuous_dims:
            raise SpaceError("scatter export needs valence and arousal")
        chosen = range(len(samples))
        if scatter_n < len(samples):
            chosen = sorted(rng.choice(len(samples), scatter_n, replace=False)) if rng is not None else range(scatter_n)
        scatter = [(space.categories[samples[i].labels[0]], samples[i].continuous["valence"],
                    samples[i].continuous["arousal"]) for i in chosen]
    return stats, warnings, scatter


def labels_per_image_histogram(samples: Sequence[AffectSample], space: LabelSpace | None = None) -> dict[int, int]:
    space = space or (samples[0].space if samples else None)
    if space is not None and not space.multi_label:
        raise SpaceError(f"{space.name} is single-label; labels per image is always 1")
    counts = Counter(len(s.labels) for s in samples)
    return {k: counts[k] for k in sorted(counts)}


@dataclass
class ValueHistogram:
    edges: list[float]
    counts: dict[str, list[int]]  # split -> per-bin counts
    warnings: list[str] = field(default_factory=list)

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        splits = sorted(self.counts)
        w.writerow(["bin_lo", "bin_hi", *(["count"] if splits == ["all"] else splits)])
        for i in range(len(self.edges) - 1):
            w.writerow([repr(self.edges[i]), repr(self.edges[i + 1]), *(self.counts[s][i] for s in splits)])
        return buf.getvalue()


def bin_counts(values, lo: float, hi: float, bins: int) -> np.ndarray:
    """Equal-width bins over [lo, hi]. Each bin is (a, b], so a value on an
    interior edge goes to the lower bin; the first bin also takes ``lo``.
    Out-of-range values are dropped."""
    v = np.asarray(values, dtype=np.float64)
    edges = np.linspace(lo, hi, bins + 1)
    idx = np.searchsorted(edges, v, side="left") - 1
    idx[v == lo] = 0
    ok = (v >= lo) & (v <= hi)
    return np.bincount(idx[ok], minlength=bins)[:bins]


def value_histogram(samples, dim: str, bins: int, space: LabelSpace | None = None) -> ValueHistogram:
    """Binned counts of one continuous dim, per split.

    ``samples`` is either a sequence of samples (reported as split ``"all"``)
    or a mapping from split name to samples.
    """
    if bins < 2:
        raise ValueError("need at least two bins")
    groups: Mapping[str, Sequence[AffectSample]] = samples if isinstance(samples, Mapping) else {"all": samples}
    if space is None:
        first = next((g[0] for g in groups.values() if len(g)), None)
        if first is None:
            raise EmptyDatasetError("cannot infer the label space from empty input")
        space = first.space
    if dim not in space.continuous_dims:
        raise SpaceError(f"{space.name} has no continuous dim {dim!r}")
    lo, hi = space.value_range.bounds
    out, warnings = {}, []
    for split, group in groups.items():
        vals = [s.continuous[dim] for s in group if dim in s.continuous]
        if not vals:
            warnings.append(f"split {split} has no {dim} values")
        out[split] = [int(c) for c in bin_counts(vals, lo, hi, bins)]
    return ValueHistogram([float(e) for e in np.linspace(lo, hi, bins + 1)], out, warnings)


def scatter_csv(rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["category", "valence", "arousal"])
    for cat, v, a in rows:
        w.writerow([cat, repr(float(v)), repr(float(a))])
    return buf.getvalue()


def distribution_report(samples: Sequence[AffectSample], space: LabelSpace, split_name: str = "train") -> DistributionReport:
    hist = category_histogram(samples, space)
    stats, warnings, _ = va_statistics(samples, space)
    return DistributionReport(
        split_name=split_name,
        category_frequencies=hist.per_occurrence,
        category_counts=hist.counts,
        per_image_frequencies=hist.per_image,
        va_stats=stats,
        labels_per_image=labels_per_image_histogram(samples, space) if space.multi_label else None,
        warnings=warnings,
    )
