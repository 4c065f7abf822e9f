import json

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from circumplex.affect_core import AFFECTNET8, EMOTIC26, AffectSample
from circumplex.analysis import (
    bin_counts,
    category_histogram,
    distribution_report,
    labels_per_image_histogram,
    va_statistics,
    value_histogram,
)
from circumplex.data import SyntheticSpec, gen_synthetic
from circumplex.errors import EmptyDatasetError, SpaceError


def s8(label, v=0.0, a=0.0):
    return AffectSample(np.zeros(2), (label,), {"valence": v, "arousal": a}, AFFECTNET8)


def emo(labels, v=5, a=5, d=5):
    return AffectSample(np.zeros(2), tuple(labels), {"valence": v, "arousal": a, "dominance": d}, EMOTIC26)


def test_category_histogram_single_label():
    h = category_histogram([s8(0), s8(0), s8(1)], AFFECTNET8)
    assert h.frequencies["neutral"] == pytest.approx(2 / 3)
    assert h.frequencies["happiness"] == pytest.approx(1 / 3)
    assert h.counts["contempt"] == 0
    assert sum(h.frequencies.values()) == pytest.approx(1.0, abs=1e-9)


def test_category_histogram_multi_label_per_image():
    h = category_histogram([emo([0, 1]), emo([0])], EMOTIC26)
    a, b = EMOTIC26.categories[:2]
    assert h.per_image[a] == 1.0 and h.per_image[b] == 0.5
    assert h.per_occurrence[a] == pytest.approx(2 / 3)


def test_category_histogram_empty():
    with pytest.raises(EmptyDatasetError):
        category_histogram([], AFFECTNET8)


def test_balanced_synthetic_frequencies():
    m = gen_synthetic(SyntheticSpec(n_samples=10_000, seed=3))
    h = category_histogram(m.samples, AFFECTNET8)
    for f in h.frequencies.values():
        assert abs(f - 0.125) < 0.02


def test_va_statistics_single_sample():
    stats, warnings, _ = va_statistics([s8(2, 0.2, 0.1)], AFFECTNET8)
    assert stats["sadness"]["valence"] == {"min": 0.2, "q1": 0.2, "median": 0.2, "q3": 0.2, "max": 0.2}
    assert len(warnings) == 7  # every other category is empty


def test_va_statistics_ten_int_quartiles():
    samples = [emo([0], v=v) for v in (1, 2, 3, 4, 5)]
    stats, _, _ = va_statistics(samples, EMOTIC26, dims=["valence"])
    st_ = stats[EMOTIC26.categories[0]]["valence"]
    assert (st_["median"], st_["q1"], st_["q3"]) == (3.0, 2.0, 4.0)


def test_neutral_is_centred():
    m = gen_synthetic(SyntheticSpec(n_samples=4000, seed=1))
    stats, _, _ = va_statistics(m.samples, AFFECTNET8)
    assert abs(stats["neutral"]["valence"]["median"]) < 0.05
    assert abs(stats["neutral"]["arousal"]["median"]) < 0.05


@settings(max_examples=30)
@given(st.lists(st.floats(-1, 1), min_size=1, max_size=40))
def test_quartiles_ordered(vals):
    stats, _, _ = va_statistics([s8(0, v) for v in vals], AFFECTNET8)
    q = stats["neutral"]["valence"]
    assert q["min"] <= q["q1"] <= q["median"] <= q["q3"] <= q["max"]


def test_scatter_export_size_and_determinism():
    m = gen_synthetic(SyntheticSpec(n_samples=300, seed=2))
    _, _, rows = va_statistics(m.samples, AFFECTNET8, scatter_n=50, rng=np.random.default_rng(0))
    _, _, rows2 = va_statistics(m.samples, AFFECTNET8, scatter_n=50, rng=np.random.default_rng(0))
    assert len(rows) == 50 and rows == rows2


def test_labels_per_image():
    assert labels_per_image_histogram([emo([0]), emo([0, 1]), emo([0, 1, 2])]) == {1: 1, 2: 1, 3: 1}
    assert labels_per_image_histogram([emo([3])] * 5) == {1: 5}
    with pytest.raises(SpaceError):
        labels_per_image_histogram([s8(0)])


def test_labels_per_image_matches_generator():
    spec = SyntheticSpec(space="emotic26", n_samples=10_000, label_count_dist={1: 0.5, 2: 0.3, 3: 0.2}, seed=4)
    hist = labels_per_image_histogram(gen_synthetic(spec).samples)
    for k, p in {1: 0.5, 2: 0.3, 3: 0.2}.items():
        assert abs(hist[k] / 10_000 - p) < 0.02


def test_value_histogram_boundary_example():
    samples = [s8(0, v) for v in (-1.0, 0.0, 1.0)]
    h = value_histogram(samples, "valence", 2)
    assert h.counts["all"] == [2, 1]
    assert h.to_csv().splitlines()[0] == "bin_lo,bin_hi,count"


def test_value_histogram_empty_split_warns():
    h = value_histogram({"train": [s8(0, 0.3)], "validation": []}, "valence", 4)
    assert h.counts["validation"] == [0, 0, 0, 0]
    assert h.warnings


def test_value_histogram_uniform():
    v = np.random.default_rng(5).uniform(-1, 1, 10_000)
    h = value_histogram([s8(0, x) for x in v], "valence", 10)
    assert all(900 <= c <= 1100 for c in h.counts["all"])


def test_value_histogram_errors():
    with pytest.raises(SpaceError):
        value_histogram([s8(0)], "dominance", 4)
    with pytest.raises(ValueError):
        value_histogram([s8(0)], "valence", 1)


@settings(max_examples=50)
@given(st.lists(st.floats(-1, 1), max_size=100), st.integers(2, 30))
def test_bins_count_everything(vals, bins):
    assert bin_counts(vals, -1, 1, bins).sum() == len(vals)


@settings(max_examples=30)
@given(st.lists(st.floats(-1, 1), max_size=60), st.integers(0, 60), st.integers(2, 12))
def test_bins_merge_is_associative(vals, cut, bins):
    whole = bin_counts(vals, -1, 1, bins)
    parts = bin_counts(vals[:cut], -1, 1, bins) + bin_counts(vals[cut:], -1, 1, bins)
    np.testing.assert_array_equal(whole, parts)


def test_report_is_deterministic_json():
    m = gen_synthetic(SyntheticSpec(space="emotic26", n_samples=200, label_count_dist={1: 0.6, 2: 0.4}))
    a = distribution_report(m.samples, m.space).to_json()
    b = distribution_report(list(m.samples), m.space).to_json()
    assert a == b
    data = json.loads(a)
    assert set(data["labels_per_image"]) == {"1", "2"}
