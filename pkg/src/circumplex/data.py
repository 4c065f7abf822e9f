"""Manifest I/O, the synthetic circumplex generator and image augmentation."""

from __future__ import annotations

import csv
import io
import json
import math
import zlib
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .affect_core import (
    AffectSample,
    LabelSpace,
    ValueRange,
    get_space,
    scale_array_from_unit,
    scale_array_to_unit,
    validate_sample,
)
from .errors import ManifestValidationError, ParseError, RangeError, SpecError

SPLITS = ("train", "validation", "test")


@dataclass
class Record:
    id: str
    source: str  # "inline" or a path to a .npy payload
    sample: AffectSample


@dataclass
class Manifest:
    space: LabelSpace
    records: list[Record]
    split: str = "train"

    def __len__(self):
        return len(self.records)

    @property
    def samples(self) -> list[AffectSample]:
        return [r.sample for r in self.records]

    def features(self) -> np.ndarray:
        if not self.records:
            return np.zeros((0, 0))
        return np.stack([np.asarray(r.sample.features, dtype=np.float64).ravel() for r in self.records])

    def label_sets(self) -> list[tuple[int, ...]]:
        return [r.sample.labels for r in self.records]

    def single_labels(self) -> np.ndarray:
        return np.array([r.sample.labels[0] for r in self.records], dtype=np.int64)

    def multi_hot(self) -> np.ndarray:
        out = np.zeros((len(self.records), self.space.num_classes))
        for i, r in enumerate(self.records):
            out[i, list(r.sample.labels)] = 1.0
        return out

    def continuous(self, dims: Sequence[str] | None = None) -> np.ndarray:
        dims = list(dims or self.space.continuous_dims)
        return np.array([[r.sample.continuous[d] for d in dims] for r in self.records],
                        dtype=np.float64).reshape(len(self.records), len(dims))

    def continuous_unit(self, dims: Sequence[str] | None = None) -> np.ndarray:
        dims = list(dims or self.space.continuous_dims)
        raw = self.continuous(dims)
        return np.column_stack([scale_array_to_unit(raw[:, j], self.space.value_range, d)
                                for j, d in enumerate(dims)]) if dims else raw

    def subset(self, indices) -> "Manifest":
        return Manifest(self.space, [self.records[i] for i in indices], self.split)


# manifest CSV --------------------------------------------------------------

def _header(space: LabelSpace) -> list[str]:
    label_col = "labels" if space.multi_label else "label"
    return ["id", "split", "features", label_col, *space.continuous_dims]


def _fmt(value: float, space: LabelSpace) -> str:
    if space.value_range is ValueRange.TEN_INT and float(value) == int(value):
        return str(int(value))
    return repr(float(value))


def save_manifest(manifest: Manifest, path) -> Path:
    """Write a manifest as UTF-8 CSV with LF line endings.

    Inline features are stored as space-separated ``repr`` floats so a reload
    is exact; records whose source is a path keep the path.
    """
    path = Path(path)
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(manifest_csv(manifest))
    return path


def manifest_csv(manifest: Manifest) -> str:
    space = manifest.space
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(_header(space))
    for r in manifest.records:
        s = r.sample
        feats = (" ".join(repr(float(v)) for v in np.asarray(s.features).ravel())
                 if r.source == "inline" else r.source)
        labels = "|".join(space.categories[i] for i in s.labels)
        w.writerow([r.id, manifest.split, feats, labels, *(_fmt(s.continuous[d], space) for d in space.continuous_dims)])
    return buf.getvalue()


def _parse_label(token: str, space: LabelSpace, row: int) -> int:
    token = token.strip()
    if token in space.categories:
        return space.categories.index(token)
    if token.isdigit():
        return int(token)
    raise ParseError(f"unknown category {token!r}", row)


def load_manifest(path, space: LabelSpace | str, split: str | None = None) -> Manifest:
    """Parse and validate a manifest CSV.

    Rows are numbered from 1 (the first line after the header). Malformed rows
    raise :class:`ParseError` immediately; invariant violations are collected
    over the whole file and raised together as
    :class:`ManifestValidationError`.
    """
    path = Path(path)
    if isinstance(space, str):
        space = get_space(space)
    with open(path, encoding="utf-8", newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise ParseError("empty manifest file")
    header = [h.strip() for h in rows[0]]
    label_col = "labels" if space.multi_label else "label"
    feat_col = "features" if "features" in header else "features_or_path"
    required = ["id", feat_col, label_col, *space.continuous_dims]
    missing = [c for c in required if c not in header]
    if missing:
        raise ParseError(f"header lacks columns {missing}", 0)
    col = {name: header.index(name) for name in header}

    records, problems, seen, splits = [], [], set(), set()
    for n, row in enumerate(rows[1:], start=1):
        if not row:
            continue
        if len(row) != len(header):
            raise ParseError(f"expected {len(header)} fields, got {len(row)}", n)
        rid = row[col["id"]]
        if "split" in col:
            splits.add(row[col["split"]])
        feat_field = row[col[feat_col]].strip()
        if feat_field.endswith(".npy"):
            src = feat_field
            fpath = Path(feat_field)
            if not fpath.is_absolute():
                fpath = path.parent / fpath
            try:
                feats = np.load(fpath)
            except OSError as exc:
                raise ParseError(f"cannot read features from {feat_field}: {exc}", n) from None
        else:
            src = "inline"
            try:
                feats = np.array([float(v) for v in feat_field.split()], dtype=np.float64)
            except ValueError:
                raise ParseError("features column is neither numbers nor a .npy path", n) from None
        tokens = [t for t in row[col[label_col]].split("|") if t.strip()]
        labels = tuple(_parse_label(t, space, n) for t in tokens)
        cont = {}
        for d in space.continuous_dims:
            try:
                cont[d] = float(row[col[d]])
            except ValueError:
                raise ParseError(f"{d} value {row[col[d]]!r} is not a number", n) from None
        sample = AffectSample(feats, labels, cont, space)
        for msg in validate_sample(sample):
            problems.append((n, msg))
        if rid in seen:
            problems.append((n, f"duplicate id {rid!r}"))
        seen.add(rid)
        records.append(Record(rid, src, sample))
    if problems:
        raise ManifestValidationError(problems)
    if split is None:
        split = splits.pop() if len(splits) == 1 else "train"
    return Manifest(space, records, split)


# synthetic generator --------------------------------------------------------

# Class centres for the AffectNet-style presets, loosely placed on the
# circumplex: (valence, arousal).
AFFECTNET_CENTRES = {
    "neutral": (0.0, 0.0),
    "happiness": (0.7, 0.25),
    "sadness": (-0.6, -0.35),
    "surprise": (0.2, 0.7),
    "fear": (-0.35, 0.7),
    "disgust": (-0.65, 0.3),
    "anger": (-0.45, 0.55),
    "contempt": (-0.35, 0.05),
}


@dataclass
class SyntheticSpec:
    space: str = "affectnet8"
    n_samples: int = 10_000
    means: list | None = None  # K x D in [-1, 1]; None -> preset or drawn
    covariances: list | None = None  # K x D x D; None -> isotropic with `std`
    std: float = 0.1
    priors: list | None = None  # None -> uniform
    feature_dim: int = 32
    class_signal: float = 5.0
    va_signal: float = 5.0
    noise_scale: float = 0.1
    label_count_dist: dict | None = None  # multi-label: {k: p}
    seed: int = 0
    structure_seed: int = 0
    split: str = "train"

    @classmethod
    def from_dict(cls, data: dict) -> "SyntheticSpec":
        data = dict(data)
        if data.get("label_count_dist"):
            data["label_count_dist"] = {int(k): float(v) for k, v in data["label_count_dist"].items()}
        return cls(**data)

    @classmethod
    def from_json(cls, path) -> "SyntheticSpec":
        return cls.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))

    def to_dict(self) -> dict:
        return asdict(self)


def _structure(spec: SyntheticSpec, space: LabelSpace):
    """Class prototypes, VA projection and default class means.

    Drawn from ``structure_seed`` only, so datasets generated with different
    sampling seeds share one feature geometry.
    """
    rng = np.random.default_rng([spec.structure_seed, 0x5EED])
    k, d, f = space.num_classes, len(space.continuous_dims), spec.feature_dim
    protos = rng.standard_normal((k, f))
    protos *= spec.class_signal / np.linalg.norm(protos, axis=1, keepdims=True)
    proj = np.linalg.qr(rng.standard_normal((f, d)))[0].T * spec.va_signal  # orthonormal rows
    drawn_means = rng.uniform(-0.6, 0.6, size=(k, d))
    return protos, proj, drawn_means


def _resolve(spec: SyntheticSpec, space: LabelSpace, drawn_means):
    k, d = space.num_classes, len(space.continuous_dims)
    if spec.means is not None:
        means = np.asarray(spec.means, dtype=np.float64)
    elif all(c in AFFECTNET_CENTRES for c in space.categories) and d == 2:
        means = np.array([AFFECTNET_CENTRES[c] for c in space.categories])
    else:
        means = drawn_means
    if means.shape != (k, d):
        raise SpecError(f"means must be {k} x {d}, got {means.shape}")
    if np.any(np.abs(means) > 1):
        raise SpecError("class means must lie in [-1, 1]")
    if spec.covariances is not None:
        covs = np.asarray(spec.covariances, dtype=np.float64)
    else:
        covs = np.broadcast_to(np.eye(d) * spec.std ** 2, (k, d, d)).copy()
    if covs.shape != (k, d, d):
        raise SpecError(f"covariances must be {k} x {d} x {d}")
    for c in covs:
        if not np.allclose(c, c.T) or np.linalg.eigvalsh(c).min() < -1e-12:
            raise SpecError("covariances must be symmetric positive semi-definite")
    priors = np.full(k, 1.0 / k) if spec.priors is None else np.asarray(spec.priors, dtype=np.float64)
    if priors.shape != (k,) or np.any(priors < 0) or priors.sum() <= 0:
        raise SpecError("priors must be K non-negative values with positive mass")
    if abs(priors.sum() - 1.0) > 1e-9:
        raise SpecError(f"priors sum to {priors.sum()}, not 1")
    return means, covs, priors


def _label_count_dist(spec: SyntheticSpec, k: int):
    dist = spec.label_count_dist or {1: 1.0}
    counts = np.array(sorted(int(c) for c in dist))
    probs = np.array([float(dist[c]) if c in dist else float(dist[str(c)]) for c in counts])
    if counts.min() < 1 or counts.max() > k:
        raise SpecError(f"label counts must lie in 1..{k}")
    if np.any(probs < 0) or abs(probs.sum() - 1.0) > 1e-9:
        raise SpecError("label-count distribution must sum to 1")
    return counts, probs


def _psd_factor(cov):
    # cholesky needs strict definiteness; fall back to the eigen square root
    try:
        return np.linalg.cholesky(cov)
    except np.linalg.LinAlgError:
        w, v = np.linalg.eigh(cov)
        return v * np.sqrt(np.clip(w, 0.0, None))


def gen_synthetic(spec: SyntheticSpec) -> Manifest:
    """Draw a labelled dataset whose features encode both class and affect.

    Per sample: labels from the priors, affect from the (first) label's
    Gaussian clamped to [-1, 1], features = prototype signal + projected
    affect + noise. On integer-scale spaces affect is rounded to 1..10 and the
    features see the rounded value.
    """
    space = get_space(spec.space)
    if spec.n_samples < 0:
        raise SpecError("n_samples must be non-negative")
    protos, proj, drawn = _structure(spec, space)
    means, covs, priors = _resolve(spec, space, drawn)
    k, d = space.num_classes, len(space.continuous_dims)
    if space.multi_label:
        counts, count_p = _label_count_dist(spec, k)
        if np.count_nonzero(priors) < counts.max():
            raise SpecError("not enough classes with prior mass for the label-count distribution")
    elif spec.label_count_dist and set(spec.label_count_dist) != {1}:
        raise SpecError("label_count_dist only applies to multi-label spaces")
    chols = [_psd_factor(c) for c in covs]

    rng = np.random.default_rng(spec.seed)
    records = []
    width = len(str(max(spec.n_samples - 1, 0)))
    for i in range(spec.n_samples):
        if space.multi_label:
            n_lab = int(rng.choice(counts, p=count_p))
            labels = tuple(int(c) for c in rng.choice(k, size=n_lab, replace=False, p=priors))
        else:
            labels = (int(rng.choice(k, p=priors)),)
        primary = labels[0]
        va = np.clip(means[primary] + chols[primary] @ rng.standard_normal(d), -1.0, 1.0)
        if space.value_range is ValueRange.TEN_INT:
            stored = np.clip(np.rint(scale_array_from_unit(va, ValueRange.TEN_INT)), 1, 10)
            va = scale_array_to_unit(stored, ValueRange.TEN_INT)
        else:
            stored = va
        feats = protos[list(labels)].mean(axis=0) + va @ proj
        if spec.noise_scale:
            feats = feats + spec.noise_scale * rng.standard_normal(spec.feature_dim)
        sample = AffectSample(feats, labels, {dim: float(v) for dim, v in zip(space.continuous_dims, stored)}, space)
        records.append(Record(f"{spec.split}-{i:0{width}d}", "inline", sample))
    return Manifest(space, records, spec.split)


def gen_synthetic_splits(spec: SyntheticSpec, sizes: dict[str, int]) -> dict[str, Manifest]:
    """Generate several splits sharing one feature geometry.

    Each split gets its own sampling seed derived from ``spec.seed`` and the
    split name.
    """
    out = {}
    for name, n in sizes.items():
        sub = SyntheticSpec(**{**spec.to_dict(), "n_samples": n, "split": name,
                               "seed": derive_seed(spec.seed, name)})
        out[name] = gen_synthetic(sub)
    return out


def derive_seed(base: int, key: str) -> int:
    return int(np.random.SeedSequence([int(base), zlib.crc32(key.encode())]).generate_state(1)[0])


def sample_rng(base_seed: int, sample_id: str) -> np.random.Generator:
    """Independent generator per (seed, sample) so workers are order-free."""
    return np.random.default_rng([int(base_seed), zlib.crc32(str(sample_id).encode())])


# augmentation ---------------------------------------------------------------

IMAGENET_MEAN = (0.485, 0.456, 0.406)
IMAGENET_STD = (0.229, 0.224, 0.225)


@dataclass
class AugmentConfig:
    flip_p: float = 0.5
    grayscale_p: float = 0.01
    rotation_degrees: float = 10.0
    brightness: float = 0.2
    contrast: float = 0.2
    saturation: float = 0.2
    hue: float = 0.1
    perspective_distortion: float = 0.2
    perspective_p: float = 0.5
    mean: tuple = IMAGENET_MEAN
    std: tuple = IMAGENET_STD
    erasing_p: float = 0.5
    erasing_scale: tuple = (0.02, 0.2)
    erasing_ratio: tuple = (0.3, 3.3)


def _check_image(img):
    img = np.asarray(img, dtype=np.float64)
    if img.ndim != 3 or img.shape[2] != 3:
        raise ValueError(f"expected an H x W x 3 image, got {img.shape}")
    return img


def hflip(img: np.ndarray) -> np.ndarray:
    return img[:, ::-1, :].copy()


def to_grayscale(img: np.ndarray) -> np.ndarray:
    gray = img[..., 0] * 0.299 + img[..., 1] * 0.587 + img[..., 2] * 0.114
    return np.repeat(gray[..., None], 3, axis=2)


def _bilinear(img: np.ndarray, sx: np.ndarray, sy: np.ndarray) -> np.ndarray:
    """Sample ``img`` at real coordinates; zero outside the image."""
    h, w = img.shape[:2]
    x0, y0 = np.floor(sx).astype(np.int64), np.floor(sy).astype(np.int64)
    fx, fy = sx - x0, sy - y0
    out = np.zeros(sx.shape + (img.shape[2],))
    for dy, wy in ((0, 1 - fy), (1, fy)):
        for dx, wx in ((0, 1 - fx), (1, fx)):
            xi, yi = x0 + dx, y0 + dy
            ok = (xi >= 0) & (xi < w) & (yi >= 0) & (yi < h)
            vals = np.zeros_like(out)
            vals[ok] = img[yi[ok], xi[ok]]
            out += vals * (wx * wy)[..., None]
    return out


def rotate(img: np.ndarray, degrees: float) -> np.ndarray:
    """Counter-clockwise rotation about the centre, bilinear, zero fill."""
    h, w = img.shape[:2]
    cy, cx = (h - 1) / 2.0, (w - 1) / 2.0
    yy, xx = np.mgrid[0:h, 0:w].astype(np.float64)
    t = math.radians(degrees)
    # inverse map output -> source (image y axis points down)
    dx, dy = xx - cx, yy - cy
    sx = math.cos(t) * dx - math.sin(t) * dy + cx
    sy = math.sin(t) * dx + math.cos(t) * dy + cy
    return _bilinear(img, sx, sy)


def adjust_brightness(img, factor):
    return np.clip(img * factor, 0.0, 1.0)


def adjust_contrast(img, factor):
    mean = to_grayscale(img)[..., 0].mean()
    return np.clip(factor * img + (1.0 - factor) * mean, 0.0, 1.0)


def adjust_saturation(img, factor):
    return np.clip(factor * img + (1.0 - factor) * to_grayscale(img), 0.0, 1.0)


def rgb_to_hsv(img):
    r, g, b = img[..., 0], img[..., 1], img[..., 2]
    maxc, minc = img.max(axis=-1), img.min(axis=-1)
    v = maxc
    delta = maxc - minc
    s = np.divide(delta, maxc, out=np.zeros_like(maxc), where=maxc > 0)
    safe = np.where(delta > 0, delta, 1.0)
    rc, gc, bc = (maxc - r) / safe, (maxc - g) / safe, (maxc - b) / safe
    h = np.where(maxc == r, bc - gc, np.where(maxc == g, 2.0 + rc - bc, 4.0 + gc - rc))
    h = np.where(delta > 0, (h / 6.0) % 1.0, 0.0)
    return np.stack([h, s, v], axis=-1)


def hsv_to_rgb(hsv):
    h, s, v = hsv[..., 0], hsv[..., 1], hsv[..., 2]
    i = np.floor(h * 6.0)
    f = h * 6.0 - i
    p, q, t = v * (1 - s), v * (1 - s * f), v * (1 - s * (1 - f))
    i = i.astype(np.int64) % 6
    choices = [np.stack(c, axis=-1) for c in ((v, t, p), (q, v, p), (p, v, t), (p, q, v), (t, p, v), (v, p, q))]
    out = np.zeros_like(hsv)
    for k, c in enumerate(choices):
        out = np.where((i == k)[..., None], c, out)
    return out


def adjust_hue(img, shift):
    hsv = rgb_to_hsv(img)
    hsv[..., 0] = (hsv[..., 0] + shift) % 1.0
    return hsv_to_rgb(hsv)


def _homography(src, dst):
    """3x3 matrix H with H @ [x, y, 1] proportional to dst for each src point."""
    a, b = [], []
    for (x, y), (u, v) in zip(src, dst):
        a.append([x, y, 1, 0, 0, 0, -u * x, -u * y])
        a.append([0, 0, 0, x, y, 1, -v * x, -v * y])
        b.extend([u, v])
    coef = np.linalg.solve(np.array(a, dtype=np.float64), np.array(b, dtype=np.float64))
    return np.append(coef, 1.0).reshape(3, 3)


def perspective_points(h: int, w: int, distortion: float, rng: np.random.Generator):
    half_h, half_w = h // 2, w // 2
    dh, dw = int(distortion * half_h), int(distortion * half_w)
    start = [(0, 0), (w - 1, 0), (w - 1, h - 1), (0, h - 1)]
    end = [
        (int(rng.integers(0, dw + 1)), int(rng.integers(0, dh + 1))),
        (int(rng.integers(w - dw - 1, w)), int(rng.integers(0, dh + 1))),
        (int(rng.integers(w - dw - 1, w)), int(rng.integers(h - dh - 1, h))),
        (int(rng.integers(0, dw + 1)), int(rng.integers(h - dh - 1, h))),
    ]
    return start, end


def perspective(img, start, end):
    """Warp so that ``start`` corners land on ``end``; bilinear, zero fill."""
    h, w = img.shape[:2]
    inv = _homography(end, start)
    yy, xx = np.mgrid[0:h, 0:w].astype(np.float64)
    pts = inv @ np.stack([xx.ravel(), yy.ravel(), np.ones(h * w)])
    sx = (pts[0] / pts[2]).reshape(h, w)
    sy = (pts[1] / pts[2]).reshape(h, w)
    return _bilinear(img, sx, sy)


def normalize(img, mean=IMAGENET_MEAN, std=IMAGENET_STD):
    return (img - np.asarray(mean, dtype=np.float64)) / np.asarray(std, dtype=np.float64)


def erase_box(h: int, w: int, rng: np.random.Generator, scale=(0.02, 0.2), ratio=(0.3, 3.3),
              attempts: int = 10):
    """Pick an erasing rectangle ``(top, left, height, width)`` or None.

    Candidates are rounded to whole pixels and kept only if the realised area
    fraction and height/width ratio still fall inside the requested ranges.
    """
    area = h * w
    log_lo, log_hi = math.log(ratio[0]), math.log(ratio[1])
    for _ in range(attempts):
        target = area * rng.uniform(scale[0], scale[1])
        aspect = math.exp(rng.uniform(log_lo, log_hi))
        eh = int(round(math.sqrt(target * aspect)))
        ew = int(round(math.sqrt(target / aspect)))
        if not (0 < eh < h and 0 < ew < w):
            continue
        if not (scale[0] <= eh * ew / area <= scale[1] and ratio[0] <= eh / ew <= ratio[1]):
            continue
        top = int(rng.integers(0, h - eh + 1))
        left = int(rng.integers(0, w - ew + 1))
        return top, left, eh, ew
    return None


def random_erasing(img, rng, p=0.5, scale=(0.02, 0.2), ratio=(0.3, 3.3)):
    """Replace a random rectangle with standard-normal noise (``value='random'``)."""
    if rng.uniform() >= p:
        return img
    box = erase_box(img.shape[0], img.shape[1], rng, scale, ratio)
    if box is None:
        return img
    top, left, eh, ew = box
    out = img.copy()
    out[top:top + eh, left:left + ew, :] = rng.standard_normal((eh, ew, img.shape[2]))
    return out


def color_jitter(img, rng, brightness=0.2, contrast=0.2, saturation=0.2, hue=0.1):
    ops = []
    if brightness:
        ops.append((adjust_brightness, rng.uniform(max(0.0, 1 - brightness), 1 + brightness)))
    if contrast:
        ops.append((adjust_contrast, rng.uniform(max(0.0, 1 - contrast), 1 + contrast)))
    if saturation:
        ops.append((adjust_saturation, rng.uniform(max(0.0, 1 - saturation), 1 + saturation)))
    if hue:
        ops.append((adjust_hue, rng.uniform(-hue, hue)))
    for idx in rng.permutation(len(ops)):
        fn, factor = ops[idx]
        img = fn(img, factor)
    return img


def augment(image, rng: np.random.Generator, config: AugmentConfig | None = None) -> np.ndarray:
    """Training-time pipeline, applied in this order: horizontal flip,
    grayscale, rotation, colour jitter, perspective, normalisation, erasing."""
    cfg = config or AugmentConfig()
    img = _check_image(image)
    if img.size and (img.min() < 0.0 or img.max() > 1.0):
        raise RangeError("augment expects pixel values in [0, 1]")
    if rng.uniform() < cfg.flip_p:
        img = hflip(img)
    if rng.uniform() < cfg.grayscale_p:
        img = to_grayscale(img)
    angle = rng.uniform(-cfg.rotation_degrees, cfg.rotation_degrees)
    img = rotate(img, angle)
    img = color_jitter(img, rng, cfg.brightness, cfg.contrast, cfg.saturation, cfg.hue)
    if rng.uniform() < cfg.perspective_p:
        start, end = perspective_points(img.shape[0], img.shape[1], cfg.perspective_distortion, rng)
        img = perspective(img, start, end)
    img = normalize(img, cfg.mean, cfg.std)
    return random_erasing(img, rng, cfg.erasing_p, cfg.erasing_scale, cfg.erasing_ratio)
