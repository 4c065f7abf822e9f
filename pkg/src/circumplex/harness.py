"""Training loop, evaluation and cross-dataset validation."""

from __future__ import annotations

import json
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Callable

import numpy as np

from . import diffcore as dc
from . import losses
from .affect_core import (
    ValueRange,
    compute_class_weights,
    compute_pos_weights,
    get_space,
    label_counts,
)
from .data import Manifest, load_manifest
from .errors import ConfigError, NumericError, SpaceError
from .metrics import (
    DEFAULT_CDF_GRID,
    EvalReport,
    abs_error_cdf,
    confusion_matrix,
    prf1_from_counts,
    prf1_macro,
    regression_errors,
    topk_accuracy,
)
from .model import Model, ModelCheckpoint, ModelConfig, init_model, predict, warm_start

SHARED_DIMS = ("valence", "arousal")


@dataclass
class TrainConfig:
    regime: str = "combined"
    alpha: float = 5.0
    beta: float = 3.0
    batch_size: int = 128
    lr: float = 5e-5
    lr_min: float = 0.0
    epochs: int = 10
    seed: int = 0
    train_manifest: str | None = None
    validation_manifest: str | None = None
    space: str | None = None  # defaults to the manifest's own
    balance_by_class: bool = False
    weight_decay: float = 0.01
    betas: tuple[float, float] = (0.9, 0.999)
    eps: float = 1e-8
    hidden_dims: list[int] = field(default_factory=lambda: [256])
    warm_start: str | None = None
    class_weighting: bool = True
    out_dir: str | None = None

    @classmethod
    def from_dict(cls, data: dict) -> "TrainConfig":
        data = dict(data)
        if "betas" in data:
            data["betas"] = tuple(data["betas"])
        unknown = set(data) - set(cls.__dataclass_fields__)
        if unknown:
            raise ConfigError(f"unknown train config keys {sorted(unknown)}")
        return cls(**data)

    @classmethod
    def from_json(cls, path) -> "TrainConfig":
        path = Path(path)
        cfg = cls.from_dict(json.loads(path.read_text(encoding="utf-8")))
        # manifest paths in a config file are relative to that file
        for key in ("train_manifest", "validation_manifest", "warm_start"):
            value = getattr(cfg, key)
            if value and not Path(value).is_absolute():
                setattr(cfg, key, str(path.parent / value))
        return cfg


@dataclass
class RunLog:
    epochs: list[dict] = field(default_factory=list)
    lr_trace: list[float] = field(default_factory=list)
    step_losses: list[float] = field(default_factory=list)
    total_steps: int = 0
    best_epoch: int | None = None
    wall_time: float = 0.0
    checkpoint_path: str | None = None

    def to_json(self) -> str:
        return json.dumps(asdict(self), indent=2, sort_keys=True)


@dataclass
class StepInfo:
    step: int
    epoch: int
    lr: float
    loss: float
    grads: dict[str, np.ndarray]
    params: dict[str, np.ndarray]


def _load(manifest, space=None) -> Manifest:
    if manifest is None or isinstance(manifest, Manifest):
        return manifest
    if space is None:
        raise ConfigError("a label space name is needed to load a manifest path")
    return load_manifest(manifest, space)


def _epoch_order(labels: np.ndarray | None, n: int, rng: np.random.Generator, balance: bool) -> np.ndarray:
    if not balance:
        return rng.permutation(n)
    classes = np.unique(labels)
    per_class = min(int(np.sum(labels == c)) for c in classes)
    keep = np.concatenate([rng.choice(np.flatnonzero(labels == c), per_class, replace=False) for c in classes])
    return rng.permutation(keep)


def _batches_per_epoch(n: int, batch_size: int) -> int:
    return -(-n // batch_size)


class _Objective:
    """Builds the regime's loss graph for one batch."""

    def __init__(self, config: TrainConfig, train: Manifest):
        space = train.space
        self.regime = config.regime
        self.multi_label = space.multi_label
        if self.multi_label and self.regime == "discrete":
            raise ConfigError("multi-label spaces train with the weighted-BCE combined loss; discrete regime unsupported")
        counts = label_counts(train.label_sets(), space.num_classes)
        cw = pw = None
        if self.regime != "valence_arousal" and config.class_weighting:
            if self.multi_label:
                pw = compute_pos_weights(counts, len(train))
            else:
                cw = compute_class_weights(counts)
        self.loss_config = losses.LossConfig(alpha=config.alpha, beta=config.beta, class_weights=cw, pos_weights=pw)
        if self.multi_label and pw is None:
            self.loss_config.pos_weights = np.ones(space.num_classes)
        self.targets = train.multi_hot() if self.multi_label else train.single_labels()
        self.cont = train.continuous_unit()

    def __call__(self, logits, cont, idx):
        cfg = self.loss_config
        if self.regime == "discrete":
            ce = losses.weighted_ce_graph(logits, self.targets[idx], cfg.class_weights)
            return ce, {"ce": ce}
        if self.regime == "valence_arousal":
            return losses.valence_arousal_graph(cont, self.cont[idx], cfg)
        if self.multi_label:
            return losses.bce_combined_graph(logits, self.targets[idx], cont, self.cont[idx], cfg)
        return losses.combined_graph(logits, self.targets[idx], cont, self.cont[idx], cfg)


def _selection_key(regime: str, report: EvalReport) -> tuple:
    """Larger is better."""
    rmse = report.regression_unit or report.regression
    rmse = rmse["pooled"]["rmse"] if rmse else np.inf
    f1 = report.f1 if report.f1 is not None else -np.inf
    if regime == "discrete":
        return (f1,)
    if regime == "valence_arousal":
        return (-rmse,)
    return (f1, -rmse)


def train(config: TrainConfig, train_set: Manifest | None = None, validation: Manifest | None = None,
          on_step: Callable[[StepInfo], None] | None = None) -> tuple[ModelCheckpoint, RunLog]:
    """Train one model; returns the best-epoch checkpoint and the run log.

    Batches come from a seeded shuffle (the last partial batch is kept), the
    learning rate follows a cosine schedule over ``epochs * batches`` steps,
    and ``on_step`` sees every batch's gradients before the update. With a
    validation set the returned checkpoint is the best epoch by F1 (discrete),
    pooled RMSE (valence-arousal) or F1 then RMSE (combined); otherwise it is
    the last epoch.
    """
    start = time.perf_counter()
    space_name = config.space
    train_set = _load(train_set if train_set is not None else config.train_manifest, space_name)
    if train_set is None or len(train_set) == 0:
        raise ConfigError("training needs a non-empty manifest")
    space = train_set.space
    if space_name and space_name != space.name:
        raise SpaceError(f"config names space {space_name} but manifest is {space.name}")
    validation = _load(validation if validation is not None else config.validation_manifest, space.name)
    if config.batch_size < 1 or config.epochs < 0:
        raise ConfigError("batch_size must be >= 1 and epochs >= 0")

    if config.balance_by_class and space.multi_label:
        raise ConfigError("balance_by_class needs a single-label space")
    objective = _Objective(config, train_set)
    features = train_set.features()
    mcfg = ModelConfig(input_dim=features.shape[1], num_classes=space.num_classes, hidden_dims=list(config.hidden_dims),
                       regime=config.regime, continuous_dims=len(space.continuous_dims), seed=config.seed,
                       multi_label=space.multi_label)
    model = init_model(mcfg)
    if config.warm_start:
        donor = ModelCheckpoint.load(config.warm_start) if not isinstance(config.warm_start, ModelCheckpoint) else config.warm_start
        if not warm_start(model, donor):
            raise ConfigError("warm-start checkpoint shares no weight segments with this model")

    rng = np.random.default_rng(config.seed)
    labels = train_set.single_labels() if config.balance_by_class and not space.multi_label else None
    if labels is not None:
        per_epoch = min(np.bincount(labels, minlength=space.num_classes)[np.unique(labels)]) * len(np.unique(labels))
    else:
        per_epoch = len(train_set)
    steps_per_epoch = _batches_per_epoch(per_epoch, config.batch_size)
    total_steps = max(config.epochs * steps_per_epoch, 1)
    state = dc.OptimizerState(lr=config.lr, weight_decay=config.weight_decay, betas=tuple(config.betas), eps=config.eps)
    log = RunLog(total_steps=config.epochs * steps_per_epoch)
    meta = {"space": space.name, "regime": config.regime}
    best = ModelCheckpoint.from_model(model, epoch=0, **meta)
    best_key = None
    out_dir = Path(config.out_dir) if config.out_dir else None
    if out_dir:
        (out_dir / "checkpoints").mkdir(parents=True, exist_ok=True)

    step = 0
    for epoch in range(1, config.epochs + 1):
        order = _epoch_order(labels, len(train_set), rng, config.balance_by_class)
        sums: dict[str, float] = {}
        seen = 0
        epoch_counts = np.bincount(train_set.single_labels()[order], minlength=space.num_classes) if not space.multi_label else None
        for b in range(0, len(order), config.batch_size):
            idx = order[b:b + config.batch_size]
            lr = dc.cosine_lr(step, total_steps, config.lr, config.lr_min)
            leaves = {k: dc.Tensor(v, requires_grad=True, name=k) for k, v in model.params.items()}
            logits, cont = model.graph(features[idx], leaves)
            root, parts = objective(logits, cont, idx)
            value = float(root.value)
            if not np.isfinite(value):
                raise NumericError(f"non-finite loss {value} at epoch {epoch}, step {step}, "
                                   f"batch rows {idx[:8].tolist()}{'...' if len(idx) > 8 else ''}")
            dc.backward(root)
            grads = {k: (t.grad if t.grad is not None else np.zeros_like(t.value)) for k, t in leaves.items()}
            if on_step is not None:
                on_step(StepInfo(step, epoch, lr, value, grads, model.params))
            model.params, state = dc.adamw_step(model.params, grads, state, lr=lr)
            log.lr_trace.append(lr)
            log.step_losses.append(value)
            n = len(idx)
            seen += n
            sums["loss"] = sums.get("loss", 0.0) + value * n
            for name, part in parts.items():
                sums[name] = sums.get(name, 0.0) + float(part.value) * n
            step += 1
        entry = {"epoch": epoch, "train": {k: v / seen for k, v in sums.items()}, "samples": seen}
        if epoch_counts is not None:
            entry["class_counts"] = epoch_counts.tolist()
        ckpt = ModelCheckpoint.from_model(model, epoch=epoch, loss_history=[e["train"]["loss"] for e in log.epochs] + [entry["train"]["loss"]], **meta)
        if validation is not None and len(validation):
            report = evaluate(ckpt, validation)
            entry["validation"] = _summary(report)
            key = _selection_key(config.regime, report)
            if best_key is None or key > best_key:
                best_key, best, log.best_epoch = key, ckpt, epoch
        else:
            best, log.best_epoch = ckpt, epoch
        if out_dir:
            ckpt.save(out_dir / "checkpoints" / f"epoch_{epoch:03d}.npz")
        log.epochs.append(entry)

    log.wall_time = time.perf_counter() - start
    if out_dir:
        path = best.save(out_dir / "checkpoint.npz")
        log.checkpoint_path = str(path)
        (out_dir / "runlog.json").write_text(log.to_json(), encoding="utf-8")
    return best, log


def _summary(report: EvalReport) -> dict:
    out = {"f1": report.f1, "precision": report.precision, "recall": report.recall, "accuracy": report.accuracy}
    reg = report.regression_unit or report.regression
    if reg:
        out["rmse_pooled"] = reg["pooled"]["rmse"]
    if report.ccc:
        out["ccc"] = report.ccc
    if report.topk_accuracy:
        out["topk_accuracy"] = report.topk_accuracy
    return {k: v for k, v in out.items() if v is not None}


def _resolve_model(model):
    """Accept a checkpoint, a checkpoint path, a Model, or any object with a
    ``predict(features, space)`` method returning a Prediction."""
    if isinstance(model, (str, Path)):
        model = ModelCheckpoint.load(model)
    space_name = None
    if isinstance(model, ModelCheckpoint):
        space_name = model.metadata.get("space")
        model = model.model()
    else:
        space_name = getattr(model, "space_name", None)
    if isinstance(model, Model):
        return (lambda feats, space: predict(model, feats, space)), space_name, model.config.multi_label
    return model.predict, space_name, getattr(model, "multi_label", None)


def _regression_block(report: EvalReport, pred_unit, target_unit, target_native, space, dims, grid):
    if space.value_range is ValueRange.TEN_INT:
        pred_native = pred_unit * 4.5 + 5.5
        report.regression = regression_errors(pred_native, target_native, dims)
        report.regression_unit = regression_errors(pred_unit, target_unit, dims)
    else:
        report.regression = regression_errors(pred_unit, target_unit, dims)
    report.ccc = {}
    for j, d in enumerate(dims):
        try:
            report.ccc[d] = losses.ccc(pred_unit[:, j], target_unit[:, j])
        except NumericError:
            report.ccc[d] = None
    report.cdf = abs_error_cdf(pred_unit, target_unit, grid)
    report.cdf_per_dim = {d: abs_error_cdf(pred_unit[:, j], target_unit[:, j], grid) for j, d in enumerate(dims)}


def evaluate(model, manifest: Manifest, cdf_grid=DEFAULT_CDF_GRID, topk=(1, 3, 5)) -> EvalReport:
    """Full metric bundle for a model on a manifest of its own label space.

    Regression metrics are reported in the manifest's native scale and, for
    integer-scale spaces, additionally on [-1, 1]. The CDF always uses the
    [-1, 1] scale. Use :func:`cross_validate` for a model from another space.
    """
    predict_fn, space_name, _ = _resolve_model(model)
    space = manifest.space
    if space_name is not None and space_name != space.name:
        raise SpaceError(f"model was trained on {space_name} but the manifest is {space.name}; use cross_validate")
    pred = predict_fn(manifest.features(), space)
    report = EvalReport(n_samples=len(manifest), space=space.name, categories=list(space.categories))
    if pred.scores is not None:
        scores = np.asarray(pred.scores)
        if space.multi_label:
            truth = manifest.label_sets()
            report.topk_accuracy = {str(k): topk_accuracy(scores, truth, k) for k in topk if k <= space.num_classes}
            hot = manifest.multi_hot().astype(bool)
            guess = np.zeros_like(hot)
            for i, labs in enumerate(pred.labels):
                guess[i, list(labs)] = True
            prf = prf1_from_counts((hot & guess).sum(0), (~hot & guess).sum(0), (hot & ~guess).sum(0))
        else:
            cm = confusion_matrix(pred.labels, manifest.single_labels(), space.num_classes)
            report.confusion = cm.tolist()
            prf = prf1_macro(cm)
            report.accuracy = prf.accuracy
        report.precision, report.recall, report.f1 = prf.precision, prf.recall, prf.f1
        report.micro_f1 = prf.micro_f1
        report.per_class_prf = [list(t) for t in prf.per_class]
    if pred.continuous is not None:
        dims = list(space.continuous_dims)
        pred_unit = np.asarray(pred.continuous, dtype=np.float64)[:, :len(dims)]
        _regression_block(report, pred_unit, manifest.continuous_unit(dims), manifest.continuous(dims), space, dims,
                          cdf_grid)
    return report


def cross_validate(checkpoint, manifest: Manifest, model_space: str | None = None,
                   cdf_grid=DEFAULT_CDF_GRID) -> EvalReport:
    """Evaluate valence/arousal of a model on a manifest from any label space.

    Targets are rescaled onto [-1, 1] first and only the shared dims are
    scored, on that scale.
    """
    predict_fn, space_name, _ = _resolve_model(checkpoint)
    src = get_space(model_space or space_name) if (model_space or space_name) else None
    if src is None:
        raise SpaceError("cross-validation needs the model's label space")
    dst = manifest.space
    for sp in (src, dst):
        missing = [d for d in SHARED_DIMS if d not in sp.continuous_dims]
        if missing:
            raise SpaceError(f"{sp.name} lacks shared dims {missing}")
    pred = predict_fn(manifest.features(), src)
    if pred.continuous is None:
        raise SpaceError("model has no regression head")
    cols = [src.continuous_dims.index(d) for d in SHARED_DIMS]
    pred_unit = np.asarray(pred.continuous, dtype=np.float64)[:, cols]
    target_unit = manifest.continuous_unit(SHARED_DIMS)
    report = EvalReport(n_samples=len(manifest), space=dst.name, extra={"model_space": src.name})
    report.regression = regression_errors(pred_unit, target_unit, SHARED_DIMS)
    report.ccc = {}
    for j, d in enumerate(SHARED_DIMS):
        try:
            report.ccc[d] = losses.ccc(pred_unit[:, j], target_unit[:, j])
        except NumericError:
            report.ccc[d] = None
    report.cdf = abs_error_cdf(pred_unit, target_unit, cdf_grid)
    report.cdf_per_dim = {d: abs_error_cdf(pred_unit[:, j], target_unit[:, j], cdf_grid) for j, d in enumerate(SHARED_DIMS)}
    return report
