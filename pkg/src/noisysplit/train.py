"""The training loop: decomposed SGD with per-epoch penalties and early stopping.

Each epoch: snapshot sigma, fix (beta1, beta2) for the epoch, shuffle the training
split with an epoch-specific substream, take mini-batch steps, then log metrics.
Early stopping is checkpoint selection: the epoch with the highest accuracy on
the noisy validation split (earliest on ties) is kept.
"""
from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field
from typing import List, Optional

import numpy as np

from . import decomp
from .data import Dataset, SplitIndices
from .decomp import DecomposedParams, OptimizerConfig, ScheduleSpec
from .errors import ConfigError, DataError
from .mlp import MlpArchitecture, ParamSet, init_params, loss_and_grad, predict
from .reporting import format_value
from .tensor import SeededRng, l2_norm

METRIC_FIELDS = [
    "epoch", "lr", "beta1", "beta2", "train_loss",
    "fit_frac_clean", "fit_frac_mislabeled",
    "val_acc_sigma", "val_acc_full", "test_acc_sigma", "test_acc_full",
    "sigma_delta_norm", "gamma_norm",
]

EVAL_BATCH = 4096


@dataclass(frozen=True)
class TrainConfig:
    arch: MlpArchitecture
    optimizer: OptimizerConfig = field(default_factory=OptimizerConfig)
    schedule: ScheduleSpec = field(default_factory=ScheduleSpec)
    mode: str = "full"
    max_epochs: int = 60
    batch_size: int = 32
    seed: int = 0
    eval_params: Optional[str] = None  # "sigma" | "full"; None derives it from mode
    gamma_init: str = "zeros"
    gamma_scale: float = 0.0

    def __post_init__(self):
        decomp.check_mode(self.mode)
        if self.max_epochs < 1 or self.batch_size < 1:
            raise ConfigError("max_epochs and batch_size must be >= 1")
        if self.eval_params not in (None, "sigma", "full"):
            raise ConfigError(f"eval_params must be 'sigma' or 'full', got {self.eval_params!r}")

    @property
    def resolved_eval_params(self):
        return self.eval_params or decomp.eval_params_for(self.mode)


@dataclass
class EpochMetrics:
    epoch: int
    lr: float
    beta1: float
    beta2: float
    train_loss: float
    fit_frac_clean: Optional[float]
    fit_frac_mislabeled: Optional[float]
    val_acc_sigma: float
    val_acc_full: float
    test_acc_sigma: float
    test_acc_full: float
    sigma_delta_norm: float
    gamma_norm: float

    def row(self):
        return [format_value(getattr(self, f)) for f in METRIC_FIELDS]


@dataclass
class TrainResult:
    per_epoch: List[EpochMetrics]
    best_epoch: int
    best_params: ParamSet  # the mode's prediction parameters at best_epoch
    final: DecomposedParams
    mode: str
    eval_params: str

    @property
    def best(self) -> EpochMetrics:
        return self.per_epoch[self.best_epoch - 1]

    def val_acc(self, m: EpochMetrics):
        return m.val_acc_sigma if self.eval_params == "sigma" else m.val_acc_full

    def test_acc(self, m: EpochMetrics):
        return m.test_acc_sigma if self.eval_params == "sigma" else m.test_acc_full

    @property
    def best_val_acc(self):
        return self.val_acc(self.best)

    @property
    def best_test_acc(self):
        return self.test_acc(self.best)

    def metrics_csv(self) -> str:
        lines = [",".join(METRIC_FIELDS)]
        lines.extend(",".join(m.row()) for m in self.per_epoch)
        return "\n".join(lines) + "\n"


def _accuracy(pred, labels):
    return float(np.count_nonzero(pred == labels)) / len(labels) if len(labels) else float("nan")


def _predict_batched(params, x):
    if len(x) <= EVAL_BATCH:
        return predict(params, x)
    return np.concatenate([predict(params, x[i:i + EVAL_BATCH]) for i in range(0, len(x), EVAL_BATCH)])


def evaluate(params: ParamSet, data: Dataset, label_source="clean") -> float:
    """Fraction of examples whose predicted class equals the requested labels."""
    labels = data.labels(label_source)
    return _accuracy(_predict_batched(params, data.features), labels)


def _validate(train_data, split, test_data, cfg):
    arch = cfg.arch
    for name, ds in (("train", train_data), ("test", test_data)):
        if ds.dim != arch.input_dim:
            raise ConfigError(f"{name} data has {ds.dim} features, architecture expects {arch.input_dim}")
        if ds.num_classes != arch.num_classes:
            raise ConfigError(
                f"{name} data has {ds.num_classes} classes, architecture expects {arch.num_classes}")
    n = len(train_data)
    both = np.concatenate([split.train, split.val])
    if len(split.train) == 0 or len(split.val) == 0:
        raise ConfigError("train and validation splits must be nonempty")
    if both.min() < 0 or both.max() >= n or len(np.unique(both)) != len(both):
        raise ConfigError("split indices must be disjoint and within the dataset")
    if test_data.clean_labels is None:
        raise DataError("test data needs clean labels")


def train(train_data: Dataset, split: SplitIndices, test_data: Dataset, cfg: TrainConfig,
          on_epoch=None) -> TrainResult:
    _validate(train_data, split, test_data, cfg)
    mode = cfg.mode
    eval_kind = cfg.resolved_eval_params

    rng = SeededRng(cfg.seed)
    w0 = init_params(cfg.arch, rng.substream("init"))
    dp = decomp.decompose(w0, cfg.gamma_init, cfg.gamma_scale, rng.substream("gamma"))
    shuffle_rng = rng.substream("shuffle")

    x, y = train_data.features, train_data.noisy_labels
    tr, va = split.train, split.val
    flips = train_data.flip_mask
    tr_clean = tr_mis = None
    if flips is not None:
        tr_clean, tr_mis = ~flips[tr], flips[tr]
    x_te, y_te = test_data.features, test_data.clean_labels

    per_epoch, best_epoch, best_params, best_val = [], 0, None, -1.0
    for t in range(1, cfg.max_epochs + 1):
        decomp.snapshot_epoch(dp)
        betas = decomp.mode_betas(t, cfg.schedule, mode)
        order = tr[shuffle_rng.substream(f"epoch-{t}").permutation(len(tr))]
        loss_sum = 0.0
        for s in range(0, len(order), cfg.batch_size):
            bi = order[s:s + cfg.batch_size]
            w = dp.sigma if mode == "standard" else decomp.effective_params(dp)
            bg = loss_and_grad(w, x[bi], y[bi])
            loss_sum += bg.loss * len(bi)
            decomp.step(dp, bg.grads, t, cfg.optimizer, cfg.schedule, mode, betas=betas)

        sigma = dp.sigma
        full = sigma if mode == "standard" else decomp.effective_params(dp)
        pred_sigma = _predict_batched(sigma, x), _predict_batched(sigma, x_te)
        pred_full = pred_sigma if full is sigma else (_predict_batched(full, x), _predict_batched(full, x_te))
        pred_eval = pred_sigma if eval_kind == "sigma" else pred_full

        fit_clean = fit_mis = None
        if tr_clean is not None:
            hit = pred_eval[0][tr] == y[tr]
            fit_clean = float(hit[tr_clean].mean()) if tr_clean.any() else None
            fit_mis = float(hit[tr_mis].mean()) if tr_mis.any() else None

        m = EpochMetrics(
            epoch=t,
            lr=cfg.optimizer.lr_at(t),
            beta1=betas[0],
            beta2=betas[1],
            train_loss=loss_sum / len(order),
            fit_frac_clean=fit_clean,
            fit_frac_mislabeled=fit_mis,
            val_acc_sigma=_accuracy(pred_sigma[0][va], y[va]),
            val_acc_full=_accuracy(pred_full[0][va], y[va]),
            test_acc_sigma=_accuracy(pred_sigma[1], y_te),
            test_acc_full=_accuracy(pred_full[1], y_te),
            sigma_delta_norm=l2_norm(*(dp.sigma - dp.sigma_snapshot).arrays()),
            gamma_norm=l2_norm(*dp.gamma.arrays()),
        )
        if not math.isfinite(m.train_loss):
            raise ArithmeticError(f"training diverged at epoch {t} (loss {m.train_loss})")
        per_epoch.append(m)
        val = m.val_acc_sigma if eval_kind == "sigma" else m.val_acc_full
        if val > best_val:
            best_val, best_epoch = val, t
            best_params = (sigma if eval_kind == "sigma" else full).clone()
        if on_epoch is not None:
            on_epoch(m)

    return TrainResult(per_epoch, best_epoch, best_params, dp, mode, eval_kind)


@dataclass
class MemorizationCurves:
    clean: List[float]
    mislabeled: Optional[List[float]]  # None when the run had no flipped examples


def memorization_curves(result: TrainResult) -> MemorizationCurves:
    clean = [m.fit_frac_clean for m in result.per_epoch]
    mis = [m.fit_frac_mislabeled for m in result.per_epoch]
    if all(c is None for c in clean) and all(v is None for v in mis):
        raise DataError("no flip mask was available for this run; memorization curves need clean labels")
    if all(v is None for v in mis):
        return MemorizationCurves(clean, None)
    return MemorizationCurves(clean, mis)


def metrics_from_csv(text) -> List[dict]:
    """Parse a metrics CSV back into dicts; empty cells become None."""
    rows = csv.DictReader(io.StringIO(text))
    return [{k: (None if v == "" else (int(v) if k == "epoch" else float(v))) for k, v in r.items()}
            for r in rows]
