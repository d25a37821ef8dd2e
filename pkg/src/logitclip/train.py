"""SGD training loop, evaluation, and validation-based threshold selection."""

from __future__ import annotations

import logging
from dataclasses import asdict, dataclass, field

import numpy as np

from logitclip.errors import ConfigError, DimensionError, NumericalAbort
from logitclip.losses import BaseLoss, LossSpec, loss_forward_backward
from logitclip.model import MlpModel
from logitclip.noise import NoisyDataset
from logitclip.numerics import Rng
from logitclip.transforms import ClipConfig

log = logging.getLogger(__name__)

# candidate values of 1/tau for the threshold sweep
DEFAULT_INV_TAU_GRID = (0.1,) + tuple(0.5 * i for i in range(1, 11))
NORM_REG_GRID = (0.01, 0.05, 0.1, 0.5)


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 100
    batch: int = 128
    lr: float = 0.1
    momentum: float = 0.9
    weight_decay: float = 5e-4
    decay_epochs: tuple = (40, 70)
    decay_factor: float = 0.1
    grad_clip: float | None = None
    last_n: int = 10
    seed: int = 0
    eval_every: int = 1

    def __post_init__(self):
        object.__setattr__(self, "decay_epochs", tuple(int(e) for e in self.decay_epochs))
        if self.epochs < 0 or self.batch < 1 or self.last_n < 1 or self.eval_every < 1:
            raise ConfigError("epochs must be >= 0; batch, last_n and eval_every >= 1")
        if not (self.lr > 0 and 0 <= self.momentum < 1 and self.weight_decay >= 0 and self.decay_factor > 0):
            raise ConfigError("need lr > 0, momentum in [0, 1), weight_decay >= 0, decay_factor > 0")
        if self.grad_clip is not None and not self.grad_clip > 0:
            raise ConfigError("grad_clip must be positive when set")
        if self.epochs > 0:
            if any(not 0 < e < self.epochs for e in self.decay_epochs):
                raise ConfigError("decay epochs must lie strictly inside (0, epochs)")
            if self.last_n > self.epochs:
                raise ConfigError("last_n cannot exceed epochs")

    def lr_at(self, epoch):
        return self.lr * self.decay_factor ** sum(epoch >= e for e in self.decay_epochs)

    def replace(self, **changes):
        d = asdict(self)
        d.update(changes)
        return TrainConfig(**d)

    def to_dict(self):
        d = asdict(self)
        d["decay_epochs"] = list(self.decay_epochs)
        return d

    @classmethod
    def from_dict(cls, d):
        known = cls.__dataclass_fields__
        unknown = set(d) - set(known)
        if unknown:
            raise ConfigError(f"unknown train fields {sorted(unknown)}")
        return cls(**d)


@dataclass
class TrainReport:
    train_loss: list = field(default_factory=list)
    train_acc: list = field(default_factory=list)
    test_acc: list = field(default_factory=list)
    final_metric: float | None = None
    peak_test_acc: float | None = None
    peak_epoch: int | None = None

    def to_dict(self):
        return asdict(self)

    @classmethod
    def from_dict(cls, d):
        return cls(**d)

    @property
    def final_drop(self):
        """Peak test accuracy minus test accuracy at the last epoch."""
        if self.peak_test_acc is None:
            return None
        return self.peak_test_acc - self.test_acc[-1]


class SgdState:
    def __init__(self, model: MlpModel):
        self.velocity = [np.zeros_like(p) for p in model.params]


def sgd_step(model: MlpModel, grads, state: SgdState, cfg: TrainConfig, lr=None):
    """In-place momentum SGD: ``v = mu v + (g + wd theta); theta -= lr v``.

    With ``cfg.grad_clip`` set, the concatenated gradient is norm-clipped
    before weight decay is added.
    """
    lr = cfg.lr if lr is None else lr
    scale = 1.0
    if cfg.grad_clip is not None:
        norm = np.sqrt(sum(float(np.sum(g * g)) for g in grads))
        if norm >= cfg.grad_clip:
            scale = cfg.grad_clip / norm
    for p, g, v in zip(model.params, grads, state.velocity):
        if p.shape != g.shape:
            raise DimensionError(f"gradient shape {g.shape} does not match parameter {p.shape}")
        v *= cfg.momentum
        v += scale * g
        if cfg.weight_decay:
            v += cfg.weight_decay * p
        p -= lr * v
    return model, state


def accuracy(model: MlpModel, features, labels, chunk=8192):
    labels = np.asarray(labels)
    if labels.size == 0:
        return float("nan")
    hits = 0
    for s in range(0, labels.size, chunk):
        z = model.forward(features[s:s + chunk])
        hits += int(np.sum(np.argmax(z, axis=1) == labels[s:s + chunk]))
    return hits / labels.size


def eval_labels(ds: NoisyDataset):
    return ds.clean_labels if ds.clean_labels is not None else ds.noisy_labels


def train(model: MlpModel, dataset: NoisyDataset, loss: LossSpec, cfg: TrainConfig, test_set: NoisyDataset) -> TrainReport:
    """Train in place on ``dataset.noisy_labels``; test accuracy uses the
    clean labels of ``test_set`` when present."""
    loss.clip.check_trainable()
    if dataset.d != model.widths[0] or dataset.k != model.widths[-1]:
        raise DimensionError(f"dataset (d={dataset.d}, K={dataset.k}) does not fit model widths {model.widths}")
    x, y = dataset.features, dataset.noisy_labels
    n = dataset.n
    shuffle = Rng(cfg.seed).split("shuffle").gen
    state = SgdState(model)
    report = TrainReport()
    test_y = eval_labels(test_set)

    for epoch in range(cfg.epochs):
        lr = cfg.lr_at(epoch)
        perm = shuffle.permutation(n)
        total = 0.0
        for b, start in enumerate(range(0, n, cfg.batch)):
            idx = perm[start:start + cfg.batch]
            xb = x[idx]
            z, cache = model.forward(xb, cache=True)
            out = loss_forward_backward(loss, z, y[idx])
            batch_sum = float(np.sum(out.value))
            if not np.isfinite(batch_sum):
                raise NumericalAbort(epoch, b, batch_sum / len(idx))
            grads = model.backward(xb, out.grad_z / len(idx), cache)
            sgd_step(model, grads, state, cfg, lr)
            total += batch_sum
        report.train_loss.append(total / n)
        report.train_acc.append(accuracy(model, x, y))
        evaluate = (epoch + 1) % cfg.eval_every == 0 or epoch >= cfg.epochs - cfg.last_n
        report.test_acc.append(accuracy(model, test_set.features, test_y) if evaluate else None)

    measured = [(a, e) for e, a in enumerate(report.test_acc) if a is not None]
    if measured:
        report.final_metric = float(np.mean(report.test_acc[-cfg.last_n:]))
        report.peak_test_acc, report.peak_epoch = max(measured, key=lambda t: (t[0], -t[1]))
    return report


@dataclass
class SweepResult:
    best: float
    table: list  # [(candidate, validation metric), ...]
    report: TrainReport | None = None

    def to_dict(self):
        return {
            "best": self.best,
            "table": [[c, m] for c, m in self.table],
            "report": None if self.report is None else self.report.to_dict(),
        }


def split_validation(dataset: NoisyDataset, val_fraction, seed):
    """Hold out a random fraction of the (noisy) training set for model selection."""
    if not 0 < val_fraction <= 0.5:
        raise ConfigError("val_fraction must lie in (0, 0.5]")
    perm = Rng(seed).split("sweep-split").gen.permutation(dataset.n)
    n_val = max(1, int(round(val_fraction * dataset.n)))
    val_idx, fit_idx = np.sort(perm[:n_val]), np.sort(perm[n_val:])
    fit = dataset.subset(fit_idx)
    held = dataset.subset(val_idx)
    # selection is scored against the noisy labels
    val = NoisyDataset(held.features, held.noisy_labels, held.k)
    return fit, val


def select_by_validation(model_factory, dataset, candidates, cfg, val_fraction=0.1, test_set=None):
    """Train one model per ``(key, LossSpec)`` candidate on the reduced set,
    score it by last-N-averaged accuracy on the noisy held-out split, and
    keep the first best (candidates are tried in the given order).
    Retrains the winner on the full set when ``test_set`` is given."""
    if not candidates:
        raise ConfigError("candidate grid is empty")
    fit, val = split_validation(dataset, val_fraction, cfg.seed)
    table = []
    best_key, best_spec, best_score = None, None, -np.inf
    for key, spec in candidates:
        rep = train(model_factory(), fit, spec, cfg, val)
        score = rep.final_metric if rep.final_metric is not None else -np.inf
        log.debug("candidate %s -> validation %.4f", key, score)
        table.append((key, score))
        if score > best_score:
            best_key, best_spec, best_score = key, spec, score
    report = None
    if test_set is not None:
        report = train(model_factory(), dataset, best_spec, cfg, test_set)
    return SweepResult(best_key, table, report)


def sweep_tau(
    model_factory,
    dataset: NoisyDataset,
    base: BaseLoss,
    grid=DEFAULT_INV_TAU_GRID,
    cfg: TrainConfig = TrainConfig(),
    val_fraction=0.1,
    test_set: NoisyDataset | None = None,
    clip_kind="by_norm",
) -> SweepResult:
    """Pick ``1/tau`` from ``grid`` by noisy-validation accuracy.

    Ties go to the smaller ``1/tau`` (larger, gentler threshold). ``best``
    in the result is the winning ``1/tau``.
    """
    grid = sorted(float(g) for g in grid)
    if not grid:
        raise ConfigError("tau grid is empty")
    candidates = [(g, LossSpec(base, ClipConfig(clip_kind, 1.0 / g))) for g in grid]
    return select_by_validation(model_factory, dataset, candidates, cfg, val_fraction, test_set)
