"""Experiment configs, seeded runs and persisted, replayable results.

Seed plan: the top-level ``seed`` draws the dataset (substream
``dataset``). Each run seed ``s`` owns label noise (``Rng(s)/noise``),
weight init (``Rng(s)/init``), minibatch order (``Rng(s)/shuffle``) and
the validation split of a sweep (``Rng(s)/sweep-split``).
"""

from __future__ import annotations

import hashlib
import json
import logging
import os
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from logitclip import __version__
from logitclip.data import gen_train_test, load_dataset_csv
from logitclip.errors import ConfigError
from logitclip.losses import LossSpec, make_base_loss
from logitclip.model import MlpModel
from logitclip.noise import NoiseSpec, NoisyDataset, measure_noise
from logitclip.numerics import Rng
from logitclip.train import (
    DEFAULT_INV_TAU_GRID,
    NORM_REG_GRID,
    TrainConfig,
    TrainReport,
    select_by_validation,
    sweep_tau,
    train,
)

log = logging.getLogger(__name__)

OUTPUT_ENV = "LOGITCLIP_OUTPUT_DIR"
TOOL = "logitclip"
SELECT_MODES = ("none", "tau", "norm_reg")


@dataclass(frozen=True)
class DatasetSpec:
    kind: str = "gaussians"
    k: int = 4
    n: int = 4000
    d: int = 2
    separation: float = 3.0
    csv_path: str | None = None
    n_test: int | None = None
    test_csv_path: str | None = None

    def load(self, rng: Rng):
        """Return ``(train, test)``; both carry clean labels."""
        if self.csv_path:
            train_set = load_dataset_csv(_existing(self.csv_path), k=self.k)
            if self.test_csv_path:
                test_set = load_dataset_csv(_existing(self.test_csv_path), k=train_set.k)
            else:
                # no held-out file: score against the clean training labels
                test_set = train_set
            return train_set, test_set
        return gen_train_test(self.kind, self.k, self.n, self.d, self.separation, rng, n_test=self.n_test)

    @classmethod
    def from_dict(cls, d):
        return _from_fields(cls, d, "dataset")


@dataclass(frozen=True)
class ModelSpec:
    hidden: tuple = (64, 64)
    activation: str = "relu"

    def __post_init__(self):
        object.__setattr__(self, "hidden", tuple(int(h) for h in self.hidden))

    def widths(self, d, k):
        return [d, *self.hidden, k]

    def to_dict(self):
        return {"hidden": list(self.hidden), "activation": self.activation}

    @classmethod
    def from_dict(cls, d):
        return _from_fields(cls, d, "model")


@dataclass(frozen=True)
class Variant:
    """One row of a comparison: a loss plus how its hyperparameter is chosen.

    ``select`` is ``none`` (train ``loss`` as given), ``tau`` (pick the
    threshold of a ``clip_kind`` transform by validation over ``grid`` of
    ``1/tau``) or ``norm_reg`` (pick the norm penalty weight from ``grid``).
    """

    label: str
    loss: LossSpec
    select: str = "none"
    clip_kind: str = "by_norm"
    activation: str | None = None
    grid: tuple | None = None

    def __post_init__(self):
        if self.select not in SELECT_MODES:
            raise ConfigError(f"unknown selection {self.select!r}; expected one of {SELECT_MODES}")
        if self.grid is not None:
            object.__setattr__(self, "grid", tuple(float(g) for g in self.grid))

    def to_dict(self):
        return {
            "label": self.label,
            "loss": self.loss.to_dict(),
            "select": self.select,
            "clip_kind": self.clip_kind,
            "activation": self.activation,
            "grid": None if self.grid is None else list(self.grid),
        }

    @classmethod
    def from_dict(cls, d):
        d = dict(d)
        if "label" not in d or "loss" not in d:
            raise ConfigError("a variant needs 'label' and 'loss'")
        d["loss"] = LossSpec.from_dict(d["loss"])
        return _from_fields(cls, d, "variant")


@dataclass(frozen=True)
class CompareSpec:
    losses: tuple = ("ce",)
    seeds: tuple = (0,)
    lc_kind: str = "by_norm"
    grid: tuple = DEFAULT_INV_TAU_GRID
    val_fraction: float = 0.1
    variants: tuple = ()

    def __post_init__(self):
        object.__setattr__(self, "losses", tuple(self.losses))
        object.__setattr__(self, "seeds", tuple(int(s) for s in self.seeds))
        object.__setattr__(self, "grid", tuple(float(g) for g in self.grid))
        object.__setattr__(self, "variants", tuple(self.variants))
        if not self.seeds:
            raise ConfigError("compare needs at least one seed")

    def rows(self):
        """Explicit variants, or each loss with and without the clip."""
        if self.variants:
            return list(self.variants)
        out = []
        for name in self.losses:
            base = make_base_loss(name)
            out.append(Variant(name, LossSpec(base)))
            out.append(Variant(f"{name}+lc", LossSpec(base), select="tau", clip_kind=self.lc_kind))
        return out

    def to_dict(self):
        return {
            "losses": list(self.losses),
            "seeds": list(self.seeds),
            "lc_kind": self.lc_kind,
            "grid": list(self.grid),
            "val_fraction": self.val_fraction,
            "variants": [v.to_dict() for v in self.variants],
        }

    @classmethod
    def from_dict(cls, d):
        d = dict(d or {})
        d["variants"] = [Variant.from_dict(v) for v in d.get("variants") or []]
        return _from_fields(cls, d, "compare")


@dataclass(frozen=True)
class ExperimentConfig:
    dataset: DatasetSpec = field(default_factory=DatasetSpec)
    noise: NoiseSpec = field(default_factory=NoiseSpec)
    loss: LossSpec = field(default_factory=LossSpec)
    train: TrainConfig = field(default_factory=TrainConfig)
    model: ModelSpec = field(default_factory=ModelSpec)
    compare: CompareSpec = field(default_factory=CompareSpec)
    output: str | None = None
    seed: int = 0

    def to_dict(self):
        return {
            "dataset": asdict(self.dataset),
            "noise": self.noise.to_dict(),
            "loss": self.loss.to_dict(),
            "train": self.train.to_dict(),
            "model": self.model.to_dict(),
            "compare": self.compare.to_dict(),
            "output": self.output,
            "seed": self.seed,
        }

    @classmethod
    def from_dict(cls, d):
        if not isinstance(d, dict):
            raise ConfigError("config must be a JSON object")
        unknown = set(d) - set(cls.__dataclass_fields__)
        if unknown:
            raise ConfigError(f"unknown config sections {sorted(unknown)}")
        try:
            return cls(
                dataset=DatasetSpec.from_dict(d.get("dataset") or {}),
                noise=NoiseSpec.from_dict(d.get("noise")),
                loss=LossSpec.from_dict(d.get("loss") or {"base": "ce"}),
                train=TrainConfig.from_dict(d.get("train") or {}),
                model=ModelSpec.from_dict(d.get("model") or {}),
                compare=CompareSpec.from_dict(d.get("compare")),
                output=d.get("output"),
                seed=int(d.get("seed", 0)),
            )
        except (KeyError, TypeError) as exc:
            raise ConfigError(f"malformed config: {exc}") from None

    @classmethod
    def load(cls, path):
        try:
            with open(_existing(path)) as fh:
                return cls.from_dict(json.load(fh))
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: invalid JSON ({exc})") from None


def _from_fields(cls, d, what):
    d = dict(d or {})
    unknown = set(d) - set(cls.__dataclass_fields__)
    if unknown:
        raise ConfigError(f"unknown {what} fields {sorted(unknown)}")
    return cls(**d)


def _existing(path):
    if not Path(path).exists():
        raise ConfigError(f"file not found: {path}")
    return path


def canonical_json(obj):
    return json.dumps(obj, sort_keys=True, separators=(",", ":"))


def content_hash(obj):
    return hashlib.sha256(canonical_json(obj).encode()).hexdigest()


def output_path(path, default_name):
    """Resolve a result path; relative paths go under ``$LOGITCLIP_OUTPUT_DIR``."""
    base = Path(os.environ.get(OUTPUT_ENV, "."))
    p = Path(path) if path else Path(default_name)
    return p if p.is_absolute() else base / p


# ---------------------------------------------------------------------------
# runs


def load_data(cfg: ExperimentConfig):
    return cfg.dataset.load(Rng(cfg.seed).split("dataset"))


def model_factory(cfg: ExperimentConfig, d, k, seed, activation=None):
    widths = cfg.model.widths(d, k)
    act = activation or cfg.model.activation
    return lambda: MlpModel.init(widths, act, rng=Rng(seed).split("init"))


def noisy_train_set(cfg: ExperimentConfig, clean: NoisyDataset, seed) -> NoisyDataset:
    return cfg.noise.apply(clean, Rng(seed))


def _noise_summary(ds: NoisyDataset):
    rate, est = measure_noise(ds.clean_labels, ds.noisy_labels, ds.k)
    return {"rate": rate, "matrix": est.tolist()}


def run_variant(cfg: ExperimentConfig, variant: Variant, clean, test, seed):
    """Train one variant for one run seed; returns a JSON-ready record."""
    tcfg = cfg.train.replace(seed=seed)
    noisy = noisy_train_set(cfg, clean, seed)
    factory = model_factory(cfg, clean.d, clean.k, seed, variant.activation)
    selected, table = None, None
    if variant.select == "none":
        report = train(factory(), noisy, variant.loss, tcfg, test)
    elif variant.select == "tau":
        grid = variant.grid or cfg.compare.grid
        res = sweep_tau(factory, noisy, variant.loss.base, grid, tcfg, cfg.compare.val_fraction, test, variant.clip_kind)
        selected, table, report = res.best, res.table, res.report
    else:
        grid = variant.grid or NORM_REG_GRID
        cands = [(float(lam), LossSpec(variant.loss.base, variant.loss.clip, float(lam))) for lam in grid]
        res = select_by_validation(factory, noisy, cands, tcfg, cfg.compare.val_fraction, test)
        selected, table, report = res.best, res.table, res.report
    return {
        "seed": seed,
        "selected": selected,
        "selection_table": None if table is None else [[c, m] for c, m in table],
        "final_metric": report.final_metric,
        "final_drop": report.final_drop,
        "measured_noise": _noise_summary(noisy),
        "report": report.to_dict(),
    }


def _envelope(command, cfg: ExperimentConfig, results, started):
    config = cfg.to_dict()
    return {
        "tool": TOOL,
        "version": __version__,
        "command": command,
        "seed": cfg.seed,
        "config": config,
        "config_hash": content_hash(config),
        "results": results,
        "results_hash": content_hash(results),
        "wall_clock_s": time.perf_counter() - started,
    }


def _jsonable(obj):
    # round-trip so stored and fresh results compare on identical terms
    return json.loads(json.dumps(obj))


def run_train(cfg: ExperimentConfig):
    """Single training run with ``cfg.loss`` at run seed ``cfg.train.seed``."""
    started = time.perf_counter()
    clean, test = load_data(cfg)
    rec = run_variant(cfg, Variant(cfg.loss.base.name, cfg.loss), clean, test, cfg.train.seed)
    return _envelope("train", cfg, _jsonable(rec), started)


def run_sweep(cfg: ExperimentConfig):
    """Threshold sweep for ``cfg.loss`` over ``compare.grid`` with a
    ``compare.lc_kind`` transform."""
    started = time.perf_counter()
    clean, test = load_data(cfg)
    v = Variant(f"{cfg.loss.base.name}+lc", cfg.loss, select="tau", clip_kind=cfg.compare.lc_kind)
    rec = run_variant(cfg, v, clean, test, cfg.train.seed)
    return _envelope("sweep", cfg, _jsonable(rec), started)


def summarize(label, runs):
    finals = np.array([r["final_metric"] for r in runs], dtype=float)
    drops = np.array([r["final_drop"] for r in runs], dtype=float)
    return {
        "variant": label,
        "mean": float(finals.mean()),
        "std": float(finals.std()),  # population std over seeds
        "mean_drop": float(drops.mean()),
        "n_seeds": len(runs),
        "runs": runs,
    }


def run_compare(cfg: ExperimentConfig):
    started = time.perf_counter()
    clean, test = load_data(cfg)
    rows = []
    for variant in cfg.compare.rows():
        runs = []
        for seed in cfg.compare.seeds:
            log.info("compare: %s seed %d", variant.label, seed)
            runs.append(run_variant(cfg, variant, clean, test, seed))
        rows.append(summarize(variant.label, runs))
    return _envelope("compare", cfg, _jsonable({"rows": rows}), started)


RUNNERS = {"train": run_train, "sweep": run_sweep, "compare": run_compare}


def replay(stored: dict):
    """Re-run a stored result's config; returns ``(identical, fresh)``.

    Only the ``results`` section is compared; wall-clock is outside it.
    """
    command = stored.get("command")
    if command not in RUNNERS or "config" not in stored:
        raise ConfigError("not a replayable result file")
    cfg = ExperimentConfig.from_dict(stored["config"])
    if content_hash(cfg.to_dict()) != stored.get("config_hash"):
        raise ConfigError("stored config does not match its hash")
    fresh = RUNNERS[command](cfg)
    return fresh["results"] == stored["results"], fresh


def report_from(record) -> TrainReport:
    return TrainReport.from_dict(record["report"])


def compare_csv(result):
    lines = ["variant,mean,std,mean_drop,n_seeds"]
    for row in result["results"]["rows"]:
        lines.append(f"{row['variant']},{row['mean']!r},{row['std']!r},{row['mean_drop']!r},{row['n_seeds']}")
    return "\n".join(lines) + "\n"


def schema_path():
    return Path(__file__).with_name("compare_result.schema.json")
