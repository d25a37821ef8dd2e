"""Synthetic classification tasks and the dataset CSV format."""

from __future__ import annotations

import csv
from pathlib import Path

import numpy as np

from logitclip.errors import ConfigError, ParseError
from logitclip.fileio import atomic_write_text
from logitclip.noise import NoisyDataset
from logitclip.numerics import Rng

KINDS = ("gaussians", "two-moons", "rings")


def _labels(n, k, gen):
    return gen.permutation(np.arange(n) % k)


def _sample(kind, labels, k, d, separation, gen):
    n = labels.size
    x = np.zeros((n, d))
    if kind == "gaussians":
        # class means on a circle of radius `separation`, unit isotropic spread
        ang = 2 * np.pi * labels / k
        x[:, 0] = separation * np.cos(ang)
        x[:, 1] = separation * np.sin(ang)
        x += gen.normal(size=(n, d))
        return x
    t = gen.uniform(0.0, np.pi, size=n)
    sigma = 0.5 / separation
    if kind == "two-moons":
        # interleaved half circles, alternating up/down along the x axis
        up = labels % 2 == 0
        x[:, 0] = labels + np.cos(t)
        x[:, 1] = np.where(up, np.sin(t), 0.5 - np.sin(t))
    else:
        r = labels + 1.0
        t = 2 * t
        x[:, 0] = r * np.cos(t)
        x[:, 1] = r * np.sin(t)
    x[:, :2] += sigma * gen.normal(size=(n, 2))
    if d > 2:
        x[:, 2:] = gen.normal(size=(n, d - 2))
    return x


def _check(kind, k, n, d, separation):
    if kind not in KINDS:
        raise ConfigError(f"unknown synthetic kind {kind!r}; expected one of {KINDS}")
    if k < 2 or n < k or d < 2:
        raise ConfigError(f"need K >= 2, N >= K and d >= 2 (got K={k}, N={n}, d={d})")
    if not separation > 0:
        raise ConfigError("separation must be positive")


def _standardize(x, mean, std):
    return (x - mean) / np.where(std > 0, std, 1.0)


def gen_synthetic(kind, k, n, d=2, separation=3.0, rng: Rng | None = None) -> NoisyDataset:
    """Class-balanced clean dataset, standardized per feature."""
    _check(kind, k, n, d, separation)
    gen = (rng or Rng(0)).gen
    y = _labels(n, k, gen)
    x = _sample(kind, y, k, d, separation, gen)
    x = _standardize(x, x.mean(axis=0), x.std(axis=0))
    return NoisyDataset(x, y, k, clean_labels=y.copy())


def gen_train_test(kind, k, n, d=2, separation=3.0, rng: Rng | None = None, n_test=None):
    """Train and test draws from the same task; the test set is standardized
    with the training statistics."""
    _check(kind, k, n, d, separation)
    rng = rng or Rng(0)
    n_test = n if n_test is None else n_test
    g_train, g_test = rng.split("train").gen, rng.split("test").gen
    y_tr = _labels(n, k, g_train)
    x_tr = _sample(kind, y_tr, k, d, separation, g_train)
    y_te = _labels(n_test, k, g_test)
    x_te = _sample(kind, y_te, k, d, separation, g_test)
    mean, std = x_tr.mean(axis=0), x_tr.std(axis=0)
    train = NoisyDataset(_standardize(x_tr, mean, std), y_tr, k, clean_labels=y_tr.copy())
    test = NoisyDataset(_standardize(x_te, mean, std), y_te, k, clean_labels=y_te.copy())
    return train, test


def load_dataset_csv(path, k=None) -> NoisyDataset:
    """Read ``f0,...,f{d-1},label`` rows (0-based labels)."""
    path = Path(path)
    with path.open(newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if not header or header[-1].strip() != "label":
            raise ParseError("header must end with 'label'", line=1)
        d = len(header) - 1
        if [h.strip() for h in header[:-1]] != [f"f{i}" for i in range(d)]:
            raise ParseError("feature columns must be named f0..f{d-1}", line=1)
        feats, labels = [], []
        for line_no, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != d + 1:
                raise ParseError(f"expected {d + 1} fields, got {len(row)}", line=line_no)
            try:
                feats.append([float(v) for v in row[:-1]])
                labels.append(int(row[-1]))
            except ValueError:
                raise ParseError(f"bad value in {row!r}", line=line_no) from None
    labels = np.array(labels, dtype=np.int64)
    if labels.size == 0:
        raise ParseError("no data rows")
    k = int(k if k is not None else labels.max() + 1)
    if labels.min() < 0 or labels.max() >= k:
        raise ParseError(f"labels must lie in [0, {k})")
    return NoisyDataset(np.array(feats), labels, k, clean_labels=labels.copy())


def save_dataset_csv(path, ds: NoisyDataset):
    labels = ds.clean_labels if ds.clean_labels is not None else ds.noisy_labels
    lines = [",".join([f"f{i}" for i in range(ds.d)] + ["label"])]
    lines += [",".join([repr(float(v)) for v in row] + [str(int(l))]) for row, l in zip(ds.features, labels)]
    atomic_write_text(path, "\n".join(lines) + "\n")
