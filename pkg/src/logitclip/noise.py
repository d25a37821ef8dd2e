"""Label corruption: transition matrices, injectors, external label files."""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from logitclip.errors import ConfigError, DimensionError, ParseError
from logitclip.fileio import atomic_write_text
from logitclip.numerics import Rng, stable_softmax

# truck -> automobile, bird -> airplane, deer -> horse, cat <-> dog
CIFAR10_PAIRS = {9: 1, 2: 0, 4: 7, 3: 5, 5: 3}

NOISE_KINDS = ("none", "symmetric", "asymmetric", "circular", "instance", "external")


class TransitionMatrix:
    """Row-stochastic K x K matrix; entry (j, k) = p(noisy = k | clean = j)."""

    def __init__(self, matrix):
        m = np.array(matrix, dtype=np.float64)
        if m.ndim != 2 or m.shape[0] != m.shape[1]:
            raise DimensionError(f"transition matrix must be square, got shape {m.shape}")
        if np.any(m < 0) or np.any(m > 1):
            raise ConfigError("transition probabilities must lie in [0, 1]")
        if np.any(np.abs(m.sum(axis=1) - 1) > 1e-12):
            raise ConfigError("transition matrix rows must sum to 1")
        m.setflags(write=False)
        self.matrix = m

    @property
    def k(self):
        return self.matrix.shape[0]

    def __array__(self, dtype=None, copy=None):
        return self.matrix if dtype is None else self.matrix.astype(dtype)

    def __repr__(self):
        return f"TransitionMatrix(k={self.k})"

    def retention(self):
        """Per-class probability of keeping the clean label, ``1 - eta_i``."""
        return np.diag(self.matrix).copy()


def _check_rate(eta):
    if not 0 <= eta < 1:
        raise ConfigError(f"noise rate must lie in [0, 1), got {eta}")


def symmetric_matrix(k: int, eta: float) -> TransitionMatrix:
    _check_rate(eta)
    if k < 2:
        raise ConfigError("need at least two classes")
    m = np.full((k, k), eta / (k - 1))
    np.fill_diagonal(m, 1.0 - eta)
    return TransitionMatrix(m)


def _normalize_pairs(pairs, k):
    if pairs == "cifar10":
        pairs = CIFAR10_PAIRS
    if isinstance(pairs, dict):
        items = [(int(s), int(t)) for s, t in pairs.items()]
    else:
        items = [(int(s), int(t)) for s, t in pairs]
    sources = [s for s, _ in items]
    targets = [t for _, t in items]
    if len(set(sources)) != len(sources) or len(set(targets)) != len(targets):
        raise ConfigError("pair map must be injective with unique sources")
    for s, t in items:
        if s == t:
            raise ConfigError(f"pair map has a self-loop at class {s}")
        if not (0 <= s < k and 0 <= t < k):
            raise ConfigError(f"pair {s}->{t} outside the {k} classes")
    return dict(items)


def asymmetric_matrix(k: int, eta: float, pairs=None, circular=False) -> TransitionMatrix:
    """Pair-map flips (``pairs``: dict, list of (src, dst), or ``"cifar10"``)
    or next-class circular flips."""
    _check_rate(eta)
    m = np.eye(k)
    if circular:
        mapping = {j: (j + 1) % k for j in range(k)}
    else:
        mapping = _normalize_pairs(pairs if pairs is not None else {}, k)
    for s, t in mapping.items():
        m[s, s] = 1.0 - eta
        m[s, t] = eta
    return TransitionMatrix(m)


def inject(labels, t: TransitionMatrix, rng: Rng) -> np.ndarray:
    """Resample each label independently from its row of ``t``."""
    labels = np.asarray(labels, dtype=np.int64)
    m = np.asarray(t)
    if labels.size and (labels.min() < 0 or labels.max() >= m.shape[0]):
        raise DimensionError("label outside the transition matrix classes")
    cum = np.cumsum(m, axis=1)
    u = rng.gen.random(labels.shape[0])
    rows = cum[labels]
    out = np.sum(u[:, None] >= rows, axis=1)
    # guard against a last cumulative value a hair below 1
    return np.minimum(out, m.shape[0] - 1)


def _rescale_rates(raw, eta, cap):
    """Find c with mean(min(c * raw, cap)) == eta by bisection."""
    if eta == 0:
        return np.zeros_like(raw)
    if np.mean(np.where(raw > 0, cap, 0.0)) < eta:
        raise ConfigError("instance-dependent rates cannot reach the requested mean")
    lo, hi = 0.0, 1.0
    while np.mean(np.minimum(hi * raw, cap)) < eta:
        hi *= 2.0
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if np.mean(np.minimum(mid * raw, cap)) < eta:
            lo = mid
        else:
            hi = mid
    return np.minimum(hi * raw, cap)


def inject_instance_dependent(features, labels, eta: float, rng: Rng, k: int | None = None):
    """Feature-dependent flips driven by a random linear projection.

    Scores ``s = X W`` with ``W ~ N(0, 1/d)``. The raw flip propensity of a
    sample is the mass its scores put on wrong classes, ``1 - softmax(s)[y]``;
    propensities are scaled so their mean is ``eta`` and capped at
    ``min(2 eta, 1)``. A flipped label goes to a wrong class drawn from the
    softmax of the scores with the true class masked out.

    Returns ``(noisy_labels, per_instance_rates)``.
    """
    x = np.asarray(features, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.int64)
    if x.ndim != 2 or x.shape[1] == 0:
        raise ConfigError("instance-dependent noise needs a non-empty feature matrix")
    if not 0 < eta < 1:
        raise ConfigError(f"instance-dependent noise rate must lie in (0, 1), got {eta}")
    n, d = x.shape
    k = int(k if k is not None else labels.max() + 1)
    g = rng.gen
    w = g.normal(0.0, 1.0 / np.sqrt(d), size=(d, k))
    s = x @ w
    idx = np.arange(n)
    raw = 1.0 - stable_softmax(s)[idx, labels]
    rates = _rescale_rates(raw, eta, min(2.0 * eta, 1.0))

    masked = s.copy()
    masked[idx, labels] = -np.inf
    dest_p = stable_softmax(masked)
    flip = g.random(n) < rates
    u = g.random(n)
    dest = np.minimum(np.sum(u[:, None] >= np.cumsum(dest_p, axis=1), axis=1), k - 1)
    # rounding could land on the masked class when it is last; step past it
    dest = np.where(dest == labels, (dest + 1) % k, dest)
    return np.where(flip, dest, labels), rates


def load_external_noisy(path, n: int | None = None, k: int | None = None) -> np.ndarray:
    """Read ``index,noisy_label`` CSV; indices must cover 0..N-1 exactly once."""
    path = Path(path)
    seen = {}
    with path.open(newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or [h.strip() for h in header] != ["index", "noisy_label"]:
            raise ParseError("expected header 'index,noisy_label'", line=1)
        for line_no, row in enumerate(reader, start=2):
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) != 2:
                raise ParseError(f"expected 2 fields, got {len(row)}", line=line_no)
            try:
                i, lab = int(row[0]), int(row[1])
            except ValueError:
                raise ParseError(f"non-integer field in {row!r}", line=line_no) from None
            if i in seen:
                raise ParseError(f"duplicate index {i}", line=line_no)
            if lab < 0 or (k is not None and lab >= k):
                raise ParseError(f"label {lab} outside [0, {k})", line=line_no)
            seen[i] = lab
    size = n if n is not None else len(seen)
    missing = sorted(set(range(size)) - seen.keys())
    extra = sorted(seen.keys() - set(range(size)))
    if missing or extra:
        raise ParseError(f"indices incomplete: missing {missing[:5]}, unexpected {extra[:5]}")
    return np.array([seen[i] for i in range(size)], dtype=np.int64)


def write_external_noisy(path, labels):
    path = Path(path)
    rows = ["index,noisy_label"] + [f"{i},{int(v)}" for i, v in enumerate(labels)]
    atomic_write_text(path, "\n".join(rows) + "\n")


def measure_noise(clean, noisy, k: int | None = None):
    """Empirical flip rate and row-normalized confusion of clean vs noisy.

    Classes absent from ``clean`` get an identity row.
    """
    clean = np.asarray(clean, dtype=np.int64)
    noisy = np.asarray(noisy, dtype=np.int64)
    if clean.shape != noisy.shape:
        raise DimensionError("clean and noisy label lists differ in length")
    k = int(k if k is not None else max(clean.max(initial=-1), noisy.max(initial=-1)) + 1)
    counts = np.zeros((k, k))
    np.add.at(counts, (clean, noisy), 1.0)
    totals = counts.sum(axis=1, keepdims=True)
    est = np.where(totals > 0, counts / np.where(totals > 0, totals, 1.0), np.eye(k))
    rate = float(np.mean(clean != noisy)) if clean.size else 0.0
    return rate, est


@dataclass(frozen=True)
class NoiseSpec:
    """How training labels are corrupted.

    ``kind`` is one of ``none``, ``symmetric``, ``asymmetric`` (needs
    ``pairs``), ``circular``, ``instance`` or ``external`` (needs ``path``).
    """

    kind: str = "none"
    eta: float = 0.0
    pairs: object = None
    path: str | None = None
    stream: str = "noise"

    def __post_init__(self):
        if self.kind not in NOISE_KINDS:
            raise ConfigError(f"unknown noise kind {self.kind!r}; expected one of {NOISE_KINDS}")
        if self.kind != "external":
            _check_rate(self.eta)
        if self.kind == "asymmetric" and self.pairs is None:
            raise ConfigError("asymmetric noise needs a pair map")
        if self.kind == "external" and not self.path:
            raise ConfigError("external noise needs a label file path")

    def matrix(self, k) -> TransitionMatrix | None:
        if self.kind == "symmetric":
            return symmetric_matrix(k, self.eta)
        if self.kind == "asymmetric":
            return asymmetric_matrix(k, self.eta, pairs=self.pairs)
        if self.kind == "circular":
            return asymmetric_matrix(k, self.eta, circular=True)
        if self.kind == "none":
            return TransitionMatrix(np.eye(k))
        return None

    def apply(self, dataset: "NoisyDataset", rng: Rng) -> "NoisyDataset":
        clean = dataset.clean_labels if dataset.clean_labels is not None else dataset.noisy_labels
        sub = rng.split(self.stream)
        if self.kind == "instance":
            noisy, _ = inject_instance_dependent(dataset.features, clean, self.eta, sub, dataset.k)
        elif self.kind == "external":
            noisy = load_external_noisy(self.path, n=dataset.n, k=dataset.k)
        else:
            noisy = inject(clean, self.matrix(dataset.k), sub)
        return NoisyDataset(dataset.features, noisy, dataset.k, clean_labels=clean)

    def to_dict(self):
        pairs = self.pairs
        if isinstance(pairs, dict):
            pairs = [[int(s), int(t)] for s, t in pairs.items()]
        elif pairs is not None and not isinstance(pairs, str):
            pairs = [[int(s), int(t)] for s, t in pairs]
        return {"kind": self.kind, "eta": self.eta, "pairs": pairs, "path": self.path}

    @classmethod
    def from_dict(cls, d):
        d = dict(d or {})
        pairs = d.get("pairs")
        if isinstance(pairs, list):
            pairs = [tuple(p) for p in pairs]
        return cls(d.get("kind", "none"), float(d.get("eta") or 0.0), pairs, d.get("path"))


@dataclass
class NoisyDataset:
    features: np.ndarray
    noisy_labels: np.ndarray
    k: int
    clean_labels: np.ndarray | None = None
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.features = np.asarray(self.features, dtype=np.float64)
        self.noisy_labels = np.asarray(self.noisy_labels, dtype=np.int64)
        if self.features.ndim != 2:
            raise DimensionError("features must be an N x d matrix")
        if self.noisy_labels.shape != (self.features.shape[0],):
            raise DimensionError("label count does not match feature rows")
        if self.clean_labels is not None:
            self.clean_labels = np.asarray(self.clean_labels, dtype=np.int64)
            if self.clean_labels.shape != self.noisy_labels.shape:
                raise DimensionError("clean and noisy label counts differ")
        for labels in (self.noisy_labels, self.clean_labels):
            if labels is not None and labels.size and (labels.min() < 0 or labels.max() >= self.k):
                raise DimensionError(f"labels must lie in [0, {self.k})")

    @property
    def n(self):
        return self.features.shape[0]

    @property
    def d(self):
        return self.features.shape[1]

    def subset(self, idx):
        clean = None if self.clean_labels is None else self.clean_labels[idx]
        return NoisyDataset(self.features[idx], self.noisy_labels[idx], self.k, clean)
