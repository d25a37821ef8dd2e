"""Seeded randomness and numerically stable primitives.

All functions operate on the last axis so a single logit vector of shape
``(K,)`` and a batch of shape ``(N, K)`` go through the same code path.
"""

from __future__ import annotations

import zlib
from dataclasses import dataclass, field

import numpy as np

from logitclip.errors import ConfigError, DimensionError

NORM_ORDERS = (1, 2, np.inf)


@dataclass(frozen=True)
class Rng:
    """Splittable seeded generator.

    ``split(label)`` derives an independent child stream from the parent
    entropy plus a hash of the label, so noise injection, weight init and
    shuffling never share draws and do not depend on call order.
    """

    seed: int
    path: tuple[int, ...] = ()
    _gen: np.random.Generator = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        if not 0 <= int(self.seed) < 2**64:
            raise ConfigError(f"seed must be a 64-bit unsigned integer, got {self.seed}")
        ss = np.random.SeedSequence(int(self.seed), spawn_key=self.path)
        object.__setattr__(self, "_gen", np.random.Generator(np.random.Philox(ss)))

    def split(self, label: str) -> "Rng":
        return Rng(self.seed, self.path + (zlib.crc32(label.encode("utf-8")),))

    @property
    def gen(self) -> np.random.Generator:
        return self._gen


def as_logits(z) -> np.ndarray:
    z = np.asarray(z, dtype=np.float64)
    if z.ndim == 0 or z.shape[-1] == 0:
        raise DimensionError("expected a non-empty vector (or batch of vectors)")
    return z


def log_sum_exp(v) -> np.ndarray | float:
    """log(sum(exp(v))) over the last axis, with max-subtraction."""
    v = as_logits(v)
    m = np.max(v, axis=-1, keepdims=True)
    out = np.log(np.sum(np.exp(v - m), axis=-1)) + m[..., 0]
    return out if out.ndim else float(out)


def log_softmax(z) -> np.ndarray:
    z = as_logits(z)
    shifted = z - np.max(z, axis=-1, keepdims=True)
    return shifted - np.log(np.sum(np.exp(shifted), axis=-1, keepdims=True))


def stable_softmax(z) -> np.ndarray:
    z = as_logits(z)
    e = np.exp(z - np.max(z, axis=-1, keepdims=True))
    return e / np.sum(e, axis=-1, keepdims=True)


def check_norm_order(p):
    if p in ("inf", "Inf", "infinity"):
        p = np.inf
    try:
        p = float(p)
    except (TypeError, ValueError):
        raise ConfigError(f"unsupported norm order {p!r}") from None
    if p not in NORM_ORDERS:
        raise ConfigError(f"unsupported norm order {p!r}; expected 1, 2 or inf")
    return int(p) if np.isfinite(p) else np.inf


def pnorm(z, p=2) -> np.ndarray | float:
    p = check_norm_order(p)
    z = as_logits(z)
    a = np.abs(z)
    if p == 1:
        out = np.sum(a, axis=-1)
    elif p == 2:
        out = np.sqrt(np.sum(z * z, axis=-1))
    else:
        out = np.max(a, axis=-1)
    return out if out.ndim else float(out)


def softmax_jacobian(p) -> np.ndarray:
    """J[i, j] = p_i (delta_ij - p_j). Accepts ``(K,)`` or ``(N, K)``."""
    p = np.asarray(p, dtype=np.float64)
    return p[..., :, None] * np.eye(p.shape[-1]) - p[..., :, None] * p[..., None, :]
