"""Logit-level transforms applied before the softmax link.

Every transform here has a symmetric Jacobian, so the same routine serves
as both the Jacobian-vector product and the vector-Jacobian product used
in backpropagation.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from logitclip.errors import ConfigError, DomainError
from logitclip.numerics import as_logits, check_norm_order, pnorm

BY_NORM = "by_norm"
BY_VALUE = "by_value"
LOGIT_NORM = "logit_norm"
IDENTITY = "identity"
KINDS = (BY_NORM, BY_VALUE, LOGIT_NORM, IDENTITY)


@dataclass(frozen=True)
class ClipConfig:
    """Which transform to apply to the logits.

    ``tau`` is the norm threshold for ``by_norm``, the clamp level for
    ``by_value`` and the temperature for ``logit_norm``; it is ignored for
    ``identity``. ``p`` only matters for ``by_norm``.
    """

    kind: str = IDENTITY
    tau: float = 1.0
    p: float = 2

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ConfigError(f"unknown clip kind {self.kind!r}; expected one of {KINDS}")
        if not (np.isfinite(self.tau) and self.tau > 0):
            raise ConfigError(f"tau must be positive and finite, got {self.tau}")
        object.__setattr__(self, "p", check_norm_order(self.p))

    @classmethod
    def identity(cls):
        return cls(IDENTITY)

    @classmethod
    def by_norm(cls, tau, p=2):
        return cls(BY_NORM, tau, p)

    @classmethod
    def by_value(cls, lam):
        return cls(BY_VALUE, lam)

    @classmethod
    def logit_norm(cls, tau):
        return cls(LOGIT_NORM, tau)

    def check_trainable(self):
        if self.kind == BY_NORM and self.p != 2:
            raise ConfigError("gradients through clip-by-norm are only defined for p=2")

    def to_dict(self):
        p = "inf" if self.p == np.inf else self.p
        return {"kind": self.kind, "tau": self.tau, "p": p}

    @classmethod
    def from_dict(cls, d):
        d = dict(d or {})
        return cls(d.get("kind", IDENTITY), float(d.get("tau", 1.0)), d.get("p", 2))


def clip_by_norm(z, tau, p=2) -> np.ndarray:
    """Rescale ``z`` to norm ``tau`` when ``||z||_p >= tau``; otherwise pass through."""
    z = as_logits(z)
    norm = np.asarray(pnorm(z, p))[..., None]
    clipped = norm >= tau
    scale = np.where(clipped, tau / np.where(clipped, norm, 1.0), 1.0)
    return z * scale


def clip_by_norm_jvp(z, tau, v) -> np.ndarray:
    z = as_logits(z)
    v = np.asarray(v, dtype=np.float64)
    norm = np.sqrt(np.sum(z * z, axis=-1, keepdims=True))
    clipped = norm >= tau
    safe = np.where(clipped, norm, 1.0)
    radial = z * np.sum(z * v, axis=-1, keepdims=True) / (safe * safe)
    return np.where(clipped, (tau / safe) * (v - radial), v)


def clip_by_value(z, lam) -> np.ndarray:
    return np.clip(as_logits(z), -lam, lam)


def clip_by_value_jvp(z, lam, v) -> np.ndarray:
    # zero at and beyond the clamp boundary
    z = as_logits(z)
    return np.where(np.abs(z) < lam, np.asarray(v, dtype=np.float64), 0.0)


def _l2(z):
    norm = np.sqrt(np.sum(z * z, axis=-1, keepdims=True))
    if np.any(norm == 0):
        raise DomainError("logit normalization is undefined for the zero vector")
    return norm


def logit_norm(z, tau) -> np.ndarray:
    z = as_logits(z)
    return z / (tau * _l2(z))


def logit_norm_jvp(z, tau, v) -> np.ndarray:
    z = as_logits(z)
    v = np.asarray(v, dtype=np.float64)
    norm = _l2(z)
    return (v - z * np.sum(z * v, axis=-1, keepdims=True) / (norm * norm)) / (tau * norm)


def apply(cfg: ClipConfig, z) -> np.ndarray:
    if cfg.kind == BY_NORM:
        return clip_by_norm(z, cfg.tau, cfg.p)
    if cfg.kind == BY_VALUE:
        return clip_by_value(z, cfg.tau)
    if cfg.kind == LOGIT_NORM:
        return logit_norm(z, cfg.tau)
    return as_logits(z)


def jvp(cfg: ClipConfig, z, v) -> np.ndarray:
    cfg.check_trainable()
    if cfg.kind == BY_NORM:
        return clip_by_norm_jvp(z, cfg.tau, v)
    if cfg.kind == BY_VALUE:
        return clip_by_value_jvp(z, cfg.tau, v)
    if cfg.kind == LOGIT_NORM:
        return logit_norm_jvp(z, cfg.tau, v)
    return np.asarray(v, dtype=np.float64)
