"""Composite losses: base loss over softmax probabilities, logit transform, norm penalty.

Each base loss implements ``terms(logp, y) -> (value, h)`` on a batch of
log-probabilities, where ``h = d value / d log p`` has shape ``(N, K)``.
Working in log space keeps CE-type gradients finite even when ``p_y``
underflows. ``loss_forward_backward`` assembles the gradient with respect
to the raw logits:

    d/du = h - p * sum(h)        (softmax, u = transformed logits)
    d/dz = J_clip(z)^T d/du      (+ lambda * z / ||z|| for the norm penalty)
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from logitclip import transforms
from logitclip.errors import ConfigError, DimensionError, DomainError
from logitclip.numerics import as_logits, log_softmax
from logitclip.transforms import ClipConfig

# ---------------------------------------------------------------------------
# base losses


class BaseLoss:
    name = ""

    def terms(self, logp, y):
        raise NotImplementedError

    def params(self) -> dict:
        return {k: getattr(self, k) for k in self.__dataclass_fields__}

    def __call__(self, p, y):
        """Evaluate on probability vectors ``p`` (``(K,)`` or ``(N, K)``)."""
        p = np.asarray(p, dtype=np.float64)
        with np.errstate(divide="ignore"):
            logp = np.log(p)
        value, _ = self.terms(np.atleast_2d(logp), np.atleast_1d(y))
        return float(value[0]) if p.ndim == 1 else value


def _pick(logp, y):
    return logp[np.arange(logp.shape[0]), y]


def _scatter(h_y, y, k):
    h = np.zeros((h_y.shape[0], k))
    h[np.arange(h_y.shape[0]), y] = h_y
    return h


class _PyLoss(BaseLoss):
    """Losses that depend on the true-class probability only."""

    def py_terms(self, py, q, logpy):
        """Return (value, p_y * dphi/dp_y) given p_y, q = 1 - p_y and log p_y."""
        raise NotImplementedError

    def terms(self, logp, y):
        logpy = _pick(logp, y)
        py = np.exp(logpy)
        q = -np.expm1(logpy)
        value, h_y = self.py_terms(py, q, logpy)
        return value, _scatter(h_y, y, logp.shape[1])


@dataclass(frozen=True)
class CE(_PyLoss):
    name = "ce"

    def py_terms(self, py, q, logpy):
        return -logpy, -np.ones_like(py)


@dataclass(frozen=True)
class Focal(_PyLoss):
    gamma: float = 0.5
    name = "focal"

    def __post_init__(self):
        if self.gamma < 0:
            raise ConfigError("focal gamma must be nonnegative")

    def py_terms(self, py, q, logpy):
        g = self.gamma
        qg = q**g
        with np.errstate(divide="ignore", invalid="ignore"):
            # p_y * d/dp_y [(1-p)^g (-log p)] = g p (1-p)^(g-1) log p - (1-p)^g
            first = np.where(q > 0, g * py * q ** (g - 1) * logpy, 0.0) if g else 0.0
        return -qg * logpy, first - qg


@dataclass(frozen=True)
class MAE(_PyLoss):
    name = "mae"

    def py_terms(self, py, q, logpy):
        return 2.0 * q, -2.0 * py


@dataclass(frozen=True)
class GCE(_PyLoss):
    q: float = 0.7
    name = "gce"

    def __post_init__(self):
        if not 0 < self.q <= 1:
            raise ConfigError("GCE q must lie in (0, 1]")

    def py_terms(self, py, q, logpy):
        pq = np.exp(self.q * logpy)
        return -np.expm1(self.q * logpy) / self.q, -pq


@dataclass(frozen=True)
class SCE(_PyLoss):
    """alpha * CE + beta * RCE with log(0) replaced by ``a_clamp`` in RCE."""

    alpha: float = 0.5
    beta: float = 1.0
    a_clamp: float = -4.0
    name = "sce"

    def __post_init__(self):
        if self.alpha <= 0 or self.beta <= 0:
            raise ConfigError("SCE alpha and beta must be positive")
        if self.a_clamp >= 0:
            raise ConfigError("SCE a_clamp must be negative")

    def py_terms(self, py, q, logpy):
        value = -self.alpha * logpy - self.beta * self.a_clamp * q
        return value, -self.alpha + self.beta * self.a_clamp * py


@dataclass(frozen=True)
class PHuberCE(_PyLoss):
    tau_h: float = 10.0
    name = "phuber_ce"

    def __post_init__(self):
        if self.tau_h <= 1:
            raise ConfigError("PHuber-CE threshold must exceed 1")

    def py_terms(self, py, q, logpy):
        t = self.tau_h
        lin = py < 1.0 / t
        value = np.where(lin, -t * py + np.log(t) + 1.0, -logpy)
        return value, np.where(lin, -t * py, -1.0)


@dataclass(frozen=True)
class TaylorCE(_PyLoss):
    order: int = 2
    name = "taylor_ce"

    def __post_init__(self):
        if int(self.order) != self.order or self.order < 1:
            raise ConfigError("Taylor-CE order must be a positive integer")

    def py_terms(self, py, q, logpy):
        value = np.zeros_like(py)
        dsum = np.zeros_like(py)
        qt = np.ones_like(py)
        for t in range(1, int(self.order) + 1):
            dsum += qt  # q^(t-1)
            qt = qt * q
            value += qt / t
        return value, -py * dsum


@dataclass(frozen=True)
class AEL(_PyLoss):
    a: float = 2.5
    name = "ael"

    def __post_init__(self):
        if self.a <= 0:
            raise ConfigError("AEL a must be positive")

    def py_terms(self, py, q, logpy):
        e = np.exp(-py / self.a)
        return e, -py * e / self.a


@dataclass(frozen=True)
class AUL(_PyLoss):
    a: float = 5.5
    q: float = 3.0
    name = "aul"

    def __post_init__(self):
        if self.a <= 1 or self.q <= 0:
            raise ConfigError("AUL needs a > 1 and q > 0")

    def py_terms(self, py, q, logpy):
        a, e = self.a, self.q
        # ((a - p)^e - (a - 1)^e) / e written as a relative increment over (a - 1)^e
        base = (a - 1.0) ** e
        value = base * np.expm1(e * np.log1p(q / (a - 1.0))) / e
        return value, -py * (a - py) ** (e - 1.0)


@dataclass(frozen=True)
class AGCE(_PyLoss):
    a: float = 1.8
    q: float = 3.0
    name = "agce"

    def __post_init__(self):
        if self.a <= 0 or self.q <= 0:
            raise ConfigError("AGCE needs a > 0 and q > 0")

    def py_terms(self, py, q, logpy):
        a, e = self.a, self.q
        base = (a + py) ** e
        # ((a + 1)^e - (a + p)^e) / e = (a + p)^e * expm1(e * log1p(q / (a + p))) / e
        value = base * np.expm1(e * np.log1p(q / (a + py))) / e
        return value, -py * (a + py) ** (e - 1.0)


@dataclass(frozen=True)
class NCE(BaseLoss):
    """CE normalized by the sum of CE over every candidate label."""

    name = "nce"

    def terms(self, logp, y):
        if np.any(np.isneginf(logp)) or np.any(np.exp(logp) == 0):
            raise DomainError("NCE is undefined when some class probability is zero")
        s = -np.sum(logp, axis=1)
        a = -_pick(logp, y)
        h = np.broadcast_to((a / (s * s))[:, None], logp.shape).copy()
        h[np.arange(len(y)), y] -= 1.0 / s
        return a / s, h


@dataclass(frozen=True)
class Combo(BaseLoss):
    """alpha * active + beta * passive (active-passive losses such as NCE+MAE)."""

    active: BaseLoss = field(default_factory=lambda: NCE())
    passive: BaseLoss = field(default_factory=lambda: MAE())
    alpha: float = 1.0
    beta: float = 1.0
    name = "combo"

    def __post_init__(self):
        if self.alpha < 0 or self.beta < 0:
            raise ConfigError("combo weights must be nonnegative")
        if isinstance(self.active, Combo) or isinstance(self.passive, Combo):
            raise ConfigError("combo components must be plain base losses")

    def terms(self, logp, y):
        va, ha = self.active.terms(logp, y)
        vp, hp = self.passive.terms(logp, y)
        return self.alpha * va + self.beta * vp, self.alpha * ha + self.beta * hp

    def params(self):
        return {
            "alpha": self.alpha,
            "beta": self.beta,
            "active": base_loss_to_dict(self.active),
            "passive": base_loss_to_dict(self.passive),
        }


BASE_LOSSES = {
    cls.name: cls
    for cls in (CE, Focal, MAE, GCE, SCE, PHuberCE, TaylorCE, NCE, AEL, AUL, AGCE, Combo)
}

# defaults used when a loss is named without parameters
PRESETS = {
    "nce+mae": lambda: Combo(NCE(), MAE(), alpha=50.0, beta=1.0),
    "nce+agce": lambda: Combo(NCE(), AGCE(a=1.8, q=3.0), alpha=50.0, beta=0.1),
}


def make_base_loss(name: str, **params) -> BaseLoss:
    key = name.lower().replace("-", "_")
    if key in PRESETS and not params:
        return PRESETS[key]()
    if key not in BASE_LOSSES:
        raise ConfigError(f"unknown base loss {name!r}; expected one of {sorted(BASE_LOSSES)}")
    if key == "combo":
        params = dict(params)
        for part in ("active", "passive"):
            if isinstance(params.get(part), dict):
                params[part] = base_loss_from_dict(params[part])
    try:
        return BASE_LOSSES[key](**params)
    except TypeError as exc:
        raise ConfigError(f"bad parameters for {name!r}: {exc}") from None


def base_loss_to_dict(loss: BaseLoss) -> dict:
    return {"base": loss.name, "params": loss.params()}


def base_loss_from_dict(d: dict) -> BaseLoss:
    return make_base_loss(d["base"], **dict(d.get("params") or {}))


# ---------------------------------------------------------------------------
# probability-space surfaces, one per zoo member


def ce(p, y):
    return CE()(p, y)


def focal(p, y, gamma=0.5):
    return Focal(gamma)(p, y)


def mae(p, y):
    return MAE()(p, y)


def gce(p, y, q=0.7):
    return GCE(q)(p, y)


def sce(p, y, alpha=0.5, beta=1.0, a_clamp=-4.0):
    return SCE(alpha, beta, a_clamp)(p, y)


def rce(p, y, a_clamp=-4.0):
    """Reverse cross entropy alone: -a_clamp * (1 - p_y)."""
    p = np.asarray(p, dtype=np.float64)
    return -a_clamp * (1.0 - p[..., y] if p.ndim == 1 else 1.0 - p[np.arange(len(p)), y])


def phuber_ce(p, y, tau_h=10.0):
    return PHuberCE(tau_h)(p, y)


def taylor_ce(p, y, order=2):
    return TaylorCE(order)(p, y)


def nce(p, y):
    return NCE()(p, y)


def ael(p, y, a=2.5):
    return AEL(a)(p, y)


def aul(p, y, a=5.5, q=3.0):
    return AUL(a, q)(p, y)


def agce(p, y, a=1.8, q=3.0):
    return AGCE(a, q)(p, y)


def combo(p, y, alpha, beta, active: BaseLoss, passive: BaseLoss):
    return Combo(active, passive, alpha, beta)(p, y)


def ce_with_clip(z, y, tau, p=2):
    """CE of softmax(clip_by_norm(z)); works for any norm order (no gradient)."""
    u = transforms.clip_by_norm(z, tau, p)
    logp = log_softmax(u)
    if logp.ndim == 1:
        return float(-logp[y])
    return -_pick(logp, np.asarray(y))


# ---------------------------------------------------------------------------
# full composite


@dataclass(frozen=True)
class LossSpec:
    base: BaseLoss = field(default_factory=CE)
    clip: ClipConfig = field(default_factory=ClipConfig)
    norm_reg_lambda: float = 0.0

    def __post_init__(self):
        if not isinstance(self.base, BaseLoss):
            raise ConfigError("LossSpec.base must be a base loss instance")
        if not self.norm_reg_lambda >= 0:
            raise ConfigError("norm_reg_lambda must be nonnegative")

    def to_dict(self):
        d = base_loss_to_dict(self.base)
        d["clip"] = self.clip.to_dict()
        d["norm_reg_lambda"] = self.norm_reg_lambda
        return d

    @classmethod
    def from_dict(cls, d):
        return cls(
            base=base_loss_from_dict(d),
            clip=ClipConfig.from_dict(d.get("clip")),
            norm_reg_lambda=float(d.get("norm_reg_lambda", 0.0)),
        )


@dataclass(frozen=True)
class LossValueGrad:
    value: np.ndarray | float
    grad_z: np.ndarray


def loss_forward_backward(spec: LossSpec, z, y) -> LossValueGrad:
    """Per-sample loss and gradient with respect to the raw logits ``z``."""
    z = as_logits(z)
    single = z.ndim == 1
    z2 = np.atleast_2d(z)
    y = np.atleast_1d(np.asarray(y))
    if y.shape != (z2.shape[0],):
        raise DimensionError(f"labels of shape {y.shape} do not match logits {z2.shape}")
    if np.any((y < 0) | (y >= z2.shape[1])):
        raise DimensionError("label index out of range")
    spec.clip.check_trainable()

    u = transforms.apply(spec.clip, z2)
    logp = log_softmax(u)
    value, h = spec.base.terms(logp, y)
    g_u = h - np.exp(logp) * np.sum(h, axis=1, keepdims=True)
    grad = transforms.jvp(spec.clip, z2, g_u)

    lam = spec.norm_reg_lambda
    if lam > 0:
        norm = np.sqrt(np.sum(z2 * z2, axis=1, keepdims=True))
        value = value + lam * norm[:, 0]
        grad = grad + lam * z2 / np.where(norm > 0, norm, 1.0)

    if single:
        return LossValueGrad(float(value[0]), grad[0])
    return LossValueGrad(value, grad)
