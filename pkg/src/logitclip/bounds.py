"""Closed-form loss bounds and risk-gap constants for CE with logit clipping.

Every quantity is built from ``log(1 + (K-1) e^{+-2 tau})``, evaluated as
``logaddexp(0, log(K-1) +- 2 tau)`` so nothing overflows for large tau.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from logitclip.errors import DomainError


@dataclass(frozen=True)
class LossBounds:
    lower: float
    upper: float
    k: int
    tau: float


@dataclass(frozen=True)
class LipschitzBound:
    bound: float
    m: float  # smallest attainable softmax probability
    n: float  # largest attainable softmax probability


def _check(k, tau):
    if int(k) != k or k < 2:
        raise DomainError(f"need an integer class count K >= 2, got {k}")
    if not tau > 0:
        raise DomainError(f"need tau > 0, got {tau}")


def _log1p_km1_exp(k, t):
    """log(1 + (K-1) e^t)."""
    return float(np.logaddexp(0.0, np.log(k - 1.0) + t))


def ce_clip_bounds(k: int, tau: float) -> LossBounds:
    """Range of CE after clipping logits to max-norm ``tau``.

    For very large ``tau`` the lower bound underflows to 0.0.
    """
    _check(k, tau)
    return LossBounds(_log1p_km1_exp(k, -2.0 * tau), _log1p_km1_exp(k, 2.0 * tau), int(k), float(tau))


def a_const(k: int, tau: float) -> float:
    b = ce_clip_bounds(k, tau)
    return b.upper - b.lower


def sym_risk_gap(k: int, tau: float, eta: float) -> float:
    """Upper bound on the clean-risk gap between the noisy and clean minimizers
    under symmetric noise of rate ``eta``."""
    _check(k, tau)
    if not 0 <= eta < 1 - 1 / k:
        raise DomainError(f"symmetric noise rate must satisfy 0 <= eta < 1 - 1/K, got {eta}")
    return eta * k / ((1 - eta) * k - 1) * a_const(k, tau)


def asym_risk_gap(k: int, tau: float, mean_retention: float) -> float:
    """``K * A * E[1 - eta_i]``; with an instance-wise expectation this is the
    instance-dependent constant as well."""
    _check(k, tau)
    if not 0 < mean_retention <= 1:
        raise DomainError(f"mean retention must lie in (0, 1], got {mean_retention}")
    return k * a_const(k, tau) * mean_retention


instance_risk_gap = asym_risk_gap


def prob_range(k: int, tau: float) -> tuple[float, float]:
    """(M, N): extreme softmax probabilities reachable with max-norm-clipped logits."""
    b = ce_clip_bounds(k, tau)
    return float(np.exp(-b.upper)), float(np.exp(-b.lower))


def lipschitz_composite_bound(lipschitz: float, k: int, tau: float, phi_at_m: float) -> LipschitzBound:
    if lipschitz < 0:
        raise DomainError("Lipschitz constant must be nonnegative")
    m, n = prob_range(k, tau)
    return LipschitzBound(lipschitz * (n - m) + abs(phi_at_m), m, n)


def noisy_risk_decomposition(clean_risk: float, full_sum_risk: float, k: int, eta: float) -> float:
    """Expected risk under symmetric noise from the clean risk and the
    expected sum of the loss over all K labels."""
    if int(k) != k or k < 2:
        raise DomainError(f"need K >= 2, got {k}")
    if not 0 <= eta <= 1 - 1 / k + 1e-15:
        raise DomainError(f"noise rate must satisfy 0 <= eta <= 1 - 1/K, got {eta}")
    beta = 1 - eta * k / (k - 1)
    return beta * clean_risk + eta / (k - 1) * full_sum_risk
