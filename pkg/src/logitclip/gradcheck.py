"""Finite-difference verification of composite-loss gradients.

The numeric side evaluates the loss through the probability-space surface
(``softmax`` then ``log``), not through the log-softmax path the analytic
gradient uses, so the two routes share only the transforms.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from logitclip import transforms
from logitclip.losses import BASE_LOSSES, PRESETS, LossSpec, loss_forward_backward, make_base_loss
from logitclip.numerics import Rng, stable_softmax
from logitclip.transforms import ClipConfig

REL_TOL = 1e-6
STEP = 1e-6
BOUNDARY_GAP = 1e-3
# A float64 central difference with step 1e-6 carries roundoff of roughly
# eps * |f| / h ~ 2e-10 |f| per component, so relative error below 1e-6 is
# only resolvable once ||grad|| exceeds ~1e-3 |f|. Smaller gradients (exact
# zeros from clamped components, near-stationary directions) are compared
# against this scale instead.
FLOOR_SCALE = 1e-3

ZOO = tuple(sorted(BASE_LOSSES))
TRANSFORM_KINDS = ("identity", "by_norm", "by_value", "logit_norm")


def loss_value(spec: LossSpec, z, y):
    """Loss of one logit vector ``(K,)`` or of each row of ``(N, K)``,
    computed without the gradient path."""
    z = np.asarray(z, dtype=np.float64)
    u = transforms.apply(spec.clip, z)
    value = spec.base(stable_softmax(u), np.broadcast_to(y, z.shape[:-1]) if z.ndim > 1 else y)
    if spec.norm_reg_lambda:
        value = value + spec.norm_reg_lambda * np.sqrt(np.sum(z * z, axis=-1))
    return value


def central_diff(f, z, step=STEP):
    """Central differences of a row-vectorized scalar function ``f``."""
    z = np.asarray(z, dtype=np.float64)
    h = step * np.maximum(1.0, np.abs(z))
    zp = z + np.diag(h)
    zm = z - np.diag(h)
    vals = f(np.vstack([zp, zm]))
    # divide by the representable step actually taken
    return (vals[: z.size] - vals[z.size:]) / (np.diag(zp) - np.diag(zm))


def error_floor(value):
    return FLOOR_SCALE * max(1.0, abs(float(value)))


def rel_error(analytic, numeric, floor=0.0):
    """``||a - n|| / max(||a||, ||n||, floor)``; 0 when both vanish and no floor is set."""
    a, n = np.asarray(analytic), np.asarray(numeric)
    denom = max(np.linalg.norm(a), np.linalg.norm(n), floor)
    diff = np.linalg.norm(a - n)
    if denom == 0.0:
        return 0.0 if diff == 0.0 else float("inf")
    return float(diff / denom)


def near_boundary(cfg: ClipConfig, z, gap=BOUNDARY_GAP):
    if cfg.kind == "by_norm":
        return abs(np.linalg.norm(z) - cfg.tau) <= gap
    if cfg.kind == "by_value":
        return bool(np.any(np.abs(np.abs(z) - cfg.tau) <= gap))
    return False


def random_clip(kind, gen) -> ClipConfig:
    if kind == "by_norm":
        return ClipConfig.by_norm(gen.uniform(0.5, 4.0))
    if kind == "by_value":
        return ClipConfig.by_value(gen.uniform(0.5, 3.0))
    if kind == "logit_norm":
        return ClipConfig.logit_norm(gen.uniform(0.5, 2.0))
    return ClipConfig.identity()


def default_base(name):
    if name == "combo":
        return PRESETS["nce+agce"]()
    return make_base_loss(name)


@dataclass
class CheckResult:
    loss: str
    transform: str
    trials: int
    skipped: int
    max_rel_error: float
    floored: int = 0  # cases whose gradient norm fell below the noise floor

    @property
    def passed(self):
        return self.max_rel_error < REL_TOL


def check(base_name, kind, trials, rng: Rng, corrupt=False, norm_reg_lambda=0.0) -> CheckResult:
    """Compare analytic and central-difference gradients on random cases.

    Logits are drawn from ``U[-3, 3]^K`` with ``K`` in {2, 3, 5, 10};
    cases within ``BOUNDARY_GAP`` of a transform kink are redrawn and counted
    as skipped. ``corrupt`` perturbs the analytic gradient (negative control).
    """
    gen = rng.split(f"{base_name}/{kind}").gen
    base = default_base(base_name)
    worst, skipped, floored, done = 0.0, 0, 0, 0
    while done < trials:
        k = int(gen.choice([2, 3, 5, 10]))
        z = gen.uniform(-3.0, 3.0, size=k)
        y = int(gen.integers(k))
        spec = LossSpec(base, random_clip(kind, gen), norm_reg_lambda)
        if near_boundary(spec.clip, z):
            skipped += 1
            continue
        out = loss_forward_backward(spec, z, y)
        analytic = out.grad_z
        if corrupt:
            analytic = analytic * 1.01 + 1e-3
        numeric = central_diff(lambda v: loss_value(spec, v, y), z)
        floor = error_floor(out.value)
        floored += max(np.linalg.norm(analytic), np.linalg.norm(numeric)) < floor
        worst = max(worst, rel_error(analytic, numeric, floor))
        done += 1
    return CheckResult(base_name, kind, trials, skipped, worst, int(floored))


def run_suite(losses=ZOO, kinds=TRANSFORM_KINDS, trials=1000, seed=0, corrupt=False):
    rng = Rng(seed).split("gradcheck")
    return [check(name, kind, trials, rng, corrupt) for name in losses for kind in kinds]
