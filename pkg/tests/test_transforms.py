import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from logitclip import transforms
from logitclip.errors import ConfigError, DomainError
from logitclip.transforms import (
    ClipConfig,
    clip_by_norm,
    clip_by_norm_jvp,
    clip_by_value,
    clip_by_value_jvp,
    logit_norm,
    logit_norm_jvp,
)

logits = arrays(np.float64, st.integers(2, 10), elements=st.floats(-100, 100, allow_subnormal=False))
taus = st.floats(0.05, 20)


def test_clip_by_norm_examples():
    np.testing.assert_allclose(clip_by_norm([6.0, 8.0], 5.0), [3.0, 4.0], rtol=1e-15)
    np.testing.assert_array_equal(clip_by_norm([1.0, 1.0], 5.0), [1.0, 1.0])
    np.testing.assert_array_equal(clip_by_norm([0.0, 0.0], 1.0), [0.0, 0.0])


def test_clip_by_norm_other_orders():
    np.testing.assert_allclose(clip_by_norm([3.0, -4.0], 3.5, p=1), [1.5, -2.0])
    np.testing.assert_allclose(clip_by_norm([3.0, -4.0], 2.0, p=np.inf), [1.5, -2.0])


def test_clip_by_norm_boundary_uses_clipped_branch():
    # exactly on the threshold: both branches agree in value but only the
    # clipped one has the projected Jacobian
    z = np.array([3.0, 4.0])
    np.testing.assert_allclose(clip_by_norm(z, 5.0), z)
    np.testing.assert_allclose(clip_by_norm_jvp(z, 5.0, z), [0.0, 0.0], atol=1e-15)


def test_clip_by_norm_jvp_examples():
    v = np.array([0.3, -2.0])
    np.testing.assert_array_equal(clip_by_norm_jvp([1.0, 1.0], 5.0, v), v)
    np.testing.assert_allclose(clip_by_norm_jvp([6.0, 8.0], 5.0, [6.0, 8.0]), [0.0, 0.0], atol=1e-15)
    np.testing.assert_allclose(clip_by_norm_jvp([6.0, 8.0], 5.0, [-8.0, 6.0]), [-4.0, 3.0], rtol=1e-15)


@given(logits, taus)
def test_clip_by_norm_bounded_and_direction_preserving(z, tau):
    out = clip_by_norm(z, tau)
    assert np.linalg.norm(out) <= tau * (1 + 1e-12) or np.array_equal(out, z)
    n = np.linalg.norm(z)
    c = min(1.0, tau / n) if n > 0 else 1.0
    np.testing.assert_allclose(out, c * z, rtol=1e-13, atol=0)
    if n > 0 and np.sum(z == z.max()) == 1:
        assert np.argmax(out) == np.argmax(z)


@given(logits, taus)
def test_clip_by_norm_idempotent(z, tau):
    once = clip_by_norm(z, tau)
    np.testing.assert_allclose(clip_by_norm(once, tau), once, rtol=0, atol=1e-12)


@given(logits, taus, st.floats(1.0, 1e3))
def test_clip_by_norm_radial_invariance(z, tau, alpha):
    if np.linalg.norm(z) < tau:
        return
    np.testing.assert_allclose(clip_by_norm(alpha * z, tau), clip_by_norm(z, tau), rtol=0, atol=1e-12)


@given(logits, st.sampled_from([1, 2, np.inf]))
def test_clip_by_norm_identity_recovery(z, p):
    tau = max(float(np.linalg.norm(z, ord=p)), 1e-3)
    np.testing.assert_array_equal(clip_by_norm(z, tau * 1.5, p), z)
    np.testing.assert_array_equal(clip_by_norm(z, 1e9, p), z)


@given(logits, taus, st.sampled_from([2, np.inf]))
def test_clipped_logit_gap_at_most_two_tau(z, tau, p):
    out = clip_by_norm(z, tau, p)
    assert out.max() - out.min() <= 2 * tau * (1 + 1e-12)


def _central(f, z, v, h=1e-6):
    return (f(z + h * v) - f(z - h * v)) / (2 * h)


def test_clip_by_norm_jvp_matches_finite_differences():
    rng = np.random.default_rng(0)
    worst, done = 0.0, 0
    while done < 1000:
        k = int(rng.integers(2, 11))
        z = rng.uniform(-3, 3, size=k)
        v = rng.normal(size=k)
        tau = rng.uniform(0.5, 4.0)
        if abs(np.linalg.norm(z) - tau) <= 1e-3:
            continue
        a = clip_by_norm_jvp(z, tau, v)
        n = _central(lambda u: clip_by_norm(u, tau), z, v)
        worst = max(worst, np.linalg.norm(a - n) / max(np.linalg.norm(a), np.linalg.norm(n)))
        done += 1
    assert worst < 1e-6


def test_clip_by_value_examples():
    np.testing.assert_array_equal(clip_by_value([0.5, -0.3], 1.0), [0.5, -0.3])
    np.testing.assert_array_equal(clip_by_value([3.0, -7.0], 2.0), [2.0, -2.0])
    np.testing.assert_array_equal(clip_by_value([2.0, 0.0], 2.0), [2.0, 0.0])


def test_clip_by_value_subgradient_convention():
    z = np.array([0.5, 2.0, -2.0, 3.0, -0.1])
    v = np.ones(5)
    np.testing.assert_array_equal(clip_by_value_jvp(z, 2.0, v), [1.0, 0.0, 0.0, 0.0, 1.0])


def test_logit_norm_examples():
    np.testing.assert_allclose(logit_norm([3.0, 4.0], 1.0), [0.6, 0.8], rtol=1e-15)
    np.testing.assert_allclose(logit_norm([3.0, 4.0], 0.5), [1.2, 1.6], rtol=1e-15)
    with pytest.raises(DomainError):
        logit_norm([0.0, 0.0], 1.0)


def test_logit_norm_jvp_matches_finite_differences():
    rng = np.random.default_rng(1)
    for _ in range(200):
        z = rng.uniform(-3, 3, size=5)
        v = rng.normal(size=5)
        tau = rng.uniform(0.5, 2)
        a = logit_norm_jvp(z, tau, v)
        n = _central(lambda u: logit_norm(u, tau), z, v)
        np.testing.assert_allclose(a, n, rtol=1e-6, atol=1e-9)


def test_jacobians_are_symmetric():
    # the backward pass reuses the JVP as a VJP
    z = np.array([1.5, -2.0, 0.7, 3.1])
    for cfg in (ClipConfig.by_norm(2.0), ClipConfig.by_value(1.0), ClipConfig.logit_norm(0.8), ClipConfig.identity()):
        jac = np.column_stack([transforms.jvp(cfg, z, e) for e in np.eye(4)])
        np.testing.assert_allclose(jac, jac.T, atol=1e-15)


def test_batch_matches_rowwise():
    z = np.random.default_rng(2).normal(size=(6, 4)) * 3
    v = np.random.default_rng(3).normal(size=(6, 4))
    for cfg in (ClipConfig.by_norm(2.0), ClipConfig.by_value(1.0), ClipConfig.logit_norm(0.8)):
        np.testing.assert_allclose(transforms.apply(cfg, z), [transforms.apply(cfg, r) for r in z], rtol=1e-15)
        np.testing.assert_allclose(transforms.jvp(cfg, z, v), [transforms.jvp(cfg, r, s) for r, s in zip(z, v)], rtol=1e-14)


@pytest.mark.parametrize("kw", [dict(kind="by_norm", tau=0.0), dict(kind="by_norm", tau=-1.0),
                                dict(kind="bogus"), dict(kind="by_norm", tau=1.0, p=3)])
def test_clip_config_validation(kw):
    with pytest.raises(ConfigError):
        ClipConfig(**kw)


def test_non_euclidean_norm_is_forward_only():
    cfg = ClipConfig.by_norm(1.0, p=np.inf)
    transforms.apply(cfg, [3.0, 1.0])
    with pytest.raises(ConfigError):
        transforms.jvp(cfg, [3.0, 1.0], [1.0, 0.0])


def test_clip_config_round_trip():
    for cfg in (ClipConfig.by_norm(0.5), ClipConfig.by_norm(2.0, p="inf"), ClipConfig.by_value(3.0), ClipConfig.identity()):
        assert ClipConfig.from_dict(cfg.to_dict()) == cfg
