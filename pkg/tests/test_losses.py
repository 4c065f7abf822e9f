import math

import numpy as np
import pytest
from hypothesis import assume, given, settings, strategies as st
from hypothesis.extra.numpy import arrays

from circumplex.affect_core import ClassWeights
from circumplex.errors import ConfigError, LabelError, NumericError, ShapeError
from circumplex.losses import (
    LossConfig,
    ccc,
    ccc_loss,
    combined_loss,
    mse_va,
    weighted_bce_combined,
    weighted_cross_entropy,
)

from conftest import central_diff, rel_err


# direct-formula oracles, written without the autodiff engine
def ref_wce(z, y, w):
    z = np.asarray(z, float)
    lse = np.log(np.sum(np.exp(z - z.max(1, keepdims=True)), 1)) + z.max(1)
    nll = lse - z[np.arange(len(y)), y]
    return float(np.sum(w[y] * nll) / np.sum(w[y]))


def ref_ccc(x, y):
    n = len(x)
    mx, my = sum(x) / n, sum(y) / n
    cov = sum((a - mx) * (b - my) for a, b in zip(x, y)) / n
    vx = sum((a - mx) ** 2 for a in x) / n
    vy = sum((b - my) ** 2 for b in y) / n
    return 2 * cov / (vx + vy + (mx - my) ** 2)


def ref_bce(z, t, p):
    sp = lambda v: math.log1p(math.exp(-abs(v))) + max(v, 0.0)
    vals = [p[k] * t[i][k] * sp(-z[i][k]) + (1 - t[i][k]) * sp(z[i][k])
            for i in range(len(z)) for k in range(len(z[0]))]
    return sum(vals) / len(vals)


# weighted cross-entropy -----------------------------------------------------

def test_wce_uniform_weights_equal_logits_is_log_k():
    k = 8
    out = weighted_cross_entropy(np.zeros((5, k)), [0, 3, 7, 2, 2], np.full(k, 1 / k))
    assert out.value == pytest.approx(math.log(k), abs=1e-12)


def test_wce_saturated():
    z = np.array([[30.0, 0.0, 0.0]])
    assert weighted_cross_entropy(z, [0]).value < 1e-9 + 1e-12


def test_wce_hand_example():
    out = weighted_cross_entropy([[1.0, 0.0], [0.0, 1.0]], [0, 1], np.array([0.75, 0.25]))
    assert out.value == pytest.approx(0.31326168751822286, abs=1e-15)


def test_wce_accepts_class_weights_object():
    cw = ClassWeights(np.array([0.75, 0.25]), np.array([100, 300]))
    out = weighted_cross_entropy([[1.0, 0.0], [0.0, 1.0]], [0, 1], cw)
    assert out.value == pytest.approx(0.31326168751822286, abs=1e-15)


def test_wce_non_finite_rejected():
    with pytest.raises(NumericError):
        weighted_cross_entropy([[np.inf, 0.0]], [0])


@settings(max_examples=30, deadline=None)
@given(st.integers(1, 8), st.integers(2, 8), st.integers(0, 2**31), st.floats(0.1, 10))
def test_equal_weights_match_unweighted(n, k, seed, c):
    r = np.random.default_rng(seed)
    z, y = r.normal(size=(n, k)), r.integers(0, k, n)
    a = weighted_cross_entropy(z, y, np.full(k, c)).value
    b = weighted_cross_entropy(z, y).value
    assert abs(a - b) <= 1e-12


# mse ------------------------------------------------------------------------

def test_mse_examples():
    assert mse_va([[0.2, 0.1]], [[0.2, 0.1]]).value == 0.0
    assert mse_va([[0.0, 0.0]], [[1.0, 1.0]]).value == 1.0
    assert mse_va([[0.5, -0.5], [0.0, 0.0]], [[0.0, 0.0], [1.0, -1.0]]).value == pytest.approx(0.625, abs=1e-15)


def test_mse_gradient_formula():
    p = np.array([[0.5, -0.5], [0.0, 0.2]])
    t = np.array([[0.0, 0.0], [1.0, -1.0]])
    np.testing.assert_allclose(mse_va(p, t).grads["pred"], 2 * (p - t) / 4, rtol=1e-15)


def test_mse_shape_mismatch():
    with pytest.raises(ShapeError):
        mse_va(np.zeros((2, 2)), np.zeros((2, 3)))


# combined ---------------------------------------------------------------------

def _batch(seed, n=6, k=5, d=2):
    r = np.random.default_rng(seed)
    return r.normal(size=(n, k)), r.integers(0, k, n), np.tanh(r.normal(size=(n, d))), r.uniform(-1, 1, (n, d))


def test_combined_alpha_zero_equals_wce():
    z, y, p, t = _batch(0)
    w = np.linspace(0.1, 0.3, 5)
    cfg = LossConfig(alpha=0.0, class_weights=ClassWeights(w, np.ones(5, int)))
    assert combined_loss(z, y, p, t, cfg).value == weighted_cross_entropy(z, y, w).value


def test_combined_perfect_is_zero():
    z = np.array([[60.0, 0.0], [0.0, 60.0]])
    t = np.array([[0.1, 0.2], [-0.3, 0.4]])
    assert combined_loss(z, [0, 1], t, t).value < 1e-20


def test_combined_is_linear_in_alpha():
    z, y, p, t = _batch(1)
    out = combined_loss(z, y, p, t, LossConfig(alpha=5.0))
    ce, mse = out.components["ce"], out.components["mse"]
    assert out.value == pytest.approx(ce + 5 * mse, abs=1e-14)
    # (0.4, 0.1) with alpha 5
    assert 0.4 + 5 * 0.1 == pytest.approx(0.9)


@given(st.floats(0, 20), st.floats(0, 20))
def test_combined_monotone_in_alpha(a1, a2):
    z, y, p, t = _batch(2)
    lo, hi = sorted((a1, a2))
    assert combined_loss(z, y, p, t, LossConfig(alpha=lo)).value <= combined_loss(z, y, p, t, LossConfig(alpha=hi)).value


def test_combined_needs_both_heads():
    z, y, p, t = _batch(3)
    with pytest.raises(ConfigError):
        combined_loss(z, y, None, t)


# ccc ------------------------------------------------------------------------

def test_ccc_identity():
    x = np.array([0.1, -0.4, 0.9, 0.3])
    assert ccc(x, x) == pytest.approx(1.0, abs=1e-15)


def test_ccc_constant_x_is_zero():
    assert ccc(np.full(4, 0.3), np.array([0.1, 0.2, 0.5, -0.1])) == 0.0


def test_ccc_oracle_batch():
    # exact rational value 1010/1017
    assert ccc([1, 2, 3, 4], [1.1, 2.1, 2.9, 4.2]) == pytest.approx(1010 / 1017, abs=1e-14)


def test_ccc_degenerate_rules():
    assert ccc(np.full(3, 0.5), np.full(3, 0.5)) == 1.0
    with pytest.raises(NumericError):
        ccc(np.full(3, 0.5), np.full(3, 0.5 + 1e-7))


finite = st.floats(-1, 1, allow_nan=False)


@settings(max_examples=100)
@given(arrays(np.float64, st.integers(2, 20), elements=finite), st.integers(0, 2**31),
       st.floats(0.01, 100), st.floats(-50, 50))
def test_ccc_affine_invariance(x, seed, a, b):
    y = x + np.random.default_rng(seed).normal(scale=0.3, size=x.shape)
    assume(np.var(x) + np.var(y) + (x.mean() - y.mean()) ** 2 > 1e-6)
    assert abs(ccc(a * x + b, a * y + b) - ccc(x, y)) < 1e-10


@settings(max_examples=100)
@given(arrays(np.float64, st.integers(2, 20), elements=finite), arrays(np.float64, 20, elements=finite))
def test_ccc_bounded(x, y):
    y = y[: len(x)]
    assume(np.var(x) + np.var(y) + (x.mean() - y.mean()) ** 2 > 1e-9)
    assert -1 - 1e-12 <= ccc(x, y) <= 1 + 1e-12


# ccc loss -------------------------------------------------------------------

def test_ccc_loss_perfect():
    t = np.array([[0.1, 0.5], [-0.3, 0.2], [0.7, -0.6]])
    assert ccc_loss(t, t).value == pytest.approx(0.0, abs=1e-15)


def test_ccc_loss_shift_penalised():
    t = np.array([[0.1, 0.5], [-0.3, 0.2], [0.2, -0.6]])
    out = ccc_loss(t + 0.5, t, LossConfig(beta=0.0))
    assert out.value > 0


def test_ccc_loss_oracle():
    r = np.random.default_rng(7)
    p, t = r.uniform(-1, 1, (4, 2)), r.uniform(-1, 1, (4, 2))
    expected = 1 - (ref_ccc(p[:, 0], t[:, 0]) + ref_ccc(p[:, 1], t[:, 1])) / 2 + 3 * np.mean((p - t) ** 2)
    assert ccc_loss(p, t, LossConfig(beta=3.0)).value == pytest.approx(expected, abs=1e-10)


def test_ccc_loss_constant_batches():
    # constant but far apart: denominator is the squared mean gap, ccc = 0
    assert ccc_loss(np.full((3, 2), 0.2), np.full((3, 2), -0.4), LossConfig(beta=0.0)).value == pytest.approx(1.0)
    with pytest.raises(NumericError):
        ccc_loss(np.full((3, 2), 0.2), np.full((3, 2), 0.2 + 1e-8))


@settings(max_examples=50)
@given(st.integers(0, 2**31), st.integers(2, 16), st.floats(0, 5))
def test_ccc_loss_range(seed, n, beta):
    r = np.random.default_rng(seed)
    p, t = r.uniform(-1, 1, (n, 2)), r.uniform(-1, 1, (n, 2))
    v = ccc_loss(p, t, LossConfig(beta=beta)).value
    assert 0 <= v <= 2 + beta * np.max((p - t) ** 2) + 1e-12


# weighted BCE ---------------------------------------------------------------

def test_bce_unit_weights_zero_logit():
    cfg = LossConfig(alpha=0.0, pos_weights=np.ones(3))
    out = weighted_bce_combined(np.zeros((1, 3)), np.ones((1, 3)), np.zeros((1, 3)), np.zeros((1, 3)), cfg)
    assert out.value == pytest.approx(math.log(2), abs=1e-15)


def test_bce_saturated():
    cfg = LossConfig(alpha=0.0, pos_weights=np.full(2, 3.0))
    z = np.array([[40.0, -40.0]])
    out = weighted_bce_combined(z, [[1, 0]], np.zeros((1, 3)), np.zeros((1, 3)), cfg)
    assert out.value < 1e-9


def test_bce_hand_example():
    cfg = LossConfig(alpha=0.0, pos_weights=np.array([4.0, 2.0]))
    out = weighted_bce_combined([[0.5, -0.5]], [[1, 0]], np.zeros((1, 3)), np.zeros((1, 3)), cfg)
    assert out.value == pytest.approx(1.1851924604502666, abs=1e-15)
    assert out.value == pytest.approx(ref_bce([[0.5, -0.5]], [[1, 0]], [4.0, 2.0]), abs=1e-15)


def test_bce_rejects_non_binary_targets():
    cfg = LossConfig(pos_weights=np.ones(2))
    with pytest.raises(LabelError):
        weighted_bce_combined(np.zeros((1, 2)), [[0.5, 1]], np.zeros((1, 3)), np.zeros((1, 3)), cfg)


def test_bce_needs_pos_weights():
    with pytest.raises(ConfigError):
        weighted_bce_combined(np.zeros((1, 2)), [[0, 1]], np.zeros((1, 3)), np.zeros((1, 3)), LossConfig())


# value oracles and gradients on random batches --------------------------------

@settings(max_examples=25, deadline=None)
@given(st.integers(0, 2**31))
def test_values_match_direct_formulas(seed):
    r = np.random.default_rng(seed)
    n, k = r.integers(2, 9), r.integers(2, 9)
    z, y = r.normal(size=(n, k)) * 3, r.integers(0, k, n)
    w = r.uniform(0.05, 1, k)
    assert weighted_cross_entropy(z, y, w).value == pytest.approx(ref_wce(z, y, w), abs=1e-12)
    t = r.integers(0, 2, (n, k)).astype(float)
    p = r.uniform(0.5, 5, k)
    cfg = LossConfig(alpha=0.0, pos_weights=p)
    got = weighted_bce_combined(z, t, np.zeros((n, 3)), np.zeros((n, 3)), cfg).value
    assert got == pytest.approx(ref_bce(z.tolist(), t.tolist(), p.tolist()), abs=1e-12)


def test_defaults():
    cfg = LossConfig()
    assert (cfg.alpha, cfg.beta) == (5.0, 3.0)
    with pytest.raises(ConfigError):
        LossConfig(alpha=-1)


@settings(max_examples=15, deadline=None)
@given(st.integers(0, 2**31))
def test_gradients_match_finite_differences(seed):
    r = np.random.default_rng(seed)
    n, k = 5, 4
    z, y = r.normal(size=(n, k)), r.integers(0, k, n)
    p, t = np.tanh(r.normal(size=(n, 2))), r.uniform(-1, 1, (n, 2))
    w = ClassWeights(r.uniform(0.1, 1, k), np.ones(k, int))
    cfg = LossConfig(alpha=5.0, beta=3.0, class_weights=w)

    out = combined_loss(z, y, p, t, cfg)
    assert rel_err(out.grads["logits"], central_diff(lambda a: combined_loss(a, y, p, t, cfg).value, z)) < 1e-6
    assert rel_err(out.grads["pred_va"], central_diff(lambda a: combined_loss(z, y, a, t, cfg).value, p)) < 1e-6

    out = ccc_loss(p, t, cfg)
    assert rel_err(out.grads["pred_va"], central_diff(lambda a: ccc_loss(a, t, cfg).value, p)) < 1e-6

    mt = r.integers(0, 2, (n, k))
    pv, tv = np.tanh(r.normal(size=(n, 3))), r.uniform(-1, 1, (n, 3))
    bcfg = LossConfig(alpha=5.0, pos_weights=r.uniform(0.5, 4, k))
    out = weighted_bce_combined(z, mt, pv, tv, bcfg)
    assert rel_err(out.grads["logits"], central_diff(lambda a: weighted_bce_combined(a, mt, pv, tv, bcfg).value, z)) < 1e-6
    assert rel_err(out.grads["pred_vad"], central_diff(lambda a: weighted_bce_combined(z, mt, a, tv, bcfg).value, pv)) < 1e-6
