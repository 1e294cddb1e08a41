import numpy as np
import pytest

from laglab.optim import OptimizerState, adam_step, clip_grad_norm, global_grad_norm


def test_zero_grads_leave_params_unchanged():
    params = [np.array([1.0, 2.0]), np.array([[3.0]])]
    state = OptimizerState.for_params(params, learning_rate=1e-3)
    new_params, _ = adam_step(params, [np.zeros(2), np.zeros((1, 1))], state)
    for p, q in zip(params, new_params):
        np.testing.assert_array_equal(p, q)


def test_single_step_matches_hand_formula():
    # scalar problem: p = 2.0, g = 0.5, defaults b1=0.9, b2=0.999, eps=1e-8
    p, g, lr = 2.0, 0.5, 0.01
    state = OptimizerState.for_params([np.array([p])], learning_rate=lr)
    (p_new,), _ = adam_step([np.array([p])], [np.array([g])], state)
    m_hat = (0.1 * g) / (1.0 - 0.9)
    v_hat = (0.001 * g * g) / (1.0 - 0.999)
    expected = p - lr * m_hat / (np.sqrt(v_hat) + 1e-8)
    assert p_new[0] == pytest.approx(expected, abs=1e-15)


def test_anneal_reaches_zero_at_final_iteration():
    params = [np.array([1.0])]
    state = OptimizerState.for_params(params, learning_rate=0.1, anneal=True, total_steps=10)
    state.anneal_step = 10
    assert state.effective_lr() == 0.0
    new_params, _ = adam_step(params, [np.array([123.0])], state)
    assert new_params[0][0] == pytest.approx(1.0)


def test_anneal_is_linear():
    state = OptimizerState.for_params([np.array([0.0])], learning_rate=1.0, anneal=True, total_steps=4)
    lrs = []
    for it in range(4):
        state.anneal_step = it
        lrs.append(state.effective_lr())
    np.testing.assert_allclose(lrs, [1.0, 0.75, 0.5, 0.25])


def test_clip_norm_below_threshold_is_identity():
    grads = [np.array([0.3]), np.array([0.26])]  # norm ~0.397
    out = clip_grad_norm(grads, 0.5)
    for g, o in zip(grads, out):
        np.testing.assert_array_equal(g, o)


def test_clip_norm_scales_to_exactly_max():
    grads = [np.array([0.6]), np.array([0.8])]  # norm 1.0
    out = clip_grad_norm(grads, 0.5)
    assert global_grad_norm(out) == pytest.approx(0.5, abs=1e-12)
    np.testing.assert_allclose(out[0], [0.3])
    np.testing.assert_allclose(out[1], [0.4])


def test_clip_norm_property_sweep():
    rng = np.random.default_rng(0)
    for _ in range(200):
        grads = [rng.standard_normal(rng.integers(1, 5)) * rng.uniform(0, 10) for _ in range(3)]
        out = clip_grad_norm(grads, 0.5)
        assert global_grad_norm(out) <= 0.5 + 1e-12
