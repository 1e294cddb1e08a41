import numpy as np
import pytest

from laglab.errors import PreconditionViolated
from laglab.mdp import TabularMDP, TabularPolicy, mix_policies, random_mdp, random_policy
from laglab.oracle import (
    contraction_check,
    discounted_state_dist,
    exact_q_advantage,
    exact_return,
    exact_value,
    kl_per_state,
    lemma2_lower_bound,
    lemma3_lower_bound,
    perf_diff_exact,
    pi_rho_bar,
    pinsker_check,
    solve_optimal,
    state_dist_tv_check,
    theorem1_bounds,
    tv_per_state,
    tv_state,
    vtrace_operator,
)


def value_iteration_policy_eval(mdp, policy, iters=20_000):
    """Independent oracle: iterate V <- r_pi + gamma P_pi V from zero."""
    P_pi = np.einsum("sa,sap->sp", policy.probs, mdp.P)
    r_pi = (policy.probs * mdp.R).sum(axis=1)
    V = np.zeros(mdp.num_states)
    for _ in range(iters):
        V = r_pi + mdp.gamma * P_pi @ V
    return V


def two_state_switch_mdp():
    # a0 stays, a1 switches; R[0] = [0, 0.5], R[1] = [1, 0]; start in state 0
    P = np.zeros((2, 2, 2))
    P[0, 0, 0] = P[1, 0, 1] = 1.0
    P[0, 1, 1] = P[1, 1, 0] = 1.0
    R = np.array([[0.0, 0.5], [1.0, 0.0]])
    return TabularMDP(P, R, mu=np.array([1.0, 0.0]), gamma=0.9)


ALWAYS_STAY = TabularPolicy(np.array([[1.0, 0.0], [1.0, 0.0]]))
ALWAYS_SWITCH = TabularPolicy(np.array([[0.0, 1.0], [0.0, 1.0]]))


# -- values, advantages, distributions ----------------------------------------


def test_zero_rewards_zero_value():
    mdp = random_mdp(np.random.default_rng(0), 5, 3, gamma=0.95)
    mdp.R[...] = 0.0
    np.testing.assert_allclose(exact_value(mdp, random_policy(np.random.default_rng(1), 5, 3)), 0.0)


def test_self_loop_geometric_series():
    mdp = TabularMDP(np.ones((1, 1, 1)), np.ones((1, 1)), np.ones(1), gamma=0.9)
    policy = TabularPolicy(np.ones((1, 1)))
    assert exact_value(mdp, policy)[0] == pytest.approx(10.0, abs=1e-12)
    assert exact_return(mdp, policy) == pytest.approx(10.0, abs=1e-12)


def test_exact_value_matches_value_iteration():
    rng = np.random.default_rng(2)
    mdp = random_mdp(rng, 6, 3, gamma=0.9)
    policy = random_policy(rng, 6, 3)
    np.testing.assert_allclose(
        exact_value(mdp, policy), value_iteration_policy_eval(mdp, policy), atol=1e-10
    )


def test_advantage_zero_mean_under_policy():
    rng = np.random.default_rng(3)
    for _ in range(50):
        mdp = random_mdp(rng, 5, 4, gamma=0.99)
        policy = random_policy(rng, 5, 4)
        _, A = exact_q_advantage(mdp, policy)
        np.testing.assert_allclose((policy.probs * A).sum(axis=1), 0.0, atol=1e-12)


def test_optimal_policy_has_nonpositive_advantage():
    rng = np.random.default_rng(4)
    mdp = random_mdp(rng, 6, 3, gamma=0.9)
    pi_star = solve_optimal(mdp)
    _, A = exact_q_advantage(mdp, pi_star)
    assert A.max() <= 1e-12


def test_three_state_chain_hand_solve():
    # deterministic chain, a0 stays / a1 moves right, reward 1 in the last state
    P = np.zeros((3, 2, 3))
    for s in range(3):
        P[s, 0, s] = 1.0
        P[s, 1, min(s + 1, 2)] = 1.0
    R = np.zeros((3, 2))
    R[2, :] = 1.0
    mdp = TabularMDP(P, R, mu=np.array([1.0, 0.0, 0.0]), gamma=0.5)
    right = TabularPolicy(np.array([[0.0, 1.0]] * 3))
    V = exact_value(mdp, right)
    np.testing.assert_allclose(V, [0.5, 1.0, 2.0], atol=1e-12)
    Q, A = exact_q_advantage(mdp, right)
    np.testing.assert_allclose(Q, [[0.25, 0.5], [0.5, 1.0], [2.0, 2.0]], atol=1e-12)
    np.testing.assert_allclose(A, [[-0.25, 0.0], [-0.5, 0.0], [0.0, 0.0]], atol=1e-12)


def test_monte_carlo_return_matches_exact():
    rng = np.random.default_rng(5)
    mdp = random_mdp(rng, 4, 2, gamma=0.9)
    policy = random_policy(rng, 4, 2)
    J = exact_return(mdp, policy)
    episodes, horizon = 4000, 200
    pol_cdf = np.cumsum(policy.probs, axis=1)
    p_cdf = np.cumsum(mdp.P, axis=2)
    mu_cdf = np.cumsum(mdp.mu)
    returns = np.empty(episodes)
    for ep in range(episodes):
        s = int(np.searchsorted(mu_cdf, rng.random(), side="right"))
        total, disc = 0.0, 1.0
        for _ in range(horizon):
            a = int(np.searchsorted(pol_cdf[s], rng.random(), side="right"))
            total += disc * mdp.R[s, a]
            disc *= mdp.gamma
            s = int(np.searchsorted(p_cdf[s, a], rng.random(), side="right"))
        returns[ep] = total
    sem = returns.std(ddof=1) / np.sqrt(episodes)
    assert abs(returns.mean() - J) <= 3.0 * sem + 1e-9


def test_discounted_state_dist_basics():
    mdp = TabularMDP(np.ones((1, 1, 1)), np.zeros((1, 1)), np.ones(1), gamma=0.7)
    np.testing.assert_allclose(discounted_state_dist(mdp, TabularPolicy(np.ones((1, 1)))), [1.0])
    rng = np.random.default_rng(6)
    mdp = random_mdp(rng, 5, 3, gamma=0.0)
    policy = random_policy(rng, 5, 3)
    np.testing.assert_allclose(discounted_state_dist(mdp, policy), mdp.mu, atol=1e-12)


def test_discounted_state_dist_matches_power_series():
    rng = np.random.default_rng(7)
    mdp = random_mdp(rng, 6, 2, gamma=0.9)
    policy = random_policy(rng, 6, 2)
    P_pi = np.einsum("sa,sap->sp", policy.probs, mdp.P)
    d_series = np.zeros(6)
    row = mdp.mu.copy()
    for t in range(200):
        d_series += (1.0 - mdp.gamma) * mdp.gamma**t * row
        row = row @ P_pi
    d = discounted_state_dist(mdp, policy)
    np.testing.assert_allclose(d, d_series, atol=1e-8)
    assert d.sum() == pytest.approx(1.0, abs=1e-10)


# -- per-state TV and the sampled-estimator identity ---------------------------


def test_tv_state_basics():
    p = TabularPolicy(np.array([[0.3, 0.7]]))
    assert tv_state(p, p, 0) == 0.0
    d1 = TabularPolicy(np.array([[1.0, 0.0]]))
    d2 = TabularPolicy(np.array([[0.0, 1.0]]))
    assert tv_state(d1, d2, 0) == 1.0


def test_tv_equals_expected_abs_ratio_deviation():
    # D_TV(p||q)[s] = (1/2) E_{a~q} |p/q - 1|, enumerated exactly
    rng = np.random.default_rng(8)
    for _ in range(100):
        p = random_policy(rng, 4, 5)
        q = random_policy(rng, 4, 5)
        for s in range(4):
            direct = tv_state(p, q, s)
            est = 0.5 * float((q.probs[s] * np.abs(p.probs[s] / q.probs[s] - 1.0)).sum())
            assert est == pytest.approx(direct, abs=1e-12)


# -- performance difference and bounds -----------------------------------------


def test_perf_diff_identity_at_equal_policies():
    rng = np.random.default_rng(9)
    mdp = random_mdp(rng, 5, 3, gamma=0.9)
    policy = random_policy(rng, 5, 3)
    lhs, rhs = perf_diff_exact(mdp, policy, policy)
    assert lhs == pytest.approx(0.0, abs=1e-12)
    assert rhs == pytest.approx(0.0, abs=1e-12)


def test_perf_diff_identity_hand_two_state():
    mdp = two_state_switch_mdp()
    lhs, rhs = perf_diff_exact(mdp, ALWAYS_SWITCH, ALWAYS_STAY)
    assert lhs == pytest.approx(50.0 / 19.0, abs=1e-12)
    assert rhs == pytest.approx(50.0 / 19.0, abs=1e-9)


def test_perf_diff_identity_sweep():
    rng = np.random.default_rng(10)
    for i in range(300):
        S, A = int(rng.integers(2, 9)), int(rng.integers(2, 9))
        mdp = random_mdp(rng, S, A, gamma=0.9 if i % 2 else 0.99)
        lhs, rhs = perf_diff_exact(mdp, random_policy(rng, S, A), random_policy(rng, S, A))
        assert abs(lhs - rhs) <= 1e-9


def test_theorem1_equality_at_same_policy():
    rng = np.random.default_rng(11)
    mdp = random_mdp(rng, 5, 3, gamma=0.9)
    policy = random_policy(rng, 5, 3)
    lo, diff, hi = theorem1_bounds(mdp, policy, policy)
    for v in (lo, diff, hi):
        assert v == pytest.approx(0.0, abs=1e-10)


def test_theorem1_sandwich_sweep():
    rng = np.random.default_rng(12)
    for i in range(300):
        S, A = int(rng.integers(2, 9)), int(rng.integers(2, 9))
        mdp = random_mdp(rng, S, A, gamma=0.9 if i % 2 else 0.99)
        lo, diff, hi = theorem1_bounds(mdp, random_policy(rng, S, A), random_policy(rng, S, A))
        assert lo <= diff + 1e-10
        assert diff <= hi + 1e-10


def test_theorem1_gap_shrinks_under_interpolation():
    rng = np.random.default_rng(13)
    mdp = random_mdp(rng, 5, 3, gamma=0.9)
    pi_old = random_policy(rng, 5, 3)
    pi_far = random_policy(rng, 5, 3)
    gaps = []
    for w in [1.0, 0.75, 0.5, 0.25, 0.1, 0.0]:
        lo, _, hi = theorem1_bounds(mdp, mix_policies(pi_old, pi_far, w), pi_old)
        gaps.append(hi - lo)
    assert all(g1 >= g2 - 1e-12 for g1, g2 in zip(gaps, gaps[1:]))
    assert gaps[-1] == pytest.approx(0.0, abs=1e-12)


def test_lemma2_all_equal_policies_vanish():
    rng = np.random.default_rng(14)
    mdp = random_mdp(rng, 5, 3, gamma=0.9)
    policy = random_policy(rng, 5, 3)
    bound, diff, terms = lemma2_lower_bound(mdp, policy, policy, policy)
    assert bound == pytest.approx(0.0, abs=1e-10)
    assert diff == pytest.approx(0.0, abs=1e-12)
    for v in terms.values():
        assert v == pytest.approx(0.0, abs=1e-10)


def test_lemma2_backward_lag_display():
    # pi = pi_T != beta_T: the bound collapses to -1/(1-g) E[4 g eps/(1-g) D_TV]
    rng = np.random.default_rng(15)
    mdp = random_mdp(rng, 5, 3, gamma=0.9)
    pi_T = random_policy(rng, 5, 3)
    beta = random_policy(rng, 5, 3)
    bound, _, _ = lemma2_lower_bound(mdp, pi_T, pi_T, beta)
    _, A_beta = exact_q_advantage(mdp, beta)
    d_beta = discounted_state_dist(mdp, beta)
    eps = np.abs((pi_T.probs * A_beta).sum(axis=1)).max()
    g = mdp.gamma
    display = -float(d_beta @ (4.0 * g * eps / (1.0 - g) * tv_per_state(beta, pi_T))) / (1.0 - g)
    assert bound == pytest.approx(display, abs=1e-10)
    assert bound <= 0.0


def test_lemma2_lower_bound_sweep():
    rng = np.random.default_rng(16)
    for i in range(300):
        S, A = int(rng.integers(2, 9)), int(rng.integers(2, 9))
        mdp = random_mdp(rng, S, A, gamma=0.9 if i % 2 else 0.99)
        bound, diff, _ = lemma2_lower_bound(
            mdp, random_policy(rng, S, A), random_policy(rng, S, A), random_policy(rng, S, A)
        )
        assert bound <= diff + 1e-10


def test_lemma3_zero_at_realigned_policy():
    rng = np.random.default_rng(17)
    for _ in range(20):
        mdp = random_mdp(rng, 5, 3, gamma=0.99)
        pi_T = random_policy(rng, 5, 3)
        beta = random_policy(rng, 5, 3)
        bound, _, _ = lemma3_lower_bound(mdp, pi_T, pi_T, beta)
        assert bound == pytest.approx(0.0, abs=1e-10)


def test_lemma3_lower_bound_sweep():
    rng = np.random.default_rng(18)
    for i in range(300):
        S, A = int(rng.integers(2, 9)), int(rng.integers(2, 9))
        mdp = random_mdp(rng, S, A, gamma=0.9 if i % 2 else 0.99)
        bound, diff, _ = lemma3_lower_bound(
            mdp, random_policy(rng, S, A), random_policy(rng, S, A), random_policy(rng, S, A)
        )
        assert bound <= diff + 1e-10


def test_lemma3_beats_lemma2_at_realigned_policy():
    # the central numerical claim: zero vs strictly negative backward lag
    rng = np.random.default_rng(19)
    for _ in range(50):
        mdp = random_mdp(rng, 5, 3, gamma=0.9)
        pi_T = random_policy(rng, 5, 3)
        beta = random_policy(rng, 5, 3)
        b2, _, _ = lemma2_lower_bound(mdp, pi_T, pi_T, beta)
        b3, _, _ = lemma3_lower_bound(mdp, pi_T, pi_T, beta)
        assert b3 == pytest.approx(0.0, abs=1e-10)
        assert b2 < b3 + 1e-12


def test_state_dist_tv_hand_two_state():
    mdp = two_state_switch_mdp()
    lhs, rhs = state_dist_tv_check(mdp, ALWAYS_SWITCH, ALWAYS_STAY)
    assert lhs == pytest.approx(18.0 / 19.0, abs=1e-12)
    assert rhs == pytest.approx(18.0, abs=1e-12)
    assert lhs <= rhs


def test_state_dist_tv_sweep():
    rng = np.random.default_rng(20)
    for i in range(300):
        S, A = int(rng.integers(2, 9)), int(rng.integers(2, 9))
        mdp = random_mdp(rng, S, A, gamma=0.9 if i % 2 else 0.99)
        lhs, rhs = state_dist_tv_check(mdp, random_policy(rng, S, A), random_policy(rng, S, A))
        assert lhs <= rhs + 1e-10
    identical = random_policy(rng, 3, 2)
    lhs, rhs = state_dist_tv_check(random_mdp(rng, 3, 2), identical, identical)
    assert (lhs, rhs) == (0.0, 0.0)


# -- clipped-importance operator ------------------------------------------------


def test_vtrace_operator_on_policy_fixed_point():
    rng = np.random.default_rng(21)
    mdp = random_mdp(rng, 6, 3, gamma=0.9)
    policy = random_policy(rng, 6, 3)
    V = exact_value(mdp, policy)
    out = vtrace_operator(mdp, V, policy, policy, rho_bar=1e6, c_bar=1e6)
    np.testing.assert_allclose(out, V, atol=1e-9)


def test_vtrace_operator_converges_to_clipped_policy_value():
    rng = np.random.default_rng(22)
    mdp = random_mdp(rng, 6, 3, gamma=0.9)
    target = random_policy(rng, 6, 3)
    behavior = random_policy(rng, 6, 3)
    V = np.zeros(6)
    for _ in range(500):
        V = vtrace_operator(mdp, V, target, behavior, rho_bar=1.0, c_bar=1.0)
    expected = exact_value(mdp, pi_rho_bar(target, behavior, 1.0))
    np.testing.assert_allclose(V, expected, atol=1e-8)


def test_vtrace_contraction_modulus():
    rng = np.random.default_rng(23)
    for trial in range(10):
        mdp = random_mdp(rng, 5, 3, gamma=0.9 if trial % 2 else 0.99)
        target = random_policy(rng, 5, 3)
        behavior = random_policy(rng, 5, 3)
        factors, eta = contraction_check(mdp, target, behavior, 1.0, 1.0, rng, num_pairs=20)
        assert eta < 1.0
        assert factors.max() <= eta + 1e-12


def test_vtrace_operator_rejects_bad_clip_order():
    rng = np.random.default_rng(24)
    mdp = random_mdp(rng, 3, 2)
    p = random_policy(rng, 3, 2)
    with pytest.raises(PreconditionViolated):
        vtrace_operator(mdp, np.zeros(3), p, p, rho_bar=0.5, c_bar=1.0)


def test_pi_rho_bar_limits_and_hand_case():
    rng = np.random.default_rng(25)
    target = random_policy(rng, 4, 3)
    behavior = random_policy(rng, 4, 3)
    np.testing.assert_allclose(pi_rho_bar(target, behavior, 1e9).probs, target.probs, atol=1e-12)
    np.testing.assert_allclose(pi_rho_bar(target, behavior, 1e-9).probs, behavior.probs, atol=1e-6)
    t = TabularPolicy(np.array([[0.8, 0.2]]))
    b = TabularPolicy(np.array([[0.5, 0.5]]))
    np.testing.assert_allclose(pi_rho_bar(t, b, 1.0).probs, [[5.0 / 7.0, 2.0 / 7.0]], atol=1e-12)


# -- Pinsker-style relation ------------------------------------------------------


def test_pinsker_identical_policies():
    rng = np.random.default_rng(26)
    mdp = random_mdp(rng, 4, 3)
    p = random_policy(rng, 4, 3)
    assert pinsker_check(p, p, mdp) == (0.0, 0.0)


def test_pinsker_sweep():
    rng = np.random.default_rng(27)
    for _ in range(300):
        mdp = random_mdp(rng, 5, 4, gamma=0.9)
        p = random_policy(rng, 5, 4)
        q = random_policy(rng, 5, 4)
        tv_sq, kl_half = pinsker_check(p, q, mdp)
        assert tv_sq <= kl_half + 1e-12


def test_pinsker_near_disjoint_supports():
    eps = 1e-9
    p = TabularPolicy(np.array([[1.0 - eps, eps]]))
    q = TabularPolicy(np.array([[eps, 1.0 - eps]]))
    mdp = TabularMDP(np.ones((1, 2, 1)), np.zeros((1, 2)), np.ones(1), gamma=0.9)
    tv_sq, kl_half = pinsker_check(p, q, mdp)
    assert tv_sq <= 1.0  # TV itself is bounded by 1
    assert kl_half > 5.0  # KL side blows up as supports separate
    assert kl_per_state(p, q)[0] > 10.0
