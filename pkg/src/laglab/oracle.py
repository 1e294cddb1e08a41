"""Exact tabular-MDP evaluation of every theoretical object used in training.

Everything here is computed by direct linear solves and full enumeration over
S x A (no sampling), so the performance-difference identity, the sandwich and
lower bounds, the clipped-operator fixed point/contraction, and the
Pinsker-style relation are all checkable to solver precision.
"""

from __future__ import annotations

import numpy as np
import scipy.linalg

from .errors import PreconditionViolated, SingularSystem
from .mdp import TabularMDP, TabularPolicy


def _policy_kernel(mdp, policy):
    """P_pi[s, s'] and r_pi[s] for the induced Markov reward process."""
    P_pi = np.einsum("sa,sap->sp", policy.probs, mdp.P)
    r_pi = (policy.probs * mdp.R).sum(axis=1)
    return P_pi, r_pi


def exact_value(mdp, policy):
    """V_pi from the linear system (I - gamma * P_pi) V = r_pi."""
    P_pi, r_pi = _policy_kernel(mdp, policy)
    A = np.eye(mdp.num_states) - mdp.gamma * P_pi
    try:
        return scipy.linalg.solve(A, r_pi)
    except scipy.linalg.LinAlgError as exc:  # unreachable for gamma < 1
        raise SingularSystem(str(exc)) from exc


def exact_q_advantage(mdp, policy):
    """Q = R + gamma * P V and A = Q - V; rows of A have zero mean under pi.

    The baseline subtracted is sum_a pi(a|s) Q(s, a) (equal to V up to solver
    round-off), which makes the zero-mean identity hold to machine precision
    instead of inheriting the linear-solve residual.
    """
    V = exact_value(mdp, policy)
    Q = mdp.R + mdp.gamma * mdp.P @ V
    baseline = (policy.probs * Q).sum(axis=1)
    return Q, Q - baseline[:, None]


def exact_return(mdp, policy):
    """J(pi) = sum_s mu(s) V_pi(s)."""
    return float(mdp.mu @ exact_value(mdp, policy))


def discounted_state_dist(mdp, policy):
    """d_pi = (1 - gamma) mu^T (I - gamma P_pi)^{-1}; a distribution over states."""
    P_pi, _ = _policy_kernel(mdp, policy)
    A = np.eye(mdp.num_states) - mdp.gamma * P_pi.T
    try:
        d = scipy.linalg.solve(A, (1.0 - mdp.gamma) * mdp.mu)
    except scipy.linalg.LinAlgError as exc:
        raise SingularSystem(str(exc)) from exc
    return d


def tv_state(p_policy, q_policy, s):
    """Per-state total variation (1/2) sum_a |p(a|s) - q(a|s)|."""
    return 0.5 * float(np.abs(p_policy.probs[s] - q_policy.probs[s]).sum())


def tv_per_state(p_policy, q_policy):
    return 0.5 * np.abs(p_policy.probs - q_policy.probs).sum(axis=1)


def kl_per_state(p_policy, q_policy):
    """KL(p||q) per state; p(a)=0 terms contribute zero, q=0<p diverges."""
    p, q = p_policy.probs, q_policy.probs
    with np.errstate(divide="ignore", invalid="ignore"):
        terms = np.where(p > 0, p * (np.log(p) - np.log(q)), 0.0)
    return terms.sum(axis=1)


def solve_optimal(mdp, tol=1e-12, max_iter=100_000):
    """Value iteration to the optimal greedy policy (used by oracle tests)."""
    V = np.zeros(mdp.num_states)
    for _ in range(max_iter):
        Q = mdp.R + mdp.gamma * mdp.P @ V
        V_new = Q.max(axis=1)
        if np.abs(V_new - V).max() <= tol:
            V = V_new
            break
        V = V_new
    Q = mdp.R + mdp.gamma * mdp.P @ V
    return TabularPolicy.greedy(Q)


# -- performance difference and its bounds ------------------------------------


def perf_diff_exact(mdp, pi_new, pi_old):
    """Both sides of the performance-difference identity, exactly.

    lhs = J(pi') - J(pi); rhs = 1/(1-gamma) E_{s~d^{pi'}, a~pi'}[A_pi(s, a)].
    """
    lhs = exact_return(mdp, pi_new) - exact_return(mdp, pi_old)
    _, A_old = exact_q_advantage(mdp, pi_old)
    d_new = discounted_state_dist(mdp, pi_new)
    rhs = float(d_new @ (pi_new.probs * A_old).sum(axis=1)) / (1.0 - mdp.gamma)
    return lhs, rhs


def surrogate_objective(mdp, pi_new, pi_old):
    """L_pi(pi') = 1/(1-gamma) E_{s~d^pi, a~pi}[(pi'/pi) A_pi], by full sums."""
    _, A_old = exact_q_advantage(mdp, pi_old)
    d_old = discounted_state_dist(mdp, pi_old)
    return float(d_old @ (pi_new.probs * A_old).sum(axis=1)) / (1.0 - mdp.gamma)


def _advantage_extended(mdp, policy):
    """A_pi in extended precision (float64 V is fine: the zero-mean identity
    holds for any V, so only the downstream arithmetic precision matters).

    The 1/(1-gamma)^2 amplification in the bounds turns float64 summation
    residue (~1e-14 at gamma=0.99) into ~1e-10; extended precision keeps the
    analytic zeros at pi' = pi comfortably below the 1e-10 tolerances.
    """
    ld = np.longdouble
    V = exact_value(mdp, policy).astype(ld)
    Q = mdp.R.astype(ld) + ld(mdp.gamma) * mdp.P.astype(ld) @ V
    baseline = _expectation_rows(policy, Q)
    return Q - baseline[:, None]


def _expectation_rows(policy, values_sa):
    """Row-normalized E_{a~pi}[values(s, a)]: stored rows may be a few ulp off
    exact normalization, which the bounds would amplify by 1/(1-gamma)^2."""
    p = policy.probs.astype(np.longdouble)
    return (p * values_sa).sum(axis=1) / p.sum(axis=1)


def theorem1_bounds(mdp, pi_new, pi_old):
    """Sandwich D- <= J(pi') - J(pi) <= D+ built from the surrogate and TV.

    D+- = L_pi(pi') +- 2 gamma eps^{pi'} / (1-gamma)^2 * E_{s~d^pi}[D_TV(pi'||pi)[s]]
    with eps^{pi'} = max_s |E_{a~pi'} A_pi(s, a)|.
    """
    gamma = np.longdouble(mdp.gamma)
    A_old = _advantage_extended(mdp, pi_old)
    d_old = discounted_state_dist(mdp, pi_old).astype(np.longdouble)
    expected_adv = _expectation_rows(pi_new, A_old)
    L = (d_old @ expected_adv) / (1.0 - gamma)
    eps = np.abs(expected_adv).max()
    tv_mean = d_old @ tv_per_state(pi_new, pi_old).astype(np.longdouble)
    width = 2.0 * gamma * eps / (1.0 - gamma) ** 2 * tv_mean
    true_diff = exact_return(mdp, pi_new) - exact_return(mdp, pi_old)
    return float(L - width), true_diff, float(L + width)


def lemma2_lower_bound(mdp, pi, pi_T, beta_T):
    """Lower bound on J(pi) - J(pi_T) anchored at the behavior policy.

    Four exact terms under (s ~ d^{beta_T}, a ~ beta_T): the importance-weighted
    advantage of pi, minus the same for pi_T, minus one TV penalty per policy.
    Advantages and both eps constants use A_{beta_T}.
    """
    ld = np.longdouble
    gamma = ld(mdp.gamma)
    A_beta = _advantage_extended(mdp, beta_T)
    d_beta = discounted_state_dist(mdp, beta_T).astype(ld)
    exp_pi = _expectation_rows(pi, A_beta)
    exp_piT = _expectation_rows(pi_T, A_beta)
    coeff = 2.0 * gamma / (1.0 - gamma)
    terms = {
        "advantage": float(d_beta @ exp_pi),
        "backward_ratio": -float(d_beta @ exp_piT),
        "forward_tv": -float(coeff * np.abs(exp_pi).max() * (d_beta @ tv_per_state(beta_T, pi).astype(ld))),
        "backward_tv": -float(coeff * np.abs(exp_piT).max() * (d_beta @ tv_per_state(beta_T, pi_T).astype(ld))),
    }
    bound = sum(terms.values()) / float(1.0 - gamma)
    true_diff = exact_return(mdp, pi) - exact_return(mdp, pi_T)
    return bound, true_diff, terms


def lemma3_lower_bound(mdp, pi, pi_T, beta_T):
    """Realigned lower bound: advantages of pi_T under the behavior distribution.

    bound = 1/(1-gamma) E_{s~d^{beta_T}, a~beta_T}[(pi/beta_T) A_{pi_T}]
            - 2 gamma eps^pi / (1-gamma)^2 * E_{s~d^{beta_T}}[D_TV(beta_T||pi)[s]]
    with eps^pi = max_s |E_{a~pi} A_{pi_T}(s, a)|. Zero at pi = pi_T.
    """
    ld = np.longdouble
    gamma = ld(mdp.gamma)
    A_piT = _advantage_extended(mdp, pi_T)
    d_beta = discounted_state_dist(mdp, beta_T).astype(ld)
    expected_adv = _expectation_rows(pi, A_piT)
    eps = np.abs(expected_adv).max()
    tv = d_beta @ tv_per_state(beta_T, pi).astype(ld)
    coeff = 2.0 * gamma / (1.0 - gamma)
    terms = {"advantage": float(d_beta @ expected_adv), "forward_tv": float(-coeff * eps * tv)}
    bound = sum(terms.values()) / float(1.0 - gamma)
    true_diff = exact_return(mdp, pi) - exact_return(mdp, pi_T)
    return bound, true_diff, terms


def state_dist_tv_check(mdp, pi_new, pi_old):
    """||d^{pi'} - d^pi||_1 vs its policy-TV upper bound 2g/(1-g) E_{d^pi}[D_TV]."""
    lhs = float(np.abs(discounted_state_dist(mdp, pi_new) - discounted_state_dist(mdp, pi_old)).sum())
    d_old = discounted_state_dist(mdp, pi_old)
    rhs = 2.0 * mdp.gamma / (1.0 - mdp.gamma) * float(d_old @ tv_per_state(pi_new, pi_old))
    return lhs, rhs


def pinsker_check(p_policy, q_policy, mdp):
    """Expectation-level Pinsker relation under d^p: (E[D_TV])^2 <= E[D_KL]/2."""
    d = discounted_state_dist(mdp, p_policy)
    tv_mean = float(d @ tv_per_state(p_policy, q_policy))
    kl_mean = float(d @ kl_per_state(p_policy, q_policy))
    return tv_mean**2, kl_mean / 2.0


# -- clipped-importance value operator -----------------------------------------


def pi_rho_bar(target_policy, behavior_policy, rho_bar):
    """Renormalized min(rho_bar * beta, pi): the operator's fixed-point policy."""
    clipped = np.minimum(rho_bar * behavior_policy.probs, target_policy.probs)
    return TabularPolicy(clipped / clipped.sum(axis=1, keepdims=True))


def _clipped_weights(target_policy, behavior_policy, rho_bar, c_bar):
    if rho_bar < c_bar:
        raise PreconditionViolated(f"rho_bar ({rho_bar}) must be >= c_bar ({c_bar})")
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = np.where(
            behavior_policy.probs > 0,
            target_policy.probs / behavior_policy.probs,
            0.0,
        )
    return np.minimum(rho_bar, ratio), np.minimum(c_bar, ratio)


def vtrace_operator(mdp, V_in, target_policy, behavior_policy, rho_bar, c_bar):
    """Exact expectation of the clipped-importance value operator.

    R V = V + (I - gamma C)^{-1} dbar where C[s, s'] = E_{a~beta}[c(s,a) P(s,a,s')]
    and dbar(s) = E_{a~beta}[rho(s,a) (R(s,a) + gamma (P V)(s,a) - V(s))]: the
    closed form of the discounted c-weighted series of rho-weighted TD errors.
    """
    rho, c = _clipped_weights(target_policy, behavior_policy, rho_bar, c_bar)
    beta = behavior_policy.probs
    PV = mdp.P @ V_in
    dbar = (beta * rho * (mdp.R + mdp.gamma * PV - V_in[:, None])).sum(axis=1)
    C = np.einsum("sa,sap->sp", beta * c, mdp.P)
    series = scipy.linalg.solve(np.eye(mdp.num_states) - mdp.gamma * C, dbar)
    return V_in + series


def contraction_check(mdp, target_policy, behavior_policy, rho_bar, c_bar, rng, num_pairs=50):
    """Empirical sup-norm contraction factors against the guaranteed modulus.

    Returns (factors, eta) with eta = 1 - (1-gamma) alpha and
    alpha = min_s E_{a~beta}[rho(s, a)].
    """
    rho, _ = _clipped_weights(target_policy, behavior_policy, rho_bar, c_bar)
    alpha = float((behavior_policy.probs * rho).sum(axis=1).min())
    eta = 1.0 - (1.0 - mdp.gamma) * alpha
    factors = []
    for _ in range(num_pairs):
        V1 = rng.uniform(-5.0, 5.0, mdp.num_states)
        V2 = rng.uniform(-5.0, 5.0, mdp.num_states)
        R1 = vtrace_operator(mdp, V1, target_policy, behavior_policy, rho_bar, c_bar)
        R2 = vtrace_operator(mdp, V2, target_policy, behavior_policy, rho_bar, c_bar)
        factors.append(np.abs(R1 - R2).max() / np.abs(V1 - V2).max())
    return np.array(factors), eta
