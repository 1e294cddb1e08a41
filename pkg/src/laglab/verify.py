"""Property-sweep drivers behind `laglab verify` and the acceptance suite.

Three suites: `lemmas` (identity, sandwich, lower bounds, state-distribution
TV, Pinsker), `vtrace` (operator fixed point, contraction modulus, on-policy
reduction), and `gradients` (central finite differences against every loss).
Each check reports its worst-case margin; a check fails only if the margin
crosses the stated tolerance.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import oracle, tape
from .advantage import gae, vtrace_realign
from .mdp import random_mdp, random_policy
from .nets import init_policy, init_value, param_list, policy_logprob, policy_logprob_t, value_t
from .optim import finite_difference_grads
from .policyopt import (
    kl_penalty_loss,
    ppo_clip_loss,
    spo_loss,
    tvpo_policy_loss,
    value_loss,
)


@dataclass
class CheckResult:
    suite: str
    name: str
    passed: bool
    worst: float
    tolerance: float
    detail: str = ""

    def row(self):
        mark = "PASS" if self.passed else "FAIL"
        return f"{mark}  {self.suite:9s} {self.name:32s} worst={self.worst:+.3e} tol={self.tolerance:.1e} {self.detail}"


def _random_instance(rng, max_size=8):
    S = int(rng.integers(2, max_size + 1))
    A = int(rng.integers(2, max_size + 1))
    gamma = 0.9 if rng.random() < 0.5 else 0.99
    return random_mdp(rng, S, A, gamma=gamma), S, A


def check_lemmas(num_instances=1000, seed=0):
    """Exact-identity and bound sweeps over random tabular instances."""
    rng = np.random.default_rng(seed)
    worst_identity = 0.0
    worst_sandwich = np.inf  # min margin; negative = violation
    worst_l2 = np.inf
    worst_l3 = np.inf
    worst_l5 = np.inf
    worst_pinsker = np.inf
    for _ in range(num_instances):
        mdp, S, A = _random_instance(rng)
        pi = random_policy(rng, S, A)
        pi_T = random_policy(rng, S, A)
        beta = random_policy(rng, S, A)

        lhs, rhs = oracle.perf_diff_exact(mdp, pi, pi_T)
        worst_identity = max(worst_identity, abs(lhs - rhs))

        lo, diff, hi = oracle.theorem1_bounds(mdp, pi, pi_T)
        worst_sandwich = min(worst_sandwich, diff - lo, hi - diff)

        b2, d2, _ = oracle.lemma2_lower_bound(mdp, pi, pi_T, beta)
        worst_l2 = min(worst_l2, d2 - b2)

        b3, d3, _ = oracle.lemma3_lower_bound(mdp, pi, pi_T, beta)
        worst_l3 = min(worst_l3, d3 - b3)

        l5_lhs, l5_rhs = oracle.state_dist_tv_check(mdp, pi, pi_T)
        worst_l5 = min(worst_l5, l5_rhs - l5_lhs)

        tv_sq, kl_half = oracle.pinsker_check(beta, pi, mdp)
        worst_pinsker = min(worst_pinsker, kl_half - tv_sq)

    return [
        CheckResult("lemmas", "performance_difference_identity", worst_identity <= 1e-9, worst_identity, 1e-9),
        CheckResult("lemmas", "sandwich_bound_margin", worst_sandwich >= -1e-10, worst_sandwich, 1e-10),
        CheckResult("lemmas", "behavior_anchored_lower_bound", worst_l2 >= -1e-10, worst_l2, 1e-10),
        CheckResult("lemmas", "realigned_lower_bound", worst_l3 >= -1e-10, worst_l3, 1e-10),
        CheckResult("lemmas", "state_dist_tv_bound", worst_l5 >= -1e-10, worst_l5, 1e-10),
        CheckResult("lemmas", "pinsker_expectation_bound", worst_pinsker >= -1e-12, worst_pinsker, 1e-12),
    ]


def check_zero_backward_lag(num_instances=200, seed=1, tv_floor=1e-3):
    """At pi = pi_T != beta_T the realigned bound is 0 while the
    behavior-anchored bound is strictly negative (when the policies differ)."""
    rng = np.random.default_rng(seed)
    worst_abs_l3 = 0.0
    worst_l2 = -np.inf  # max over instances with enough TV; must stay <= -1e-6
    counted = 0
    for _ in range(num_instances):
        mdp, S, A = _random_instance(rng)
        pi_T = random_policy(rng, S, A)
        beta = random_policy(rng, S, A)
        b3, _, _ = oracle.lemma3_lower_bound(mdp, pi_T, pi_T, beta)
        worst_abs_l3 = max(worst_abs_l3, abs(b3))
        d_beta = oracle.discounted_state_dist(mdp, beta)
        mean_tv = float(d_beta @ oracle.tv_per_state(beta, pi_T))
        if mean_tv >= tv_floor:
            counted += 1
            b2, _, _ = oracle.lemma2_lower_bound(mdp, pi_T, pi_T, beta)
            worst_l2 = max(worst_l2, b2)
    return [
        CheckResult("lemmas", "zero_backward_lag_realigned", worst_abs_l3 <= 1e-10, worst_abs_l3, 1e-10),
        CheckResult(
            "lemmas", "negative_backward_lag_behavior", worst_l2 <= -1e-6, worst_l2, 1e-6,
            detail=f"({counted}/{num_instances} instances above TV floor)",
        ),
    ]


def check_vtrace(num_instances=200, seed=2):
    """Fixed point vs exact value of the clipped policy, contraction modulus,
    and the on-policy reduction of the realignment recursion."""
    rng = np.random.default_rng(seed)
    worst_fixed = 0.0
    worst_contraction = -np.inf  # max factor - eta; must be <= 0
    worst_reduction = 0.0
    for i in range(num_instances):
        mdp, S, A = _random_instance(rng, max_size=6)
        target = random_policy(rng, S, A)
        behavior = random_policy(rng, S, A)

        V = np.zeros(S)
        for _ in range(100_000):
            V_next = oracle.vtrace_operator(mdp, V, target, behavior, 1.0, 1.0)
            converged = np.abs(V_next - V).max() <= 1e-13 * max(1.0, np.abs(V_next).max())
            V = V_next
            if converged:
                break
        V_star = oracle.exact_value(mdp, oracle.pi_rho_bar(target, behavior, 1.0))
        worst_fixed = max(worst_fixed, float(np.abs(V - V_star).max()))

        factors, eta = oracle.contraction_check(mdp, target, behavior, 1.0, 1.0, rng, num_pairs=1)
        worst_contraction = max(worst_contraction, float(factors.max() - eta))

        T = 10
        r = rng.standard_normal(T)
        v = rng.standard_normal(T)
        vn = rng.standard_normal(T)
        d = rng.random(T) < 0.2
        tr = np.zeros(T, dtype=bool)
        lp = rng.standard_normal(T)
        lam = rng.uniform(0.0, 1.0)
        est_v = vtrace_realign(r, v, vn, d, tr, 1, lp, lp.copy(), 1.0, 1.0, mdp.gamma, lam)
        est_g = gae(r, v, vn, d, tr, 1, mdp.gamma, lam)
        worst_reduction = max(worst_reduction, float(np.abs(est_v.value_targets - est_g.value_targets).max()))
    return [
        CheckResult("vtrace", "fixed_point_matches_exact_value", worst_fixed <= 1e-8, worst_fixed, 1e-8),
        CheckResult("vtrace", "contraction_factor_below_modulus", worst_contraction <= 0.0, worst_contraction, 0.0),
        CheckResult("vtrace", "on_policy_reduction_to_lambda_td", worst_reduction <= 1e-10, worst_reduction, 1e-10),
    ]


# -- gradient suite -------------------------------------------------------------


def _random_minibatch(rng, kind):
    obs_dim, n = 3, 16
    act_n = 3 if kind == "categorical" else 2
    mlp, head = init_policy(rng, obs_dim, kind, act_n, hidden=(8, 8))
    if kind == "diag_gaussian":
        head.log_std = rng.uniform(-0.7, 0.0, act_n)
    states = rng.standard_normal((n, obs_dim))
    if kind == "categorical":
        actions = rng.integers(0, act_n, n)
    else:
        actions = rng.standard_normal((n, act_n))
    behavior_lp = policy_logprob(mlp, head, states, actions) + rng.uniform(-0.7, 0.7, n)
    advantages = rng.standard_normal(n)
    return mlp, head, states, actions, behavior_lp, advantages


def _grad_match_fraction(analytic, numeric, rtol=1e-4, afloor=1e-8):
    total, ok = 0, 0
    for g_a, g_n in zip(analytic, numeric):
        diff = np.abs(g_a - g_n)
        tol = np.maximum(afloor, rtol * np.maximum(np.abs(g_a), np.abs(g_n)))
        ok += int((diff <= tol).sum())
        total += g_a.size
    return ok / total


def policy_loss_builders(rng, n):
    """Name -> (node_builder, fd_builder) over (logp_node, behavior_lp, adv).

    The two differ only for the masked entropy-augmented loss: detached terms
    contribute value but zero gradient, so the finite-difference side must hold
    them frozen. Zeroing them changes the loss by a constant only, which central
    differences cancel, and leaves the analytic gradient untouched.
    """
    mask = rng.random(n) < 0.7

    def masked(lp, blp, adv):
        return tvpo_policy_loss(lp, blp, adv, mask, 0.05)

    def masked_fd(lp, blp, adv):
        ratio = tape.exp(lp - tape.wrap(blp))
        coeff = tape.wrap(adv) - 0.05 * lp
        return -(ratio * coeff * tape.wrap(mask.astype(float))).mean()

    def paired(fn):
        return fn, fn

    return {
        "tvpo": paired(lambda lp, blp, adv: tvpo_policy_loss(lp, blp, adv, np.ones(n, dtype=bool), 0.0)),
        "tvpo_entropy_augmented": (masked, masked_fd),
        "ppo_clip": paired(lambda lp, blp, adv: ppo_clip_loss(lp, blp, adv, 0.2)),
        "ppo_kl": paired(lambda lp, blp, adv: kl_penalty_loss(lp, blp, adv, 0.2, 0.7)),
        "spo": paired(lambda lp, blp, adv: spo_loss(lp, blp, adv, 0.9)),
    }


def check_gradients(num_minibatches=50, seed=3, h=1e-5):
    """Central-difference comparison for every loss on random minibatches."""
    rng = np.random.default_rng(seed)
    names = ["tvpo", "tvpo_entropy_augmented", "ppo_clip", "ppo_kl", "spo", "value"]
    worst = {name: 1.0 for name in names}
    for mb in range(num_minibatches):
        kind = "categorical" if mb % 2 == 0 else "diag_gaussian"
        mlp, head, states, actions, behavior_lp, advantages = _random_minibatch(rng, kind)
        n_layers = len(mlp.weights)
        builders = policy_loss_builders(rng, len(advantages))

        for name, (build, fd_build) in builders.items():
            arrays = param_list(mlp, head)
            nodes = [tape.Node(a) for a in arrays]
            loss = build(policy_logprob_t(nodes, head, n_layers, states, actions), behavior_lp, advantages)
            tape.backward(loss)
            analytic = [node.grad for node in nodes]

            def loss_fn(params):
                ns = [tape.Node(a) for a in params]
                lp = policy_logprob_t(ns, head, n_layers, states, actions)
                return float(fd_build(lp, behavior_lp, advantages).value)

            numeric = finite_difference_grads(loss_fn, [a.copy() for a in arrays], h=h)
            worst[name] = min(worst[name], _grad_match_fraction(analytic, numeric))

        vmlp = init_value(rng, 3, (8, 8))
        targets = rng.standard_normal(len(advantages))
        varrays = param_list(vmlp)
        vnodes = [tape.Node(a) for a in varrays]
        vloss = value_loss(value_t(vnodes, states, len(vmlp.weights)), targets)
        tape.backward(vloss)
        analytic = [node.grad for node in vnodes]

        def vloss_fn(params):
            ns = [tape.Node(a) for a in params]
            return float(value_loss(value_t(ns, states, len(vmlp.weights)), targets).value)

        numeric = finite_difference_grads(vloss_fn, [a.copy() for a in varrays], h=h)
        worst["value"] = min(worst["value"], _grad_match_fraction(analytic, numeric))

    return [
        CheckResult("gradients", name, worst[name] >= 0.99, worst[name], 0.99,
                    detail="(fraction of coordinates within tolerance)")
        for name in names
    ]


def run_suites(which="all", seed=0, instances=None):
    """Run the named suite(s); returns the flat CheckResult list."""
    results = []
    if which in ("lemmas", "all"):
        n = instances or 1000
        results += check_lemmas(num_instances=n, seed=seed)
        results += check_zero_backward_lag(num_instances=max(1, n // 5), seed=seed + 1)
    if which in ("vtrace", "all"):
        results += check_vtrace(num_instances=instances or 200, seed=seed + 2)
    if which in ("gradients", "all"):
        results += check_gradients(num_minibatches=instances or 50, seed=seed + 3)
    return results
