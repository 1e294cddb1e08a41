"""Per-transition advantages and value targets.

Two estimators over the same actor-major batch layout: lambda-discounted TD
(the PPO-family default) and the clipped-importance realignment used when the
data came from stale behavior policies. Both run as backward recursions per
actor block, cut at episode ends, and both have direct (non-recursive)
definitions that the tests check against.

Bootstrapping convention: terminal transitions bootstrap 0; truncated ones and
block boundaries bootstrap from the value of the stored next state.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass

import numpy as np

from .errors import NonFiniteRatio, PreconditionViolated
from .nets import policy_logprob

RATIO_CLAMP = (1e-8, 1e8)


@dataclass
class AdvantageEstimate:
    """Arrays congruent with the batch; `ratios` is pi_T / beta_T at the data."""

    advantages: np.ndarray
    value_targets: np.ndarray
    ratios: np.ndarray
    values: np.ndarray
    method: str

    def digest(self):
        """Content hash used to assert the estimate is frozen across epochs."""
        h = hashlib.sha256()
        for a in (self.advantages, self.value_targets, self.ratios):
            h.update(np.ascontiguousarray(a).tobytes())
        return h.hexdigest()


def _blocks(arr, num_actors):
    return np.asarray(arr, dtype=np.float64).reshape(num_actors, -1)


def gae(rewards, values, next_values, dones, truncateds, num_actors, gamma, lam):
    """Backward lambda-weighted TD recursion; value targets are A + V."""
    r = _blocks(rewards, num_actors)
    V = _blocks(values, num_actors)
    Vn = _blocks(next_values, num_actors)
    done = np.asarray(dones).reshape(num_actors, -1)
    trunc = np.asarray(truncateds).reshape(num_actors, -1)
    nonterm = 1.0 - done
    cont = ~(done | trunc)
    T = r.shape[1]

    delta = r + gamma * nonterm * Vn - V
    adv = np.zeros_like(r)
    adv[:, T - 1] = delta[:, T - 1]
    for t in range(T - 2, -1, -1):
        adv[:, t] = delta[:, t] + gamma * lam * cont[:, t] * adv[:, t + 1]
    return AdvantageEstimate(
        advantages=adv.reshape(-1),
        value_targets=(adv + V).reshape(-1),
        ratios=np.ones(r.size),
        values=V.reshape(-1).copy(),
        method="gae",
    )


def vtrace_realign(
    rewards,
    values,
    next_values,
    dones,
    truncateds,
    num_actors,
    learner_logprobs,
    behavior_logprobs,
    rho_bar,
    c_bar,
    gamma,
    lam,
):
    """Clipped-importance value targets and one-step-lookahead advantages.

    rho_t = min(rho_bar, pi/beta) weights the TD error, c_t = min(c_bar, same)
    weights the recursion carry (with the lambda factor); the target policy is
    the learner at realignment time. Computed once per iteration and frozen.
    """
    if not rho_bar >= c_bar > 0:
        raise PreconditionViolated(f"need rho_bar >= c_bar > 0, got {rho_bar}, {c_bar}")
    ratio = ratios_from_logprobs(learner_logprobs, behavior_logprobs)
    r = _blocks(rewards, num_actors)
    V = _blocks(values, num_actors)
    Vn = _blocks(next_values, num_actors)
    done = np.asarray(dones).reshape(num_actors, -1)
    trunc = np.asarray(truncateds).reshape(num_actors, -1)
    rho = np.minimum(rho_bar, ratio).reshape(num_actors, -1)
    c = np.minimum(c_bar, ratio).reshape(num_actors, -1)
    nonterm = 1.0 - done
    cont = ~(done | trunc)
    T = r.shape[1]

    delta = rho * (r + gamma * nonterm * Vn - V)
    v_minus_V = np.zeros_like(r)
    v_minus_V[:, T - 1] = delta[:, T - 1]
    for t in range(T - 2, -1, -1):
        v_minus_V[:, t] = delta[:, t] + gamma * lam * c[:, t] * cont[:, t] * v_minus_V[:, t + 1]
    v = V + v_minus_V

    # A_t = r_t + gamma * v(s_{t+1}) - V(s_t); past an episode end the target
    # value falls back to the bootstrap V(s_{t+1}) (and terminal steps zero it).
    v_next = Vn.copy()
    v_next[:, :-1] = np.where(cont[:, :-1], v[:, 1:], Vn[:, :-1])
    adv = r + gamma * nonterm * v_next - V
    return AdvantageEstimate(
        advantages=adv.reshape(-1),
        value_targets=v.reshape(-1),
        ratios=ratio,
        values=V.reshape(-1).copy(),
        method="vtrace",
    )


def ratios_from_logprobs(learner_logprobs, behavior_logprobs):
    """exp(log pi_T - log beta_T), clamped to RATIO_CLAMP before use."""
    diff = np.asarray(learner_logprobs) - np.asarray(behavior_logprobs)
    if not np.all(np.isfinite(diff)):
        raise NonFiniteRatio("non-finite log-probability difference")
    with np.errstate(over="ignore"):
        ratio = np.exp(diff)
    return np.clip(ratio, *RATIO_CLAMP)


def ratios(policy_mlp, head, batch):
    """Importance ratios of a learner snapshot against the stored behavior."""
    learner_lp = policy_logprob(policy_mlp, head, batch.obs, batch.actions)
    return ratios_from_logprobs(learner_lp, batch.behavior_logprob)
