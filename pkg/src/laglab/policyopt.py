"""Minibatch losses and the per-epoch update loop.

Algorithms share one driver (`train_epochs`): shuffle, slice minibatches,
build the configured loss on the tape, backprop, clip the global grad norm,
and take an Adam step. `tvpo` is the total-variation-filtered objective with
realigned advantages; `ppo_clip` / `ppo_kl` / `spo` are the standard
surrogates; `impala` re-realigns targets against the current parameters before
every gradient step.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from . import tape
from .errors import EmptyBatch, NonFiniteLoss
from .nets import (
    param_list,
    policy_entropy,
    policy_entropy_t,
    policy_logprob_t,
    set_param_list,
    value_t,
)
from .optim import adam_step, clip_grad_norm, global_grad_norm

ALGORITHMS = ("tvpo", "ppo_clip", "ppo_kl", "spo", "impala")


@dataclass
class LossConfig:
    """Loss family and its knobs; defaults follow the standard baseline values."""

    algorithm: str = "tvpo"
    delta: float = 0.2
    kl_coeff: float = 1.0
    spo_coeff: float = 1.0
    entropy_coeff: float = 0.0
    value_coeff: float = 0.5
    policy_coeff: float = 1.0
    epochs: int = 10
    minibatches: int = 32
    filter_condition: str = "alg1_literal"  # or "logprob_coefficient"
    ppo_form: str = "min"  # or "literal_clip"
    normalize_advantages: bool = False
    value_clip: bool = False
    max_grad_norm: float = 0.5

    def validate(self):
        assert self.algorithm in ALGORITHMS, f"unknown algorithm {self.algorithm!r}"
        assert 0.0 < self.delta <= 1.0
        assert self.kl_coeff >= 0.0 and self.spo_coeff >= 0.0 and self.entropy_coeff >= 0.0
        assert self.value_coeff > 0.0 and self.policy_coeff > 0.0
        assert self.epochs >= 1 and self.minibatches >= 1
        assert self.filter_condition in ("alg1_literal", "logprob_coefficient")
        assert self.ppo_form in ("min", "literal_clip")
        return self


@dataclass
class FilterMask:
    """Boolean keep-mask over a minibatch; all-true whenever inactive."""

    mask: np.ndarray
    active: bool


@dataclass
class IterationStats:
    iteration: int = 0
    env_steps: int = 0
    tv_per_epoch: list = field(default_factory=list)
    filter_active_per_epoch: list = field(default_factory=list)
    tv_full_batch_end: float = 0.0
    tv_final_minibatch: float = 0.0
    filter_active_fraction: float = 0.0
    masked_fraction: float = 0.0
    policy_loss: float = 0.0
    value_loss: float = 0.0
    entropy: float = 0.0
    grad_norm: float = 0.0
    ratio_dev_epoch0: float = 0.0
    eval_return: float | None = None
    wall_time: float = 0.0
    aborted_nonfinite: bool = False


def tv_estimate(ratios):
    """Sampled expected total variation: (1 / 2N) * sum |ratio_i - 1|."""
    ratios = np.asarray(ratios)
    if ratios.size == 0:
        raise EmptyBatch("tv_estimate needs at least one ratio")
    return float(np.abs(ratios - 1.0).mean()) / 2.0


def tv_filter_mask(ratios_current, advantages, logprobs_current, entropy_coeff, delta, filter_condition="alg1_literal"):
    """Decide which points may contribute gradient this minibatch.

    Inactive (all-true mask) while the sampled TV estimate stays at or below
    delta/2. Once above, a point is dropped when its gradient would push the
    TV estimate further up: coeff * sgn(ratio - 1) > 0, with coeff either
    (A - c_H) or (A - c_H * log pi) depending on filter_condition. Points at
    ratio exactly 1 are never dropped (sgn 0).
    """
    n = len(ratios_current)
    if tv_estimate(ratios_current) <= delta / 2.0:
        return FilterMask(np.ones(n, dtype=bool), active=False)
    if filter_condition == "alg1_literal":
        coeff = np.asarray(advantages) - entropy_coeff
    else:
        coeff = np.asarray(advantages) - entropy_coeff * np.asarray(logprobs_current)
    drop = coeff * np.sign(np.asarray(ratios_current) - 1.0) > 0.0
    return FilterMask(~drop, active=True)


# -- loss builders (tape nodes in, scalar node out) ----------------------------


def tvpo_policy_loss(logp_node, behavior_logprobs, advantages, keep_mask, entropy_coeff):
    """-(1/N) sum ratio * (A - c_H log pi); dropped points keep their value
    but are gradient-detached. N is always the full minibatch size."""
    ratio = tape.exp(logp_node - tape.wrap(behavior_logprobs))
    coeff = tape.wrap(advantages) - entropy_coeff * logp_node
    term = tape.where_keep(keep_mask, ratio * coeff)
    return -term.mean()


def ppo_clip_loss(logp_node, behavior_logprobs, advantages, delta, form="min"):
    """Clipped surrogate; `min` is the canonical pessimistic form, while
    `literal_clip` scores every point by the clipped ratio alone."""
    ratio = tape.exp(logp_node - tape.wrap(behavior_logprobs))
    adv = tape.wrap(advantages)
    clipped = tape.clip(ratio, 1.0 - delta, 1.0 + delta) * adv
    obj = tape.minimum(ratio * adv, clipped) if form == "min" else clipped
    return -obj.mean()


def kl_penalty_loss(logp_node, behavior_logprobs, advantages, delta, kl_coeff, form="min"):
    """Clipped surrogate plus kl_coeff times the unbiased KL(beta || pi)
    estimator mean(ratio - 1 - log ratio)."""
    log_ratio = logp_node - tape.wrap(behavior_logprobs)
    kl_est = (tape.exp(log_ratio) - 1.0 - log_ratio).mean()
    return ppo_clip_loss(logp_node, behavior_logprobs, advantages, delta, form) + kl_coeff * kl_est


def spo_loss(logp_node, behavior_logprobs, advantages, spo_coeff):
    """Unclipped importance-weighted loss with a squared-deviation penalty."""
    ratio = tape.exp(logp_node - tape.wrap(behavior_logprobs))
    penalty = ((ratio - 1.0) ** 2).mean()
    return -(ratio * tape.wrap(advantages)).mean() + spo_coeff * penalty


def impala_policy_loss(logp_node, rho, advantages):
    """Importance-weighted policy gradient with the rho weights detached."""
    return -(tape.wrap(np.asarray(rho) * np.asarray(advantages)) * logp_node).mean()


def value_loss(value_node, value_targets):
    """(1 / 2N) sum (V(s) - v)^2."""
    d = value_node - tape.wrap(value_targets)
    return 0.5 * (d * d).mean()


def value_loss_clipped(value_node, value_targets, old_values, delta):
    """Pessimistic max of the plain and the old-value-clipped squared error."""
    targets = tape.wrap(value_targets)
    old = tape.wrap(old_values)
    unclipped = (value_node - targets) ** 2
    clipped = (old + tape.clip(value_node - old, -delta, delta) - targets) ** 2
    return 0.5 * tape.maximum(unclipped, clipped).mean()


def _standardize(a):
    return (a - a.mean()) / (a.std() + 1e-8)


def _minibatch_loss(config, head, n_p_layers, n_v_layers, pnodes, vnodes, logp, obs, behavior_lp, adv, targets, old_values, ratio_plain, keep_mask):
    alg = config.algorithm
    if alg == "tvpo":
        loss_pi = tvpo_policy_loss(logp, behavior_lp, adv, keep_mask, config.entropy_coeff)
    elif alg == "ppo_clip":
        loss_pi = ppo_clip_loss(logp, behavior_lp, adv, config.delta, config.ppo_form)
    elif alg == "ppo_kl":
        loss_pi = kl_penalty_loss(logp, behavior_lp, adv, config.delta, config.kl_coeff, config.ppo_form)
    elif alg == "spo":
        loss_pi = spo_loss(logp, behavior_lp, adv, config.spo_coeff)
    else:  # impala
        rho = np.minimum(1.0, ratio_plain)
        loss_pi = impala_policy_loss(logp, rho, adv)
    v_node = value_t(vnodes, obs, n_v_layers)
    if config.value_clip:
        loss_v = value_loss_clipped(v_node, targets, old_values, config.delta)
    else:
        loss_v = value_loss(v_node, targets)
    loss = config.policy_coeff * loss_pi + config.value_coeff * loss_v
    if alg != "tvpo" and config.entropy_coeff > 0.0:
        loss = loss - config.entropy_coeff * policy_entropy_t(pnodes, head, n_p_layers, obs).mean()
    return loss, float(loss_pi.value), float(loss_v.value)


def train_epochs(batch, adv_est, policy_mlp, head, value_mlp, opt_state, config, rng, realign_fn=None):
    """Run the configured number of epochs over one batch.

    The advantage estimate is frozen for every algorithm except impala, which
    must pass `realign_fn` to recompute targets against the current parameters
    before each minibatch. On a non-finite loss or gradient the entry
    parameters are restored and NonFiniteLoss is raised with the partial stats
    attached as `exc.stats`.
    """
    config.validate()
    n = len(batch)
    if n == 0:
        raise EmptyBatch("empty rollout batch")
    t0 = time.perf_counter()

    p_arrays = param_list(policy_mlp, head)
    v_arrays = param_list(value_mlp)
    n_p = len(p_arrays)
    n_p_layers = len(policy_mlp.weights)
    n_v_layers = len(value_mlp.weights)
    entry_arrays = [a.copy() for a in p_arrays + v_arrays]
    entry_opt = opt_state
    frozen_digest = adv_est.digest()

    stats = IterationStats(iteration=batch.iteration_index)
    stats.ratio_dev_epoch0 = float(np.abs(adv_est.ratios - 1.0).mean())
    pol_losses, val_losses, grad_norms, entropies = [], [], [], []
    active_count, mb_count = 0, 0
    masked_fracs = []
    arrays = p_arrays + v_arrays

    def _current_logp(obs, actions):
        pnodes = [tape.Node(a) for a in arrays[:n_p]]
        return policy_logprob_t(pnodes, head, n_p_layers, obs, actions).value

    try:
        for epoch in range(config.epochs):
            order = rng.permutation(n)
            tv_epoch, active_epoch = [], []
            first_in_epoch = True
            for mb in np.array_split(order, config.minibatches):
                if mb.size == 0:
                    continue
                est = realign_fn(policy_mlp, head, value_mlp) if config.algorithm == "impala" else adv_est
                adv = est.advantages[mb]
                if config.normalize_advantages:
                    adv = _standardize(adv)
                targets = est.value_targets[mb]
                old_values = est.values[mb]
                obs, actions = batch.obs[mb], batch.actions[mb]
                behavior_lp = batch.behavior_logprob[mb]

                pnodes = [tape.Node(a) for a in arrays[:n_p]]
                vnodes = [tape.Node(a) for a in arrays[n_p:]]
                logp = policy_logprob_t(pnodes, head, n_p_layers, obs, actions)
                with np.errstate(over="ignore"):
                    ratio_plain = np.exp(logp.value - behavior_lp)
                tv = tv_estimate(ratio_plain)
                tv_epoch.append(tv)

                keep_mask = np.ones(mb.size, dtype=bool)
                if config.algorithm == "tvpo":
                    fm = tv_filter_mask(ratio_plain, adv, logp.value, config.entropy_coeff, config.delta, config.filter_condition)
                    keep_mask = fm.mask
                    active_epoch.append(fm.active)
                    if fm.active:
                        active_count += 1
                        masked_fracs.append(1.0 - keep_mask.mean())
                mb_count += 1

                loss, lpi, lv = _minibatch_loss(
                    config, head, n_p_layers, n_v_layers, pnodes, vnodes, logp,
                    obs, behavior_lp, adv, targets, old_values, ratio_plain, keep_mask,
                )
                if not np.isfinite(loss.value):
                    raise NonFiniteLoss(f"loss is {loss.value}")
                tape.backward(loss)
                grads = [node.grad for node in pnodes + vnodes]
                grad_norms.append(global_grad_norm(grads))
                grads = clip_grad_norm(grads, config.max_grad_norm)
                arrays, opt_state = adam_step(arrays, grads, opt_state)
                set_param_list(policy_mlp, head, arrays[:n_p])
                set_param_list(value_mlp, None, arrays[n_p:])
                pol_losses.append(lpi)
                val_losses.append(lv)
                if first_in_epoch:
                    entropies.append(float(policy_entropy(policy_mlp, head, obs).mean()))
                    first_in_epoch = False
            stats.tv_per_epoch.append(float(np.mean(tv_epoch)))
            stats.filter_active_per_epoch.append(float(np.mean(active_epoch)) if active_epoch else 0.0)
            stats.tv_final_minibatch = tv_epoch[-1]
    except NonFiniteLoss as exc:
        set_param_list(policy_mlp, head, entry_arrays[:n_p])
        set_param_list(value_mlp, None, entry_arrays[n_p:])
        stats.aborted_nonfinite = True
        stats.wall_time = time.perf_counter() - t0
        exc.stats = stats
        exc.entry_opt_state = entry_opt
        raise

    if config.algorithm != "impala":
        assert adv_est.digest() == frozen_digest, "advantage estimate mutated during epochs"

    with np.errstate(over="ignore"):
        full_ratio = np.exp(_current_logp(batch.obs, batch.actions) - batch.behavior_logprob)
    stats.tv_full_batch_end = tv_estimate(full_ratio)
    stats.filter_active_fraction = active_count / mb_count if mb_count else 0.0
    stats.masked_fraction = float(np.mean(masked_fracs)) if masked_fracs else 0.0
    stats.policy_loss = float(np.mean(pol_losses))
    stats.value_loss = float(np.mean(val_losses))
    stats.entropy = float(np.mean(entropies))
    stats.grad_norm = float(np.mean(grad_norms))
    stats.wall_time = time.perf_counter() - t0
    return policy_mlp, head, value_mlp, opt_state, stats


def impala_update(batch, policy_mlp, head, value_mlp, opt_state, config, rng, realign_fn):
    """Per-step re-realignment loop: targets recomputed before every gradient
    step (epochs * minibatches recomputations per iteration)."""
    assert config.algorithm == "impala"
    assert realign_fn is not None
    initial = realign_fn(policy_mlp, head, value_mlp)
    return train_epochs(batch, initial, policy_mlp, head, value_mlp, opt_state, config, rng, realign_fn=realign_fn)
