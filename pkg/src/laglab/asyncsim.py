"""Simulated asynchronous training harness.

One coordinator owns the parameters, the optimizer and a fixed-capacity FIFO
of frozen policy snapshots. Each iteration: snapshot and store the current
policy, draw one snapshot per actor uniformly from the buffer, roll out
synchronously, realign advantages once against the current learner, then run
the epoch loop. Buffer capacity 1 (or `bufferless`) degenerates to ordinary
synchronous training.

All randomness is keyed by (seed, purpose, iteration, actor) through
SeedSequence spawn keys, so runs are bit reproducible and the bufferless and
capacity-1 paths consume identical streams.
"""

from __future__ import annotations

import copy
import hashlib
import json
import time
from dataclasses import dataclass, field

import numpy as np

from .advantage import gae, ratios_from_logprobs, vtrace_realign
from .envs import make_env, rollout_sync
from .errors import EmptyBuffer, NonFiniteLoss
from .nets import (
    init_policy,
    init_value,
    param_list,
    policy_logprob,
    policy_mode,
    value,
)
from .optim import OptimizerState
from .policyopt import train_epochs

_ASSIGN, _ROLLOUT, _SHUFFLE, _EVAL, _INIT = range(5)


def _rng(seed, *key):
    return np.random.default_rng(np.random.SeedSequence(entropy=seed, spawn_key=key))


@dataclass
class PolicySnapshot:
    """Frozen copy of policy (and value) parameters; immutable after creation."""

    policy_mlp: object
    head: object
    value_mlp: object
    iteration_of_origin: int
    id: int


class PolicyBuffer:
    """Fixed-capacity FIFO of snapshots, newest last, oldest evicted first."""

    def __init__(self, capacity):
        assert capacity >= 1
        self.capacity = capacity
        self.snapshots = []

    def __len__(self):
        return len(self.snapshots)

    def push(self, snapshot):
        self.snapshots.append(snapshot)
        if len(self.snapshots) > self.capacity:
            self.snapshots.pop(0)
        return self

    def ids(self):
        return [s.id for s in self.snapshots]


def push_snapshot(buffer, snapshot):
    return buffer.push(snapshot)


def assign_actors(buffer, num_actors, rng):
    """Uniform independent draws from the current buffer contents.

    Returns the actor -> snapshot-id mapping; look snapshots up by position in
    the buffer at assignment time.
    """
    if len(buffer) == 0:
        raise EmptyBuffer("cannot assign actors from an empty buffer")
    positions = rng.integers(0, len(buffer), size=num_actors)
    return {actor: buffer.snapshots[p].id for actor, p in enumerate(positions)}, positions


@dataclass
class HarnessState:
    envs: list
    eval_env: object
    buffer: PolicyBuffer | None
    policy_mlp: object
    head: object
    value_mlp: object
    opt_state: OptimizerState
    config: object
    seed: int
    gamma: float
    normalize_advantages: bool
    iteration: int = 0
    env_steps: int = 0
    events: list = field(default_factory=list)


def init_harness(config, seed):
    """Build envs, networks and optimizer for one run."""
    config.validate()
    envs = [make_env(config.env) for _ in range(config.num_actors)]
    eval_env = make_env(config.env)
    spec = envs[0].spec
    act_n = spec.action_space.n if spec.action_space.kind == "discrete" else spec.action_space.dim
    head_kind = "categorical" if spec.action_space.kind == "discrete" else "diag_gaussian"
    rng_init = _rng(seed, _INIT)
    policy_mlp, head = init_policy(rng_init, spec.observation_dim, head_kind, act_n, tuple(config.hidden_sizes))
    value_mlp = init_value(rng_init, spec.observation_dim, tuple(config.hidden_sizes))
    params = param_list(policy_mlp, head) + param_list(value_mlp)
    opt_state = OptimizerState.for_params(
        params,
        learning_rate=config.learning_rate,
        anneal=config.anneal_lr,
        total_steps=config.iterations,
    )
    gamma = config.gamma if config.gamma is not None else spec.gamma_default
    normalize = config.normalize_advantages
    if normalize is None:
        normalize = True
    buffer = None if config.bufferless else PolicyBuffer(config.buffer_capacity)
    return HarnessState(
        envs=envs,
        eval_env=eval_env,
        buffer=buffer,
        policy_mlp=policy_mlp,
        head=head,
        value_mlp=value_mlp,
        opt_state=opt_state,
        config=config,
        seed=seed,
        gamma=gamma,
        normalize_advantages=normalize,
    )


def _snapshot(state):
    return PolicySnapshot(
        policy_mlp=copy.deepcopy(state.policy_mlp),
        head=copy.deepcopy(state.head),
        value_mlp=copy.deepcopy(state.value_mlp),
        iteration_of_origin=state.iteration,
        id=state.iteration,
    )


def _snapshot_values(snapshots_by_id, batch):
    """Per-transition V(s), V(s') under each transition's own behavior critic."""
    vals = np.zeros(len(batch))
    vals_next = np.zeros(len(batch))
    for sid in np.unique(batch.behavior_policy_id):
        snap = snapshots_by_id[int(sid)]
        rows = np.nonzero(batch.behavior_policy_id == sid)[0]
        vals[rows] = value(snap.value_mlp, batch.obs[rows])
        vals_next[rows] = value(snap.value_mlp, batch.next_obs[rows])
    return vals, vals_next


def run_iteration(state):
    """One full iteration: snapshot, assign, collect, realign once, train."""
    config = state.config
    it = state.iteration
    snap = _snapshot(state)
    if state.buffer is not None:
        state.buffer.push(snap)
        assign_rng = _rng(state.seed, _ASSIGN, it)
        _, positions = assign_actors(state.buffer, config.num_actors, assign_rng)
        snapshots = [state.buffer.snapshots[p] for p in positions]
    else:
        snapshots = [snap] * config.num_actors

    rollout_rngs = [_rng(state.seed, _ROLLOUT, it, i) for i in range(config.num_actors)]
    batch = rollout_sync(state.envs, snapshots, config.num_steps, rollout_rngs, iteration_index=it)

    learner_lp = policy_logprob(state.policy_mlp, state.head, batch.obs, batch.actions)
    lag_ratios = ratios_from_logprobs(learner_lp, batch.behavior_logprob)

    if config.realign_critic == "frozen":
        by_id = {s.id: s for s in snapshots}
        vals, vals_next = _snapshot_values(by_id, batch)
    else:
        vals = value(state.value_mlp, batch.obs)
        vals_next = value(state.value_mlp, batch.next_obs)

    if config.algorithm in ("tvpo", "impala"):
        adv_est = vtrace_realign(
            batch.rewards, vals, vals_next, batch.dones, batch.truncateds,
            config.num_actors, learner_lp, batch.behavior_logprob,
            config.rho_bar, config.c_bar, state.gamma, config.vtrace_lambda,
        )
    else:
        adv_est = gae(
            batch.rewards, vals, vals_next, batch.dones, batch.truncateds,
            config.num_actors, state.gamma, config.gae_lambda,
        )

    realign_fn = None
    if config.algorithm == "impala":
        def realign_fn(policy_mlp, head, value_mlp):
            lp = policy_logprob(policy_mlp, head, batch.obs, batch.actions)
            v = value(value_mlp, batch.obs)
            v_next = value(value_mlp, batch.next_obs)
            return vtrace_realign(
                batch.rewards, v, v_next, batch.dones, batch.truncateds,
                config.num_actors, lp, batch.behavior_logprob,
                config.rho_bar, config.c_bar, state.gamma, config.vtrace_lambda,
            )

    shuffle_rng = _rng(state.seed, _SHUFFLE, it)
    state.opt_state.anneal_step = it
    try:
        _, _, _, state.opt_state, stats = train_epochs(
            batch, adv_est, state.policy_mlp, state.head, state.value_mlp,
            state.opt_state, config.loss_config(normalize=state.normalize_advantages),
            shuffle_rng, realign_fn=realign_fn,
        )
    except NonFiniteLoss as exc:
        stats = exc.stats
        state.opt_state = exc.entry_opt_state
        state.events.append({"iteration": it, "event": "non_finite_loss", "detail": str(exc)})

    stats.iteration = it
    stats.ratio_dev_epoch0 = float(np.abs(lag_ratios - 1.0).mean())
    state.env_steps += len(batch)
    stats.env_steps = state.env_steps
    state.iteration += 1
    return stats


def evaluate_policy(policy_mlp, head, env, episodes, rng, gamma=None):
    """Deterministic-action rollouts; mean undiscounted return by default.

    Pass gamma to get the discounted analogue (used by oracle cross-checks).
    """
    assert episodes >= 1
    total = 0.0
    for _ in range(episodes):
        obs = env.reset(rng)
        ep_return, discount, done, truncated = 0.0, 1.0, False, False
        while not (done or truncated):
            action = policy_mode(policy_mlp, head, obs[None, :])[0]
            obs, reward, done, truncated = env.step(action, rng)
            ep_return += discount * reward
            if gamma is not None:
                discount *= gamma
        total += ep_return
    return float(total) / episodes


@dataclass
class RunRecord:
    """Everything one run produced: config, per-iteration stats, eval curve."""

    config: dict
    seed: int
    stats: list
    eval_curve: list  # (iteration, env_steps, mean_return) rows
    content_hash: str = ""
    events: list = field(default_factory=list)


def _stats_payload(stats_dict):
    d = dict(stats_dict)
    d.pop("wall_time", None)  # volatile; excluded from the content hash
    return d


def run_record_hash(stats_dicts, eval_curve):
    h = hashlib.sha256()
    for s in stats_dicts:
        h.update(json.dumps(_stats_payload(s), sort_keys=True).encode())
    h.update(json.dumps(eval_curve, sort_keys=True).encode())
    return h.hexdigest()


def _stats_to_dict(stats):
    return {
        "iteration": stats.iteration,
        "env_steps": stats.env_steps,
        "tv_per_epoch": stats.tv_per_epoch,
        "filter_active_per_epoch": stats.filter_active_per_epoch,
        "tv_full_batch_end": stats.tv_full_batch_end,
        "tv_final_minibatch": stats.tv_final_minibatch,
        "filter_active_fraction": stats.filter_active_fraction,
        "masked_fraction": stats.masked_fraction,
        "policy_loss": stats.policy_loss,
        "value_loss": stats.value_loss,
        "entropy": stats.entropy,
        "grad_norm": stats.grad_norm,
        "ratio_dev_epoch0": stats.ratio_dev_epoch0,
        "eval_return": stats.eval_return,
        "aborted_nonfinite": stats.aborted_nonfinite,
        "wall_time": stats.wall_time,
    }


def run_experiment(config, seed, out_dir=None, progress=None):
    """Loop run_iteration for the configured horizon, evaluating on a cadence.

    When out_dir is given, run_<seed>.jsonl and eval_<seed>.csv are flushed
    per iteration and a manifest.json is written at the end.
    """
    state = init_harness(config, seed)
    records, eval_curve = [], []
    jsonl = None
    if out_dir is not None:
        out_dir.mkdir(parents=True, exist_ok=True)
        jsonl = open(out_dir / f"run_{seed}.jsonl", "w")
    try:
        for it in range(config.iterations):
            stats = run_iteration(state)
            if (it + 1) % config.eval_every == 0 or it == config.iterations - 1:
                eval_rng = _rng(seed, _EVAL, it)
                mean_return = evaluate_policy(
                    state.policy_mlp, state.head, state.eval_env, config.eval_episodes, eval_rng
                )
                stats.eval_return = mean_return
                eval_curve.append([it, state.env_steps, mean_return])
            row = _stats_to_dict(stats)
            records.append(row)
            if jsonl is not None:
                jsonl.write(json.dumps(row, sort_keys=True) + "\n")
                jsonl.flush()
            if progress is not None:
                progress(it, row)
    finally:
        if jsonl is not None:
            jsonl.close()

    record = RunRecord(
        config=config.to_dict(),
        seed=seed,
        stats=records,
        eval_curve=eval_curve,
        content_hash=run_record_hash(records, eval_curve),
        events=list(state.events),
    )
    if out_dir is not None:
        with open(out_dir / f"eval_{seed}.csv", "w") as f:
            f.write("iteration,env_steps,mean_return\n")
            for it, steps, ret in eval_curve:
                f.write(f"{it},{steps},{float(ret)!r}\n")
        _write_manifest(out_dir, config, {seed: record.content_hash})
    return record


def _write_manifest(out_dir, config, seed_hashes):
    path = out_dir / "manifest.json"
    manifest = {"config": config.to_dict(), "seed_hashes": {}, "hash_excludes": ["wall_time"]}
    if path.exists():
        with open(path) as f:
            existing = json.load(f)
        if existing.get("config") == manifest["config"]:
            manifest["seed_hashes"] = existing.get("seed_hashes", {})
    manifest["seed_hashes"].update({str(k): v for k, v in seed_hashes.items()})
    with open(path, "w") as f:
        json.dump(manifest, f, indent=2, sort_keys=True)
    return manifest
