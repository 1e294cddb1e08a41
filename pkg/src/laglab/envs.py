"""Deterministic, seedable desk-scale environments with vectorized rollout.

Three families: a slippery chain and gridworld (discrete, one-hot
observations), a pendulum-like continuous task with dense reward, and a
generic environment over any dense TabularMDP. All randomness flows through
explicitly passed numpy Generators, one per actor, so rollouts are bit
reproducible and independent of scheduling.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, NonFiniteAction, OutOfBoundsAction
from .mdp import TabularMDP, load_mdp
from .nets import policy_sample_batch


@dataclass
class ActionSpace:
    kind: str  # "discrete" | "continuous"
    n: int = 0
    dim: int = 0
    low: np.ndarray | None = None
    high: np.ndarray | None = None

    @classmethod
    def discrete(cls, n):
        assert n >= 2
        return cls("discrete", n=n)

    @classmethod
    def continuous(cls, dim, low, high):
        low = np.broadcast_to(np.asarray(low, dtype=np.float64), (dim,)).copy()
        high = np.broadcast_to(np.asarray(high, dtype=np.float64), (dim,)).copy()
        assert dim >= 1 and np.all(low < high)
        return cls("continuous", dim=dim, low=low, high=high)


@dataclass
class EnvSpec:
    id: str
    observation_dim: int
    action_space: ActionSpace
    horizon: int
    gamma_default: float

    def __post_init__(self):
        assert self.observation_dim >= 1
        assert self.horizon >= 1
        assert 0.0 <= self.gamma_default < 1.0


class Env:
    """Stateful single environment. Subclasses fill spec and the two hooks."""

    spec: EnvSpec

    def __init__(self):
        self._t = 0
        self._live = False

    def reset(self, rng):
        self._t = 0
        self._live = True
        return self._reset(rng)

    def step(self, action, rng):
        if not self._live:
            raise ConfigError("step() on a terminated env; call reset() first")
        action = self._check_action(action)
        obs, reward, done = self._step(action, rng)
        self._t += 1
        truncated = (not done) and self._t >= self.spec.horizon
        if done or truncated:
            self._live = False
        return obs, reward, done, truncated

    def _check_action(self, action):
        space = self.spec.action_space
        if space.kind == "discrete":
            a = int(action)
            if a < 0 or a >= space.n:
                raise OutOfBoundsAction(f"action {a} outside [0, {space.n})")
            return a
        a = np.asarray(action, dtype=np.float64).reshape(space.dim)
        if not np.all(np.isfinite(a)):
            raise NonFiniteAction("continuous action contains NaN/inf")
        return a

    def _reset(self, rng):
        raise NotImplementedError

    def _step(self, action, rng):
        raise NotImplementedError


def _one_hot(i, n):
    v = np.zeros(n)
    v[i] = 1.0
    return v


class ChainEnv(Env):
    """Slippery chain: LEFT/RIGHT moves that reverse with probability `slip`.

    Start at state 0; reaching the rightmost state pays +1 and terminates;
    every step costs `step_penalty`. Optional potential-based `shaping` pays
    for net rightward progress.

    With `lock=1` the chain becomes a combination lock: `num_actions` actions,
    and each state has its own pseudorandom forward action (fixed per
    num_states); every other action moves back. This removes the
    state-independent shortcut, so the policy must be learned state by state
    and training time scales with the chain length.
    """

    def __init__(self, num_states=12, slip=0.1, step_penalty=0.01, horizon=64, shaping=0.0,
                 lock=0, num_actions=2):
        super().__init__()
        assert 2 <= num_states
        self.num_states = num_states
        self.slip = slip
        self.step_penalty = step_penalty
        self.shaping = shaping  # potential-based: shaping * (rightward progress)
        self.lock = bool(lock)
        n_act = int(num_actions) if self.lock else 2
        assert n_act >= 2
        if self.lock:
            codes = np.random.default_rng(num_states).integers(0, n_act, size=num_states)
            self._forward = codes
        self.spec = EnvSpec(
            id=f"lock{num_states}" if self.lock else f"chain{num_states}",
            observation_dim=num_states,
            action_space=ActionSpace.discrete(n_act),
            horizon=horizon,
            gamma_default=0.99,
        )
        self._s = 0

    def _reset(self, rng):
        self._s = 0
        return _one_hot(self._s, self.num_states)

    def _step(self, action, rng):
        if self.lock:
            move = 1 if action == self._forward[self._s] else -1
        else:
            move = 1 if action == 1 else -1
        if self.slip > 0.0 and rng.random() < self.slip:
            move = -move
        prev = self._s
        self._s = min(max(self._s + move, 0), self.num_states - 1)
        done = self._s == self.num_states - 1
        reward = (1.0 if done else 0.0) + self.shaping * (self._s - prev) - self.step_penalty
        return _one_hot(self._s, self.num_states), reward, done


class GridworldEnv(Env):
    """n x n grid with perpendicular slips; goal in the far corner.

    Moving into a wall leaves the state unchanged. With probability `slip` the
    move is replaced by one of the two perpendicular directions (coin flip).

    With `cliff=1` the layout becomes a cliff walk: start bottom-left, goal
    bottom-right, and the bottom-row cells in between drop the agent for
    `fall_penalty` and end the episode. The short route hugs the cliff edge
    and only pays off for precise policies; sloppier ones should take the long
    way around, so the per-state action ranking shifts as the policy sharpens.
    """

    MOVES = ((-1, 0), (1, 0), (0, -1), (0, 1))  # up, down, left, right

    def __init__(self, size=4, slip=0.1, step_penalty=0.01, horizon=64, cliff=0, fall_penalty=0.25, shaping=0.0):
        super().__init__()
        self.size = size
        self.slip = slip
        self.step_penalty = step_penalty
        self.shaping = shaping  # potential-based: shaping * (goal-distance decrease)
        self.cliff = bool(cliff)
        self.fall_penalty = fall_penalty
        # cliff mode starts one row above the drop so the first wrong move is
        # recoverable; the shortest route still hugs the cliff edge
        self._start = (size - 2, 0) if self.cliff else (0, 0)
        self._goal = size * size - 1
        self.spec = EnvSpec(
            id=f"cliff{size}" if self.cliff else f"grid{size}",
            observation_dim=size * size,
            action_space=ActionSpace.discrete(4),
            horizon=horizon,
            gamma_default=0.99,
        )
        self._pos = self._start

    def _is_cliff(self, idx):
        if not self.cliff:
            return False
        row, col = divmod(idx, self.size)
        return row == self.size - 1 and 0 < col < self.size - 1

    def _reset(self, rng):
        self._pos = self._start
        return _one_hot(self._pos[0] * self.size + self._pos[1], self.size * self.size)

    def _dist_to_goal(self, pos):
        gr, gc = divmod(self._goal, self.size)
        return abs(pos[0] - gr) + abs(pos[1] - gc)

    def _step(self, action, rng):
        a = action
        if self.slip > 0.0 and rng.random() < self.slip:
            perp = (2, 3) if a in (0, 1) else (0, 1)
            a = perp[int(rng.random() < 0.5)]
        dr, dc = self.MOVES[a]
        hi = self.size - 1
        prev = self._pos
        self._pos = (min(max(prev[0] + dr, 0), hi), min(max(prev[1] + dc, 0), hi))
        idx = self._pos[0] * self.size + self._pos[1]
        shaped = self.shaping * (self._dist_to_goal(prev) - self._dist_to_goal(self._pos))
        if self._is_cliff(idx):
            return _one_hot(idx, self.size * self.size), shaped - self.fall_penalty - self.step_penalty, True
        done = idx == self._goal
        reward = (1.0 if done else 0.0) + shaped - self.step_penalty
        return _one_hot(idx, self.size * self.size), reward, done


class PendulumEnv(Env):
    """Torque-limited swing-up with dense quadratic cost; never terminates early.

    Observation is (angle, angular velocity) with the angle wrapped to
    [-pi, pi]; zero angle is upright. Deterministic dynamics; only the initial
    state is random.
    """

    def __init__(self, horizon=128, max_torque=2.0, dt=0.05):
        super().__init__()
        self.max_torque = max_torque
        self.dt = dt
        self.spec = EnvSpec(
            id="pendulum",
            observation_dim=2,
            action_space=ActionSpace.continuous(1, -max_torque, max_torque),
            horizon=horizon,
            gamma_default=0.99,
        )
        self._theta = 0.0
        self._omega = 0.0

    def _obs(self):
        return np.array([self._theta, self._omega])

    def _reset(self, rng):
        self._theta = rng.uniform(-np.pi, np.pi)
        self._omega = rng.uniform(-1.0, 1.0)
        return self._obs()

    def _step(self, action, rng):
        u = float(np.clip(action[0], -self.max_torque, self.max_torque))
        g, m, length = 10.0, 1.0, 1.0
        cost = self._theta**2 + 0.1 * self._omega**2 + 0.001 * u**2
        acc = 3.0 * g / (2.0 * length) * np.sin(self._theta) + 3.0 / (m * length**2) * u
        self._omega = float(np.clip(self._omega + acc * self.dt, -8.0, 8.0))
        self._theta = float(
            np.mod(self._theta + self._omega * self.dt + np.pi, 2.0 * np.pi) - np.pi
        )
        return self._obs(), -cost * self.dt, False


class TabularEnv(Env):
    """Sampling view of a dense TabularMDP with one-hot observations."""

    def __init__(self, mdp: TabularMDP, horizon=200, env_id="tabular"):
        super().__init__()
        self.mdp = mdp
        self.spec = EnvSpec(
            id=env_id,
            observation_dim=mdp.num_states,
            action_space=ActionSpace.discrete(mdp.num_actions),
            horizon=horizon,
            gamma_default=mdp.gamma,
        )
        self._s = 0
        self._mu_cdf = np.cumsum(mdp.mu)
        self._p_cdf = np.cumsum(mdp.P, axis=2)

    def _draw(self, cdf, rng):
        return min(int(np.searchsorted(cdf, rng.random(), side="right")), len(cdf) - 1)

    def _reset(self, rng):
        self._s = self._draw(self._mu_cdf, rng)
        return _one_hot(self._s, self.mdp.num_states)

    def _step(self, action, rng):
        reward = float(self.mdp.R[self._s, action])
        self._s = self._draw(self._p_cdf[self._s, action], rng)
        return _one_hot(self._s, self.mdp.num_states), reward, False


def make_env(env_id):
    """Environment registry keyed by string id; `tabular:PATH` loads a file.

    The built-in families accept keyword overrides after a colon, e.g.
    `chain:num_states=15,horizon=40,slip=0.15`.
    """
    if env_id.startswith("tabular:"):
        return TabularEnv(load_mdp(env_id.split(":", 1)[1]))
    name, _, spec = env_id.partition(":")
    builders = {"chain": ChainEnv, "gridworld": GridworldEnv, "pendulum": PendulumEnv}
    if name not in builders:
        raise ConfigError(f"unknown env id {env_id!r}")
    kwargs = {}
    if spec:
        try:
            for item in spec.split(","):
                key, _, raw = item.partition("=")
                kwargs[key.strip()] = float(raw) if "." in raw else int(raw)
        except ValueError as exc:
            raise ConfigError(f"bad env parameters in {env_id!r}: {exc}") from exc
    try:
        return builders[name](**kwargs)
    except TypeError as exc:
        raise ConfigError(f"bad env parameters in {env_id!r}: {exc}") from exc


@dataclass
class RolloutBatch:
    """Flat actor-major transition store for one iteration's data.

    Arrays all have length num_actors * num_steps; actor a's block is
    [a * num_steps, (a + 1) * num_steps). Episode segments inside a block end
    where done or truncated is set (or at the block boundary).
    """

    obs: np.ndarray
    actions: np.ndarray
    rewards: np.ndarray
    next_obs: np.ndarray
    dones: np.ndarray
    truncateds: np.ndarray
    behavior_logprob: np.ndarray
    behavior_policy_id: np.ndarray
    num_actors: int
    num_steps: int
    iteration_index: int = 0

    def __len__(self):
        return self.rewards.shape[0]


def rollout_sync(envs, snapshots, num_steps, rngs, iteration_index=0):
    """Run every actor for exactly num_steps using its assigned snapshot.

    One env, one snapshot, and one rng stream per actor; all envs reset at the
    start so each episode is generated by a single behavior policy. Forward
    passes are batched per snapshot group; each actor's rng sees exactly one
    sampling draw plus its own env draws per step, so results do not depend on
    the grouping.
    """
    if not (len(envs) == len(snapshots) == len(rngs)):
        raise ConfigError("envs, snapshots and rng streams must align one per actor")
    n_actors = len(envs)
    spec = envs[0].spec
    for env in envs:
        if env.spec.id != spec.id:
            raise ConfigError("all actors must run the same EnvSpec")

    discrete = spec.action_space.kind == "discrete"
    act_dim = spec.action_space.n if discrete else spec.action_space.dim
    n = n_actors * num_steps
    batch = RolloutBatch(
        obs=np.zeros((n, spec.observation_dim)),
        actions=np.zeros(n, dtype=np.intp) if discrete else np.zeros((n, act_dim)),
        rewards=np.zeros(n),
        next_obs=np.zeros((n, spec.observation_dim)),
        dones=np.zeros(n, dtype=bool),
        truncateds=np.zeros(n, dtype=bool),
        behavior_logprob=np.zeros(n),
        behavior_policy_id=np.zeros(n, dtype=np.int64),
        num_actors=n_actors,
        num_steps=num_steps,
        iteration_index=iteration_index,
    )

    groups = {}
    for i, snap in enumerate(snapshots):
        groups.setdefault(snap.id, (snap, []))[1].append(i)

    obs = np.stack([envs[i].reset(rngs[i]) for i in range(n_actors)])
    for t in range(num_steps):
        actions = np.zeros((n_actors, act_dim)) if not discrete else np.zeros(n_actors, dtype=np.intp)
        logps = np.zeros(n_actors)
        for snap, idxs in groups.values():
            acts, lps = policy_sample_batch(
                snap.policy_mlp, snap.head, obs[idxs], [rngs[i] for i in idxs]
            )
            actions[idxs] = acts
            logps[idxs] = lps
        for i in range(n_actors):
            row = i * num_steps + t
            next_obs, reward, done, truncated = envs[i].step(actions[i], rngs[i])
            batch.obs[row] = obs[i]
            batch.actions[row] = actions[i]
            batch.rewards[row] = reward
            batch.next_obs[row] = next_obs
            batch.dones[row] = done
            batch.truncateds[row] = truncated
            batch.behavior_logprob[row] = logps[i]
            batch.behavior_policy_id[row] = snapshots[i].id
            obs[i] = envs[i].reset(rngs[i]) if (done or truncated) else next_obs
    return batch
