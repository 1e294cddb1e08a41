"""MLP policy and value heads over the autodiff tape.

Parameterization follows the common continuous-control baseline: two tanh
hidden layers, orthogonal init with a small gain on the policy output layer,
and a state-independent learned log-std for gaussian heads.

Every function has a plain-numpy fast path (used by rollouts) and a tape path
(used to build losses); the two share the same formulas and agree to float64
round-off.
"""

from __future__ import annotations

import io
import json
from dataclasses import dataclass, field

import numpy as np

from . import tape
from .errors import NonFiniteAction, NonFiniteOutput, OutOfBoundsAction

LOG_2PI = float(np.log(2.0 * np.pi))


@dataclass
class PolicyHead:
    """Output head description: `categorical(n)` or `diag_gaussian(dim)`.

    For gaussian heads log_std is a learned, state-independent vector and is
    part of the trainable parameter set.
    """

    kind: str  # "categorical" | "diag_gaussian"
    n: int
    log_std: np.ndarray | None = None

    def __post_init__(self):
        if self.kind not in ("categorical", "diag_gaussian"):
            raise ValueError(f"unknown head kind {self.kind!r}")
        if self.kind == "diag_gaussian" and self.log_std is None:
            self.log_std = np.zeros(self.n)


@dataclass
class MlpParams:
    """Dense layers stored as parallel weight/bias lists; tanh hidden units."""

    weights: list = field(default_factory=list)
    biases: list = field(default_factory=list)

    @property
    def layer_sizes(self):
        return [self.weights[0].shape[0]] + [w.shape[1] for w in self.weights]

    def copy(self):
        return MlpParams([w.copy() for w in self.weights], [b.copy() for b in self.biases])


def _orthogonal(rng, rows, cols, gain):
    a = rng.standard_normal((rows, cols))
    q, r = np.linalg.qr(a if rows >= cols else a.T)
    q = q * np.sign(np.diag(r))
    if rows < cols:
        q = q.T
    return gain * q[:rows, :cols]


def init_mlp(rng, sizes, out_gain=1.0):
    """Orthogonal-init MLP; hidden gain sqrt(2), output gain `out_gain`."""
    params = MlpParams()
    for i, (nin, nout) in enumerate(zip(sizes[:-1], sizes[1:])):
        gain = out_gain if i == len(sizes) - 2 else np.sqrt(2.0)
        params.weights.append(_orthogonal(rng, nin, nout, gain))
        params.biases.append(np.zeros(nout))
    return params


def init_policy(rng, obs_dim, head_kind, act_n, hidden=(64, 64)):
    """Build (MlpParams, PolicyHead) for the given observation/action spec."""
    mlp = init_mlp(rng, [obs_dim, *hidden, act_n], out_gain=0.01)
    head = PolicyHead(head_kind, act_n)
    return mlp, head


def init_value(rng, obs_dim, hidden=(64, 64)):
    return init_mlp(rng, [obs_dim, *hidden, 1], out_gain=1.0)


# -- plain-numpy forward (rollout fast path) ---------------------------------


def mlp_forward(params, states):
    h = np.atleast_2d(np.asarray(states, dtype=np.float64))
    last = len(params.weights) - 1
    for i, (w, b) in enumerate(zip(params.weights, params.biases)):
        h = h @ w + b
        if i < last:
            h = np.tanh(h)
    return h


def value(params, states):
    """V(s) for one state or a batch; scalar for 1-D input."""
    states = np.asarray(states, dtype=np.float64)
    out = mlp_forward(params, states)[:, 0]
    if not np.all(np.isfinite(out)):
        raise NonFiniteOutput("value network produced NaN/inf")
    return float(out[0]) if states.ndim == 1 else out


def _log_softmax(logits):
    m = logits.max(axis=1, keepdims=True)
    z = logits - m
    return z - np.log(np.exp(z).sum(axis=1, keepdims=True))


def policy_logprob(params, head, states, actions):
    """log pi(a|s) for one (s, a) pair or congruent batches."""
    states = np.asarray(states, dtype=np.float64)
    single = states.ndim == 1
    out = mlp_forward(params, states)
    if not np.all(np.isfinite(out)):
        raise NonFiniteOutput("policy network produced NaN/inf")
    if head.kind == "categorical":
        idx = np.atleast_1d(np.asarray(actions, dtype=np.intp))
        if np.any(idx < 0) or np.any(idx >= head.n):
            raise OutOfBoundsAction(f"action index outside [0, {head.n})")
        lp = _log_softmax(out)[np.arange(out.shape[0]), idx]
    else:
        a = np.atleast_2d(np.asarray(actions, dtype=np.float64))
        if not np.all(np.isfinite(a)):
            raise NonFiniteAction("continuous action contains NaN/inf")
        z = (a - out) * np.exp(-head.log_std)
        lp = -0.5 * (z * z).sum(axis=1) - head.log_std.sum() - 0.5 * head.n * LOG_2PI
    return float(lp[0]) if single else lp


def policy_sample(params, head, state, rng):
    """Draw an action and its log-probability; consistent with policy_logprob."""
    actions, lps = policy_sample_batch(params, head, np.asarray(state)[None, :], [rng])
    return actions[0], float(lps[0])


def policy_sample_batch(params, head, states, rngs):
    """Sample one action per row of `states`, row i using rngs[i].

    The per-row streams keep actor rollouts independent of batching while the
    network forward stays vectorized.
    """
    out = mlp_forward(params, states)
    if not np.all(np.isfinite(out)):
        raise NonFiniteOutput("policy network produced NaN/inf")
    n = out.shape[0]
    if head.kind == "categorical":
        logp_all = _log_softmax(out)
        cdf = np.cumsum(np.exp(logp_all), axis=1)
        actions = np.empty(n, dtype=np.intp)
        for i in range(n):
            u = rngs[i].random()
            actions[i] = min(int(np.searchsorted(cdf[i], u, side="right")), head.n - 1)
        lps = logp_all[np.arange(n), actions]
    else:
        std = np.exp(head.log_std)
        noise = np.stack([rngs[i].standard_normal(head.n) for i in range(n)])
        actions = out + std * noise
        z = noise
        lps = -0.5 * (z * z).sum(axis=1) - head.log_std.sum() - 0.5 * head.n * LOG_2PI
    return actions, lps


def policy_mode(params, head, states):
    """Deterministic action: argmax for categorical, mean for gaussian."""
    out = mlp_forward(params, states)
    if head.kind == "categorical":
        return out.argmax(axis=1)
    return out


def policy_entropy(params, head, states):
    """Exact per-state entropy of the policy distribution."""
    if head.kind == "categorical":
        logp = _log_softmax(mlp_forward(params, states))
        return -(np.exp(logp) * logp).sum(axis=1)
    h = head.log_std.sum() + 0.5 * head.n * (1.0 + LOG_2PI)
    return np.full(np.atleast_2d(states).shape[0], h)


# -- tape forward (training path) ---------------------------------------------


def param_nodes(mlp, head=None):
    """Wrap parameters as tape nodes; order matches param_list()."""
    nodes = [tape.Node(a) for a in param_list(mlp, head)]
    return nodes


def param_list(mlp, head=None):
    """Flat list of the trainable arrays: W0, b0, W1, b1, ..., [log_std]."""
    arrays = []
    for w, b in zip(mlp.weights, mlp.biases):
        arrays.extend([w, b])
    if head is not None and head.kind == "diag_gaussian":
        arrays.append(head.log_std)
    return arrays


def set_param_list(mlp, head, arrays):
    """Inverse of param_list: write arrays back into (mlp, head)."""
    k = 0
    for i in range(len(mlp.weights)):
        mlp.weights[i] = arrays[k]
        mlp.biases[i] = arrays[k + 1]
        k += 2
    if head is not None and head.kind == "diag_gaussian":
        head.log_std = arrays[k]


def mlp_forward_t(nodes, states, n_layers):
    h = tape.wrap(np.atleast_2d(np.asarray(states, dtype=np.float64)))
    for i in range(n_layers):
        h = h @ nodes[2 * i] + nodes[2 * i + 1]
        if i < n_layers - 1:
            h = tape.tanh(h)
    return h


def policy_logprob_t(nodes, head, n_layers, states, actions):
    """Tape version of policy_logprob over a batch; returns an (N,) node."""
    out = mlp_forward_t(nodes, states, n_layers)
    if head.kind == "categorical":
        logp_all = out - tape.logsumexp(out, axis=1)
        return tape.gather(logp_all, actions)
    log_std = nodes[2 * n_layers]
    a = np.atleast_2d(np.asarray(actions, dtype=np.float64))
    z = (tape.wrap(a) - out) * tape.exp(-log_std)
    return (
        (z * z).sum(axis=1) * -0.5
        - log_std.sum()
        - 0.5 * head.n * LOG_2PI
    )


def policy_entropy_t(nodes, head, n_layers, states):
    """Tape version of policy_entropy; returns an (N,) node."""
    if head.kind == "categorical":
        out = mlp_forward_t(nodes, states, n_layers)
        logp_all = out - tape.logsumexp(out, axis=1)
        return -(tape.exp(logp_all) * logp_all).sum(axis=1)
    log_std = nodes[2 * n_layers]
    n = np.atleast_2d(states).shape[0]
    h = log_std.sum() + 0.5 * head.n * (1.0 + LOG_2PI)
    return h * tape.wrap(np.ones(n))


def value_t(nodes, states, n_layers):
    """Tape version of value over a batch; returns an (N,) node."""
    out = mlp_forward_t(nodes, states, n_layers)
    return tape.gather(out, np.zeros(np.atleast_2d(states).shape[0], dtype=np.intp))


# -- snapshot serialization ----------------------------------------------------


def save_params(path, policy_mlp, head, value_mlp):
    """Flat binary snapshot: one JSON header line, then row-major float64 blocks."""
    header = {
        "policy_sizes": policy_mlp.layer_sizes,
        "value_sizes": value_mlp.layer_sizes,
        "head_kind": head.kind,
        "head_n": head.n,
    }
    with open(path, "wb") as f:
        f.write((json.dumps(header, sort_keys=True) + "\n").encode())
        for a in param_list(policy_mlp, head) + param_list(value_mlp):
            f.write(np.ascontiguousarray(a, dtype=np.float64).tobytes())


def load_params(path):
    """Inverse of save_params; returns (policy_mlp, head, value_mlp)."""
    with open(path, "rb") as f:
        header = json.loads(f.readline().decode())
        raw = f.read()
    buf = io.BytesIO(raw)

    def read_mlp(sizes):
        mlp = MlpParams()
        for nin, nout in zip(sizes[:-1], sizes[1:]):
            w = np.frombuffer(buf.read(8 * nin * nout)).reshape(nin, nout).copy()
            b = np.frombuffer(buf.read(8 * nout)).copy()
            mlp.weights.append(w)
            mlp.biases.append(b)
        return mlp

    policy_mlp = read_mlp(header["policy_sizes"])
    head = PolicyHead(header["head_kind"], header["head_n"])
    if head.kind == "diag_gaussian":
        head.log_std = np.frombuffer(buf.read(8 * head.n)).copy()
    value_mlp = read_mlp(header["value_sizes"])
    return policy_mlp, head, value_mlp
