"""Dense tabular MDPs and tabular policies.

The dense representation (full transition tensor, reward matrix, initial
distribution) is what makes every theoretical quantity in `oracle` exactly
computable by linear algebra.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass
class TabularMDP:
    """(S, A, R, P, mu, gamma) with P[s, a, s'], R[s, a], mu[s]."""

    P: np.ndarray
    R: np.ndarray
    mu: np.ndarray
    gamma: float

    def __post_init__(self):
        self.P = np.asarray(self.P, dtype=np.float64)
        self.R = np.asarray(self.R, dtype=np.float64)
        self.mu = np.asarray(self.mu, dtype=np.float64)
        S, A = self.R.shape
        assert self.P.shape == (S, A, S)
        assert np.allclose(self.P.sum(axis=2), 1.0, atol=1e-12)
        assert abs(self.mu.sum() - 1.0) < 1e-12
        assert 0.0 <= self.gamma < 1.0

    @property
    def num_states(self):
        return self.R.shape[0]

    @property
    def num_actions(self):
        return self.R.shape[1]


@dataclass
class TabularPolicy:
    """pi[s, a] with rows summing to one."""

    probs: np.ndarray

    def __post_init__(self):
        self.probs = np.asarray(self.probs, dtype=np.float64)
        assert np.all(self.probs >= 0)
        assert np.allclose(self.probs.sum(axis=1), 1.0, atol=1e-12)

    @classmethod
    def uniform(cls, num_states, num_actions):
        return cls(np.full((num_states, num_actions), 1.0 / num_actions))

    @classmethod
    def greedy(cls, q):
        probs = np.zeros_like(q)
        probs[np.arange(q.shape[0]), q.argmax(axis=1)] = 1.0
        return cls(probs)


def random_mdp(rng, num_states, num_actions, gamma=0.99):
    """Generic-position instance: Dirichlet(1) rows, rewards uniform in [-1, 1]."""
    P = rng.dirichlet(np.ones(num_states), size=(num_states, num_actions))
    R = rng.uniform(-1.0, 1.0, size=(num_states, num_actions))
    mu = rng.dirichlet(np.ones(num_states))
    return TabularMDP(P, R, mu, gamma)


def random_policy(rng, num_states, num_actions):
    return TabularPolicy(rng.dirichlet(np.ones(num_actions), size=num_states))


def mix_policies(pi_a, pi_b, w):
    """Pointwise mixture (1-w)*pi_a + w*pi_b; a policy for any w in [0, 1]."""
    return TabularPolicy((1.0 - w) * pi_a.probs + w * pi_b.probs)


def load_mdp(path, gamma=0.99, mu=None):
    """Read a plain-text MDP: one `s a s' prob reward` row per transition.

    The reward column is r(s, a, s'); R[s, a] is its transition-weighted
    expectation, so duplicate (s, a) rows stay consistent. Lines starting with
    `#` and blank lines are ignored. `mu` defaults to a point mass on state 0.
    """
    rows = []
    with open(path) as f:
        for line in f:
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            s, a, sp, prob, reward = line.split()
            rows.append((int(s), int(a), int(sp), float(prob), float(reward)))
    S = max(max(r[0] for r in rows), max(r[2] for r in rows)) + 1
    A = max(r[1] for r in rows) + 1
    P = np.zeros((S, A, S))
    Rsas = np.zeros((S, A, S))
    for s, a, sp, prob, reward in rows:
        P[s, a, sp] += prob
        Rsas[s, a, sp] = reward
    R = (P * Rsas).sum(axis=2)
    if mu is None:
        mu = np.zeros(S)
        mu[0] = 1.0
    return TabularMDP(P, R, mu, gamma)


def save_mdp(path, mdp, rewards_sas=None):
    """Write the `s a s' prob reward` text format (zero-probability rows omitted)."""
    with open(path, "w") as f:
        for s in range(mdp.num_states):
            for a in range(mdp.num_actions):
                for sp in range(mdp.num_states):
                    if mdp.P[s, a, sp] > 0.0:
                        r = rewards_sas[s, a, sp] if rewards_sas is not None else mdp.R[s, a]
                        f.write(f"{s} {a} {sp} {float(mdp.P[s, a, sp])!r} {float(r)!r}\n")
