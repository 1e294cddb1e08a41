"""Adaptive-moment optimizer and global gradient-norm clipping."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


@dataclass
class OptimizerState:
    """Per-parameter first/second moments plus the schedule bookkeeping.

    When anneal is on, the effective learning rate decays linearly to zero over
    `total_steps` outer iterations (evaluated from `anneal_step`, which the
    training loop advances once per iteration, not per minibatch).
    """

    learning_rate: float = 3e-4
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    anneal: bool = False
    total_steps: int = 1
    anneal_step: int = 0
    step: int = 0
    m: list = field(default_factory=list)
    v: list = field(default_factory=list)

    @classmethod
    def for_params(cls, params, learning_rate=3e-4, anneal=False, total_steps=1):
        st = cls(learning_rate=learning_rate, anneal=anneal, total_steps=total_steps)
        st.m = [np.zeros_like(p) for p in params]
        st.v = [np.zeros_like(p) for p in params]
        return st

    def effective_lr(self):
        if not self.anneal:
            return self.learning_rate
        frac = 1.0 - self.anneal_step / self.total_steps
        return self.learning_rate * max(frac, 0.0)


def adam_step(params, grads, state):
    """One Adam update; returns (new_params, new_state) without mutating inputs."""
    lr = state.effective_lr()
    t = state.step + 1
    new_params, new_m, new_v = [], [], []
    for p, g, m, v in zip(params, grads, state.m, state.v):
        m = state.beta1 * m + (1.0 - state.beta1) * g
        v = state.beta2 * v + (1.0 - state.beta2) * g * g
        m_hat = m / (1.0 - state.beta1**t)
        v_hat = v / (1.0 - state.beta2**t)
        new_params.append(p - lr * m_hat / (np.sqrt(v_hat) + state.eps))
        new_m.append(m)
        new_v.append(v)
    out = OptimizerState(
        learning_rate=state.learning_rate,
        beta1=state.beta1,
        beta2=state.beta2,
        eps=state.eps,
        anneal=state.anneal,
        total_steps=state.total_steps,
        anneal_step=state.anneal_step,
        step=t,
        m=new_m,
        v=new_v,
    )
    return new_params, out


def global_grad_norm(grads):
    return float(np.sqrt(sum(float((g * g).sum()) for g in grads)))


def clip_grad_norm(grads, max_norm):
    """Scale all grads by max_norm/||g|| when the global L2 norm exceeds max_norm."""
    assert max_norm > 0
    norm = global_grad_norm(grads)
    if norm <= max_norm:
        return grads
    scale = max_norm / norm
    return [g * scale for g in grads]


def finite_difference_grads(loss_fn, params, h=1e-5):
    """Central-difference gradient of loss_fn(params) for every coordinate.

    The independent oracle used by the gradient test suite; deliberately knows
    nothing about the tape.
    """
    grads = []
    for i, p in enumerate(params):
        g = np.zeros_like(p)
        flat = p.reshape(-1)
        gflat = g.reshape(-1)
        for j in range(flat.size):
            orig = flat[j]
            flat[j] = orig + h
            up = loss_fn(params)
            flat[j] = orig - h
            down = loss_fn(params)
            flat[j] = orig
            gflat[j] = (up - down) / (2.0 * h)
        grads.append(g)
    return grads
