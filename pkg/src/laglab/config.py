"""Declarative experiment configuration.

A run is fully described by one YAML file (committable artifact) plus optional
`key=value` overrides with dotted paths. Defaults follow the standard baseline
hyperparameters (clip/TV threshold 0.2, lr 3e-4 with linear annealing, gamma
0.99, 10 epochs x 32 minibatches, max grad norm 0.5, rho_bar = c_bar = 1);
num_actors/num_steps default to the desk-scale 16 x 256 profile rather than
the 500 x 1000 large-scale setting.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field

import yaml

from .errors import ConfigError
from .policyopt import ALGORITHMS, LossConfig


@dataclass
class ExperimentConfig:
    algorithm: str = "tvpo"
    env: str = "chain"
    buffer_capacity: int = 1
    num_actors: int = 16
    num_steps: int = 256
    iterations: int = 200
    seeds: list = field(default_factory=lambda: [0])
    gamma: float | None = None  # None: use the env's default
    gae_lambda: float = 0.95
    vtrace_lambda: float = 1.0
    rho_bar: float = 1.0
    c_bar: float = 1.0
    delta: float = 0.2
    kl_coeff: float = 1.0
    spo_coeff: float = 1.0
    entropy_coeff: float = 0.0
    value_coeff: float = 0.5
    policy_coeff: float = 1.0
    epochs: int = 10
    minibatches: int = 32
    learning_rate: float = 3e-4
    anneal_lr: bool = True
    max_grad_norm: float = 0.5
    hidden_sizes: list = field(default_factory=lambda: [64, 64])
    filter_condition: str = "alg1_literal"
    ppo_form: str = "min"
    realign_critic: str = "current"  # or "frozen"
    normalize_advantages: bool | None = None  # None: on (the baseline-family default)
    value_clip: bool = False
    eval_every: int = 10
    eval_episodes: int = 10
    bufferless: bool = False
    out_dir: str | None = None

    def validate(self):
        if self.algorithm not in ALGORITHMS:
            raise ConfigError(f"algorithm must be one of {ALGORITHMS}, got {self.algorithm!r}")
        if not self.seeds:
            raise ConfigError("seed list must be non-empty")
        if self.buffer_capacity < 1:
            raise ConfigError("buffer_capacity must be >= 1")
        if not (0.0 < self.delta <= 1.0):
            raise ConfigError("delta must be in (0, 1]")
        if self.gamma is not None and not (0.0 <= self.gamma < 1.0):
            raise ConfigError("gamma must be in [0, 1)")
        for name in ("gae_lambda", "vtrace_lambda"):
            v = getattr(self, name)
            if not (0.0 <= v <= 1.0):
                raise ConfigError(f"{name} must be in [0, 1]")
        if not self.rho_bar >= self.c_bar > 0.0:
            raise ConfigError("need rho_bar >= c_bar > 0")
        if self.epochs < 1 or self.minibatches < 1:
            raise ConfigError("epochs and minibatches must be >= 1")
        if self.learning_rate <= 0.0:
            raise ConfigError("learning_rate must be positive")
        if min(self.num_actors, self.num_steps, self.iterations) < 1:
            raise ConfigError("num_actors, num_steps and iterations must be >= 1")
        if self.kl_coeff < 0.0 or self.spo_coeff < 0.0 or self.entropy_coeff < 0.0:
            raise ConfigError("loss coefficients must be non-negative")
        if self.realign_critic not in ("current", "frozen"):
            raise ConfigError("realign_critic must be 'current' or 'frozen'")
        self.loss_config()  # reuses LossConfig asserts
        return self

    def loss_config(self, normalize=None):
        if normalize is None:
            normalize = True if self.normalize_advantages is None else self.normalize_advantages
        return LossConfig(
            algorithm=self.algorithm,
            delta=self.delta,
            kl_coeff=self.kl_coeff,
            spo_coeff=self.spo_coeff,
            entropy_coeff=self.entropy_coeff,
            value_coeff=self.value_coeff,
            policy_coeff=self.policy_coeff,
            epochs=self.epochs,
            minibatches=self.minibatches,
            filter_condition=self.filter_condition,
            ppo_form=self.ppo_form,
            normalize_advantages=normalize,
            value_clip=self.value_clip,
            max_grad_norm=self.max_grad_norm,
        ).validate()

    def to_dict(self):
        return dataclasses.asdict(self)

    def replace(self, **kwargs):
        return dataclasses.replace(self, **kwargs)


def config_from_dict(data):
    known = {f.name for f in dataclasses.fields(ExperimentConfig)}
    unknown = set(data) - known
    if unknown:
        raise ConfigError(f"unknown config keys: {sorted(unknown)}")
    return ExperimentConfig(**data).validate()


def load_config(path, overrides=()):
    """Read a YAML config file and apply `key=value` overrides (dotted paths)."""
    try:
        with open(path) as f:
            data = yaml.safe_load(f) or {}
    except FileNotFoundError as exc:
        raise ConfigError(f"config file not found: {path}") from exc
    except yaml.YAMLError as exc:
        raise ConfigError(f"cannot parse {path}: {exc}") from exc
    if not isinstance(data, dict):
        raise ConfigError(f"{path} must contain a mapping at top level")
    for item in overrides:
        if "=" not in item:
            raise ConfigError(f"override {item!r} is not of the form key=value")
        key, _, raw = item.partition("=")
        node = data
        parts = key.strip().split(".")
        for part in parts[:-1]:
            node = node.setdefault(part, {})
            if not isinstance(node, dict):
                raise ConfigError(f"cannot descend into {key!r}")
        node[parts[-1]] = yaml.safe_load(raw)
    return config_from_dict(data)
