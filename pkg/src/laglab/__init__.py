"""laglab: a policy-lag laboratory for asynchronous on-policy RL.

Library layout:

- ``envs``        seedable desk-scale environments and vectorized rollout
- ``nets``        MLP policy/value heads over a minimal autodiff tape
- ``advantage``   lambda-TD and clipped-importance-realignment estimators
- ``policyopt``   TV-filtered and baseline losses plus the epoch loop
- ``asyncsim``    the simulated-asynchronous harness (policy buffer, driver)
- ``oracle``      exact tabular-MDP verification of every bound and operator
- ``evalmetrics`` IQM / optimality gap / stratified bootstrap / AUC
- ``cli``         the `laglab` front door (run / sweep / verify / report)
"""

from .advantage import AdvantageEstimate, gae, ratios, vtrace_realign
from .asyncsim import (
    PolicyBuffer,
    PolicySnapshot,
    RunRecord,
    assign_actors,
    evaluate_policy,
    init_harness,
    run_experiment,
    run_iteration,
)
from .config import ExperimentConfig, load_config
from .envs import EnvSpec, RolloutBatch, make_env, rollout_sync
from .evalmetrics import ScoreMatrix, aggregate, auc, iqm, normalize, stratified_bootstrap_ci
from .mdp import TabularMDP, TabularPolicy, load_mdp, random_mdp, random_policy, save_mdp
from .policyopt import IterationStats, LossConfig, train_epochs, tv_estimate, tv_filter_mask

__version__ = "0.1.0"
