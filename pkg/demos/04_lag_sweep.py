"""A miniature lag sweep through the library API (the CLI does the same).

Runs two algorithms at two buffer capacities on the slippery chain, then
aggregates normalized final returns into the robust metrics used for
comparison plots. For the full pipeline, see:

    laglab sweep --config demo.yaml --capacities 1,4,8 --algos tvpo,ppo_clip --out out/
    laglab report out/
"""

from pathlib import Path

import numpy as np

from laglab.asyncsim import run_experiment
from laglab.config import ExperimentConfig
from laglab.evalmetrics import ScoreMatrix, aggregate, stratified_bootstrap_ci, iqm, normalize
from laglab.reporting import build_report

base = ExperimentConfig(
    env="chain", num_actors=4, num_steps=64, iterations=40, seeds=[0, 1, 2],
    epochs=4, minibatches=4, entropy_coeff=0.01, hidden_sizes=[16, 16],
    learning_rate=1e-3, eval_every=10, eval_episodes=8,
)

out = Path("lag_sweep_demo")
finals = {}
for alg in ("tvpo", "ppo_clip"):
    for cap in (1, 4):
        cell = base.replace(algorithm=alg, buffer_capacity=cap).validate()
        cell_dir = out / "cells" / f"{alg}_cap{cap}"
        scores = [run_experiment(cell, seed, out_dir=cell_dir).eval_curve[-1][2] for seed in cell.seeds]
        finals[(alg, cap)] = scores
        print(f"{alg:9s} cap{cap}: finals {np.round(scores, 3)}")

# %% Normalize across every run of the task, then aggregate per cell.
all_scores = np.concatenate(list(finals.values()))
lo, hi = all_scores.min(), all_scores.max()
for key, scores in finals.items():
    sm = ScoreMatrix(normalize(np.asarray(scores), lo, hi)[:, None], ["chain"])
    agg = aggregate(sm)
    ci = stratified_bootstrap_ci(sm, lambda s: iqm(s), num_resamples=500, rng=np.random.default_rng(0))
    print(f"{key}: IQM {agg['iqm']:.3f} (95% CI {ci[0]:.3f}..{ci[1]:.3f}), gap {agg['optimality_gap']:.3f}")

# %% The reporting module builds the same tables plus SVG figures from disk.
report_dir = build_report(out)
print("report artifacts:", ", ".join(sorted(p.name for p in report_dir.iterdir())))
