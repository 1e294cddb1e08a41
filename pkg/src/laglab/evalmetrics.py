"""Aggregate metrics over run grids: IQM, median, mean, optimality gap,
stratified bootstrap confidence intervals, and area-under-curve summaries."""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np


@dataclass
class ScoreMatrix:
    """scores[run, task] of normalized returns for one (algorithm, capacity)."""

    scores: np.ndarray
    task_ids: list
    algorithm: str = ""
    capacity: int = 0

    def __post_init__(self):
        self.scores = np.atleast_2d(np.asarray(self.scores, dtype=np.float64))
        assert self.scores.shape[0] >= 1
        assert not np.any(np.isnan(self.scores))


def normalize(raw_scores, global_min, global_max):
    """(score - min) / (max - min) with the min/max taken across all algorithms
    for the task. A degenerate range maps everything to 0.5 (with a warning)."""
    raw_scores = np.asarray(raw_scores, dtype=np.float64)
    span = global_max - global_min
    if span == 0.0:
        warnings.warn("degenerate score range (max == min); emitting 0.5", stacklevel=2)
        return np.full_like(raw_scores, 0.5)
    return (raw_scores - global_min) / span


def iqm(values):
    """Interquartile mean with fractional trimming.

    Sort the n values, give zero weight to the lowest and highest n/4, weight
    (1 - frac) to the two boundary order statistics when n/4 = floor + frac is
    not an integer, weight 1 to everything in between, and take the weighted
    mean (total weight n/2).
    """
    x = np.sort(np.asarray(values, dtype=np.float64).ravel())
    n = x.size
    m = 0.25 * n
    f = int(np.floor(m))
    frac = m - f
    w = np.ones(n)
    w[:f] = 0.0
    w[n - f:] = 0.0
    if frac > 0.0:
        w[f] = 1.0 - frac
        w[n - 1 - f] = 1.0 - frac
    return float((w * x).sum() / w.sum())


def aggregate(score_matrix):
    """median / IQM / mean / optimality gap over all run-task scores."""
    flat = score_matrix.scores.ravel()
    return {
        "median": float(np.median(flat)),
        "iqm": iqm(flat),
        "mean": float(flat.mean()),
        "optimality_gap": float((1.0 - np.minimum(flat, 1.0)).mean()),
    }


def stratified_bootstrap_ci(score_matrix, statistic, num_resamples=2000, confidence=0.95, rng=None):
    """Percentile interval of `statistic` under run resampling within each task.

    statistic maps an (runs, tasks) array to a scalar; tasks are resampled
    independently (stratified), runs with replacement.
    """
    rng = np.random.default_rng(0) if rng is None else rng
    scores = score_matrix.scores
    n_runs, n_tasks = scores.shape
    stats = np.empty(num_resamples)
    for b in range(num_resamples):
        idx = rng.integers(0, n_runs, size=(n_runs, n_tasks))
        stats[b] = statistic(np.take_along_axis(scores, idx, axis=0))
    tail = 100.0 * (1.0 - confidence) / 2.0
    lo, hi = np.percentile(stats, [tail, 100.0 - tail])
    return float(lo), float(hi)


def auc(env_steps, scores):
    """Trapezoidal area under the (env_steps, score) curve, normalized by the
    step span so constant-1 curves score 1."""
    env_steps = np.asarray(env_steps, dtype=np.float64)
    scores = np.asarray(scores, dtype=np.float64)
    assert env_steps.size >= 2 and env_steps.size == scores.size
    span = env_steps[-1] - env_steps[0]
    return float(np.trapezoid(scores, env_steps) / span)
