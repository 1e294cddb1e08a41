"""Aggregate reports over sweep output directories.

Reads the per-cell manifests, eval curves and iteration stats written by the
run/sweep commands, normalizes scores per environment with min/max taken
across every algorithm in the directory, and emits:

    report/aggregate.csv     capacity x algorithm x metric with 95% CIs
    report/aggregate.json    the same, nested
    report/iqm_vs_steps.csv  normalized IQM learning curves (+ AUC)
    report/tv_vs_iteration.csv  mean end-of-iteration TV divergence traces
    report/*.svg             metric-vs-capacity bands, IQM curves, TV traces

SVG bytes are deterministic for fixed inputs (fixed hash salt, no timestamps).
"""

from __future__ import annotations

import json
from pathlib import Path

import matplotlib
import numpy as np

matplotlib.use("Agg")
matplotlib.rcParams["svg.hashsalt"] = "laglab"
import matplotlib.pyplot as plt

from .evalmetrics import ScoreMatrix, aggregate, auc, iqm, normalize, stratified_bootstrap_ci

METRICS = ("median", "iqm", "mean", "optimality_gap")


def discover_runs(results_dir):
    """Collect every (config, seed, eval_curve, stats) under results_dir.

    Accepts both a single-run directory (manifest.json at the top) and a sweep
    directory (cells/*/manifest.json).
    """
    results_dir = Path(results_dir)
    manifests = sorted(results_dir.glob("cells/*/manifest.json"))
    if (results_dir / "manifest.json").exists() and not manifests:
        manifests = [results_dir / "manifest.json"]
    runs = []
    for mpath in manifests:
        with open(mpath) as f:
            manifest = json.load(f)
        config = manifest["config"]
        for seed in sorted(int(s) for s in manifest.get("seed_hashes", {})):
            run_path = mpath.parent / f"run_{seed}.jsonl"
            eval_path = mpath.parent / f"eval_{seed}.csv"
            if not run_path.exists():
                continue
            stats = [json.loads(line) for line in run_path.read_text().splitlines()]
            curve = []
            if eval_path.exists():
                for line in eval_path.read_text().splitlines()[1:]:
                    it, steps, ret = line.split(",")
                    curve.append((int(it), int(steps), float(ret)))
            runs.append({"config": config, "seed": seed, "stats": stats, "curve": curve})
    return runs


def _score_bounds(runs):
    """Per-env min/max over every eval return from every algorithm."""
    bounds = {}
    for run in runs:
        env = run["config"]["env"]
        for _, _, ret in run["curve"]:
            lo, hi = bounds.get(env, (np.inf, -np.inf))
            bounds[env] = (min(lo, ret), max(hi, ret))
    return bounds


def _cells(runs):
    cells = {}
    for run in runs:
        key = (run["config"]["algorithm"], run["config"]["buffer_capacity"])
        cells.setdefault(key, []).append(run)
    return dict(sorted(cells.items()))


def build_report(results_dir, out_subdir="report", num_resamples=2000, confidence=0.95):
    """Build every CSV/JSON/SVG artifact; returns the report directory path."""
    runs = discover_runs(results_dir)
    if not runs:
        raise FileNotFoundError(f"no runs found under {results_dir}")
    report_dir = Path(results_dir) / out_subdir
    report_dir.mkdir(parents=True, exist_ok=True)
    bounds = _score_bounds(runs)
    cells = _cells(runs)

    def norm_final(run):
        lo, hi = bounds[run["config"]["env"]]
        return float(normalize(run["curve"][-1][2], lo, hi))

    # -- final-score aggregates with stratified bootstrap CIs
    agg_rows = []
    agg_nested = {}
    for (alg, cap), cell_runs in cells.items():
        by_env = {}
        for run in cell_runs:
            by_env.setdefault(run["config"]["env"], []).append(norm_final(run))
        n_runs = min(len(v) for v in by_env.values())
        scores = np.array([v[:n_runs] for v in by_env.values()]).T  # runs x tasks
        sm = ScoreMatrix(scores, sorted(by_env))
        stats = aggregate(sm)
        agg_nested.setdefault(alg, {})[str(cap)] = {}
        for metric in METRICS:
            stat_fn = {
                "median": lambda s: float(np.median(s)),
                "iqm": lambda s: iqm(s),
                "mean": lambda s: float(np.mean(s)),
                "optimality_gap": lambda s: float(np.mean(1.0 - np.minimum(s, 1.0))),
            }[metric]
            lo, hi = stratified_bootstrap_ci(
                sm, stat_fn, num_resamples=num_resamples, confidence=confidence,
                rng=np.random.default_rng(0),
            )
            agg_rows.append((cap, alg, metric, stats[metric], lo, hi))
            agg_nested[alg][str(cap)][metric] = {"value": stats[metric], "ci_lo": lo, "ci_hi": hi}

    with open(report_dir / "aggregate.csv", "w") as f:
        f.write("capacity,algorithm,metric,value,ci_lo,ci_hi\n")
        for cap, alg, metric, value, lo, hi in agg_rows:
            f.write(f"{cap},{alg},{metric},{value!r},{lo!r},{hi!r}\n")
    with open(report_dir / "aggregate.json", "w") as f:
        json.dump(agg_nested, f, indent=2, sort_keys=True)

    # -- normalized IQM learning curves and their AUC
    with open(report_dir / "iqm_vs_steps.csv", "w") as f:
        f.write("algorithm,capacity,env_steps,iqm_normalized\n")
        curve_data = {}
        for (alg, cap), cell_runs in cells.items():
            n_points = min(len(r["curve"]) for r in cell_runs)
            steps = [cell_runs[0]["curve"][i][1] for i in range(n_points)]
            values = []
            for i in range(n_points):
                pts = [
                    normalize(r["curve"][i][2], *bounds[r["config"]["env"]])
                    for r in cell_runs
                ]
                values.append(iqm(np.asarray(pts)))
                f.write(f"{alg},{cap},{steps[i]},{values[i]!r}\n")
            curve_data[(alg, cap)] = (steps, values)
    with open(report_dir / "auc.csv", "w") as f:
        f.write("algorithm,capacity,auc\n")
        for (alg, cap), (steps, values) in curve_data.items():
            if len(steps) >= 2:
                f.write(f"{alg},{cap},{auc(np.asarray(steps, float), np.asarray(values))!r}\n")

    # -- TV divergence traces
    with open(report_dir / "tv_vs_iteration.csv", "w") as f:
        f.write("algorithm,capacity,iteration,tv_full_batch_end,tv_final_minibatch\n")
        tv_data = {}
        for (alg, cap), cell_runs in cells.items():
            n_iters = min(len(r["stats"]) for r in cell_runs)
            full = np.mean([[r["stats"][i]["tv_full_batch_end"] for i in range(n_iters)] for r in cell_runs], axis=0)
            last = np.mean([[r["stats"][i]["tv_final_minibatch"] for i in range(n_iters)] for r in cell_runs], axis=0)
            tv_data[(alg, cap)] = full
            for i in range(n_iters):
                f.write(f"{alg},{cap},{i},{float(full[i])!r},{float(last[i])!r}\n")

    _plot_metric_vs_capacity(report_dir, agg_rows)
    _plot_curves(report_dir / "iqm_vs_steps.svg", curve_data, "environment steps", "normalized IQM")
    _plot_curves(report_dir / "tv_vs_iteration.svg",
                 {k: (list(range(len(v))), list(v)) for k, v in tv_data.items()},
                 "iteration", "end-of-iteration TV estimate")
    return report_dir


def _savefig(fig, path):
    fig.savefig(path, format="svg", metadata={"Date": None})
    plt.close(fig)


def _plot_metric_vs_capacity(report_dir, agg_rows):
    by_metric = {}
    for cap, alg, metric, value, lo, hi in agg_rows:
        by_metric.setdefault(metric, {}).setdefault(alg, []).append((cap, value, lo, hi))
    fig, axes = plt.subplots(1, len(METRICS), figsize=(4 * len(METRICS), 3.2))
    for ax, metric in zip(np.atleast_1d(axes), METRICS):
        for alg, rows in sorted(by_metric.get(metric, {}).items()):
            rows.sort()
            caps = [r[0] for r in rows]
            vals = [r[1] for r in rows]
            los = [r[2] for r in rows]
            his = [r[3] for r in rows]
            ax.plot(caps, vals, marker="o", label=alg)
            ax.fill_between(caps, los, his, alpha=0.2)
        ax.set_xlabel("policy buffer capacity")
        ax.set_title(metric)
        ax.set_xscale("log", base=2)
    np.atleast_1d(axes)[0].legend(fontsize=8)
    fig.tight_layout()
    _savefig(fig, report_dir / "metrics_vs_capacity.svg")


def _plot_curves(path, curve_data, xlabel, ylabel):
    fig, ax = plt.subplots(figsize=(5.5, 3.5))
    for (alg, cap), (xs, ys) in sorted(curve_data.items()):
        ax.plot(xs, ys, label=f"{alg} cap={cap}")
    ax.set_xlabel(xlabel)
    ax.set_ylabel(ylabel)
    ax.legend(fontsize=7)
    fig.tight_layout()
    _savefig(fig, path)
