"""Experiment front door: `laglab run | sweep | verify | report`.

Exit codes: 0 success, 1 runtime failure (including verification failures),
2 usage or configuration errors. The sweep resumes by skipping cells whose
manifest already records a completed (config, seed) pair; `LAGLAB_THREADS`
caps how many cells run as parallel worker processes.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

from .asyncsim import run_experiment
from .config import load_config
from .errors import ConfigError, LaglabError
from .verify import run_suites


def _parse_int_list(text):
    return [int(x) for x in str(text).split(",") if x != ""]


def _add_common(p):
    p.add_argument("--config", required=True, help="YAML experiment config")
    p.add_argument("--set", dest="overrides", action="append", default=[], metavar="KEY=VALUE",
                   help="override a config key (dotted paths allowed; repeatable)")
    p.add_argument("--seeds", default=None, help="comma-separated seed list override")
    p.add_argument("--out", default=None, help="output directory override")


def build_parser():
    parser = argparse.ArgumentParser(prog="laglab", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="run one experiment per configured seed")
    _add_common(p_run)

    p_sweep = sub.add_parser("sweep", help="run a capacity x algorithm x seed grid")
    _add_common(p_sweep)
    p_sweep.add_argument("--capacities", default="1,2,4,8", help="comma-separated buffer capacities")
    p_sweep.add_argument("--algos", default="tvpo,ppo_clip", help="comma-separated algorithm ids")

    p_verify = sub.add_parser("verify", help="run the oracle/gradient property suites")
    p_verify.add_argument("--suite", default="all", choices=["lemmas", "vtrace", "gradients", "all"])
    p_verify.add_argument("--seed", type=int, default=0)
    p_verify.add_argument("--instances", type=int, default=None,
                          help="instances per sweep (defaults: 1000 lemmas / 200 vtrace / 50 gradients)")

    p_report = sub.add_parser("report", help="build aggregate CSV/SVG artifacts from runs")
    p_report.add_argument("results_dir", help="directory written by run/sweep")
    return parser


def _load(args):
    config = load_config(args.config, args.overrides)
    if args.seeds is not None:
        config = config.replace(seeds=_parse_int_list(args.seeds)).validate()
    if args.out is not None:
        config = config.replace(out_dir=args.out)
    if config.out_dir is None:
        raise ConfigError("an output directory is required (config out_dir or --out)")
    return config


def cmd_run(args):
    config = _load(args)
    out_dir = Path(config.out_dir)
    for seed in config.seeds:
        record = run_experiment(config, seed, out_dir=out_dir)
        print(f"run seed={seed}: {len(record.stats)} iterations, hash={record.content_hash[:12]}")
    return 0


def _config_key(config_dict):
    skim = dict(config_dict)
    skim.pop("seeds", None)
    skim.pop("out_dir", None)
    return skim


def _pending_seeds(cell_dir, config):
    manifest_path = cell_dir / "manifest.json"
    done = set()
    if manifest_path.exists():
        with open(manifest_path) as f:
            manifest = json.load(f)
        if _config_key(manifest.get("config", {})) == _config_key(config.to_dict()):
            for seed_str in manifest.get("seed_hashes", {}):
                if (cell_dir / f"run_{seed_str}.jsonl").exists():
                    done.add(int(seed_str))
    return [s for s in config.seeds if s not in done]


def _run_cell(payload):
    """Worker: run every pending seed of one cell (its own output directory)."""
    config, cell_dir, seeds = payload
    results = {}
    for seed in seeds:
        record = run_experiment(config, seed, out_dir=Path(cell_dir))
        results[seed] = record.content_hash
    return cell_dir, results


def cmd_sweep(args):
    base = _load(args)
    capacities = _parse_int_list(args.capacities)
    algos = [a.strip() for a in args.algos.split(",") if a.strip()]
    out_dir = Path(base.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)

    jobs = []
    cell_names = []
    for alg in algos:
        for cap in capacities:
            name = f"{alg}_cap{cap}"
            cell_names.append(name)
            cell_dir = out_dir / "cells" / name
            config = base.replace(algorithm=alg, buffer_capacity=cap, out_dir=str(cell_dir)).validate()
            pending = _pending_seeds(cell_dir, config)
            if pending:
                jobs.append((config, str(cell_dir), pending))
            else:
                print(f"skip {name}: all {len(config.seeds)} seeds complete")

    workers = max(1, int(os.environ.get("LAGLAB_THREADS", "1")))
    if workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            for cell_dir, results in pool.map(_run_cell, jobs):
                for seed, digest in results.items():
                    print(f"{Path(cell_dir).name} seed={seed}: hash={digest[:12]}")
    else:
        for job in jobs:
            cell_dir, results = _run_cell(job)
            for seed, digest in results.items():
                print(f"{Path(cell_dir).name} seed={seed}: hash={digest[:12]}")

    with open(out_dir / "manifest.json", "w") as f:
        json.dump(
            {"base_config": base.to_dict(), "capacities": capacities, "algorithms": algos,
             "cells": cell_names, "seeds": base.seeds},
            f, indent=2, sort_keys=True,
        )
    return 0


def cmd_verify(args):
    results = run_suites(args.suite, seed=args.seed, instances=args.instances)
    for r in results:
        print(r.row())
    failed = [r for r in results if not r.passed]
    print(f"{len(results) - len(failed)}/{len(results)} checks passed")
    return 1 if failed else 0


def cmd_report(args):
    from .reporting import build_report

    try:
        report_dir = build_report(args.results_dir)
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    artifacts = sorted(p.name for p in report_dir.iterdir())
    print(f"report written to {report_dir}: {', '.join(artifacts)}")
    return 0


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    handler = {"run": cmd_run, "sweep": cmd_sweep, "verify": cmd_verify, "report": cmd_report}[args.command]
    try:
        return handler(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except LaglabError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
