import json
from pathlib import Path

import numpy as np
import pytest
import yaml

import laglab.verify as verify_mod
from laglab.cli import main
from laglab.config import load_config
from laglab.errors import ConfigError
from laglab.evalmetrics import iqm
from laglab.verify import CheckResult


TINY = dict(
    algorithm="tvpo", env="chain:num_states=5,horizon=12", buffer_capacity=2,
    num_actors=2, num_steps=16, iterations=2, seeds=[0, 1], epochs=1, minibatches=1,
    hidden_sizes=[8], eval_every=1, eval_episodes=2, learning_rate=1e-3,
)


def write_config(tmp_path, **overrides):
    cfg = dict(TINY)
    cfg.update(overrides)
    path = tmp_path / "config.yaml"
    path.write_text(yaml.safe_dump(cfg))
    return path


def test_load_config_missing_file(tmp_path):
    with pytest.raises(ConfigError) as info:
        load_config(tmp_path / "absent.yaml")
    assert "absent.yaml" in str(info.value)


def test_cli_missing_config_exits_2(tmp_path, capsys):
    code = main(["run", "--config", str(tmp_path / "nope.yaml"), "--out", str(tmp_path / "o")])
    assert code == 2
    assert "nope.yaml" in capsys.readouterr().err


def test_cli_bad_key_exits_2(tmp_path, capsys):
    path = write_config(tmp_path, bogus_key=1)
    assert main(["run", "--config", str(path), "--out", str(tmp_path / "o")]) == 2


def test_cli_bad_value_exits_2(tmp_path):
    path = write_config(tmp_path)
    code = main(["run", "--config", str(path), "--set", "delta=7.5", "--out", str(tmp_path / "o")])
    assert code == 2


def test_run_writes_manifest_with_override(tmp_path):
    path = write_config(tmp_path)
    out = tmp_path / "out"
    code = main(["run", "--config", str(path), "--set", "buffer_capacity=4", "--seeds", "3", "--out", str(out)])
    assert code == 0
    manifest = json.loads((out / "manifest.json").read_text())
    assert manifest["config"]["buffer_capacity"] == 4
    assert manifest["config"]["seeds"] == [3]
    assert (out / "run_3.jsonl").exists()
    assert (out / "eval_3.csv").exists()


def test_sweep_grid_and_resume(tmp_path, capsys):
    path = write_config(tmp_path)
    out = tmp_path / "sweep"
    args = ["sweep", "--config", str(path), "--capacities", "1,2", "--algos", "tvpo,ppo_clip",
            "--seeds", "0,1", "--out", str(out)]
    assert main(args) == 0
    cells = sorted(p.name for p in (out / "cells").iterdir())
    assert cells == ["ppo_clip_cap1", "ppo_clip_cap2", "tvpo_cap1", "tvpo_cap2"]
    run_files = sorted(out.glob("cells/*/run_*.jsonl"))
    assert len(run_files) == 8
    top = json.loads((out / "manifest.json").read_text())
    assert top["capacities"] == [1, 2] and top["algorithms"] == ["tvpo", "ppo_clip"]

    capsys.readouterr()
    assert main(args) == 0
    assert capsys.readouterr().out.count("skip") == 4  # everything already complete

    # an interrupted cell (missing run file) is re-run
    (out / "cells" / "tvpo_cap1" / "run_0.jsonl").unlink()
    capsys.readouterr()
    assert main(args) == 0
    text = capsys.readouterr().out
    assert "tvpo_cap1 seed=0" in text
    assert text.count("skip") == 3


def test_verify_cli_passes_small(capsys):
    assert main(["verify", "--suite", "vtrace", "--instances", "5", "--seed", "0"]) == 0
    out = capsys.readouterr().out
    assert "PASS" in out and "FAIL" not in out
    assert "worst=" in out  # margin reporting contract


def test_verify_cli_fault_injection(monkeypatch, capsys):
    real = verify_mod.check_lemmas

    def corrupted(num_instances=1000, seed=0):
        results = real(num_instances=5, seed=seed)
        bad = CheckResult("lemmas", "corrupted_bound", False, -1.0, 0.0)
        return results + [bad]

    monkeypatch.setattr(verify_mod, "check_lemmas", corrupted)
    assert main(["verify", "--suite", "lemmas", "--instances", "5"]) == 1
    assert "FAIL" in capsys.readouterr().out


def test_report_empty_dir(tmp_path, capsys):
    assert main(["report", str(tmp_path)]) == 1
    assert "no runs found" in capsys.readouterr().err


def test_report_artifacts_and_values(tmp_path):
    path = write_config(tmp_path, iterations=3)
    out = tmp_path / "sweep"
    assert main(["sweep", "--config", str(path), "--capacities", "1,2", "--algos", "tvpo",
                 "--seeds", "0,1,2", "--out", str(out)]) == 0
    assert main(["report", str(out)]) == 0
    report = out / "report"
    for name in ("aggregate.csv", "aggregate.json", "iqm_vs_steps.csv", "auc.csv",
                 "tv_vs_iteration.csv", "metrics_vs_capacity.svg", "iqm_vs_steps.svg",
                 "tv_vs_iteration.svg"):
        assert (report / name).exists(), name

    # hand-check the aggregate IQM for one cell against the eval CSVs
    finals = []
    for seed in (0, 1, 2):
        lines = (out / "cells" / "tvpo_cap1" / f"eval_{seed}.csv").read_text().splitlines()
        finals.append(float(lines[-1].split(",")[2]))
    all_finals = list(finals)
    for seed in (0, 1, 2):
        lines = (out / "cells" / "tvpo_cap2" / f"eval_{seed}.csv").read_text().splitlines()
        all_finals.append(float(lines[-1].split(",")[2]))
    lo, hi = min(all_finals), max(all_finals)
    expected = iqm(np.array([(f - lo) / (hi - lo) for f in finals]))
    agg = json.loads((report / "aggregate.json").read_text())
    assert agg["tvpo"]["1"]["iqm"]["value"] == pytest.approx(expected, abs=1e-12)


def test_report_svg_bytes_deterministic(tmp_path):
    path = write_config(tmp_path, iterations=2, seeds=[0])
    out = tmp_path / "o"
    assert main(["sweep", "--config", str(path), "--capacities", "1", "--algos", "tvpo",
                 "--seeds", "0", "--out", str(out)]) == 0
    assert main(["report", str(out)]) == 0
    first = (out / "report" / "metrics_vs_capacity.svg").read_bytes()
    assert main(["report", str(out)]) == 0
    assert (out / "report" / "metrics_vs_capacity.svg").read_bytes() == first


def test_exit_code_discipline_usage_error():
    with pytest.raises(SystemExit) as info:
        main(["frobnicate"])
    assert info.value.code == 2
