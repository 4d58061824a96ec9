"""Tests for the experiment runner, summaries, comparisons, and the CLI.

The reproducibility contract under test: a run directory is a pure function
of (kind, params, trials, seed).  Rerunning, or changing the parallelism
degree, must reproduce every persisted byte, and summarize() applied to the
persisted files must reproduce summary.json exactly.
"""

from __future__ import annotations

import json
import math
from pathlib import Path

import pytest

from smoothlab.cli import main as cli_main
from smoothlab.domain import ValidationError
from smoothlab.harness import (
    ExperimentConfig,
    assert_report,
    compare_runs,
    default_run_dir,
    make_config,
    run_experiment,
    summarize,
    summary_to_json,
)
from smoothlab import harness


def _dir_bytes(path: Path) -> dict[str, bytes]:
    return {p.name: p.read_bytes() for p in sorted(path.iterdir()) if p.is_file()}


def test_make_config_fills_defaults():
    cfg = make_config("coupling", {"n": 8, "sigma": 0.25, "T": 4}, trials=3, seed=0)
    assert cfg.params["k"] > 0
    assert cfg.params["adversary"] == "window"

    cfg = make_config("learning", {"sigma": 1 / 16, "d": 2, "T": 64}, trials=1, seed=0)
    assert cfg.params["m"] == 16
    assert cfg.params["beta"] == pytest.approx((1 / 16) * math.sqrt(2) / 8.0)
    assert cfg.params["flip"] == 0.25

    cfg = make_config("dispersion", {"T": 10, "ell": 2, "sigma": 0.2}, trials=1, seed=0)
    assert cfg.params["w"] == pytest.approx(0.2 * 20 ** (-0.5))
    assert cfg.params["adversary"] == "iid-uniform"

    cfg = make_config("discrepancy-lowerbound", {"algorithm": "random-sign", "n": 3, "T": 10}, 1, 0)
    assert "adversary" not in cfg.params


def test_make_config_rejects_bad_input():
    with pytest.raises(ValidationError):
        make_config("bogus", {}, 1, 0)
    with pytest.raises(ValidationError):
        make_config("coupling", {"n": 8, "sigma": 0.25, "T": 4, "mystery": 1}, 1, 0)
    with pytest.raises(ValidationError):
        make_config("coupling", {"n": 8, "sigma": 0.25}, 1, 0)  # T missing
    with pytest.raises(ValidationError):
        make_config("coupling", {"n": 8, "sigma": 0.25, "T": 4, "set_size": 2}, 1, 0)
    with pytest.raises(ValidationError):
        make_config("discrepancy", {"algorithm": "potential", "n": 4, "T": 8, "delta": 0.1}, 1, 0)
    with pytest.raises(ValidationError):
        make_config("discrepancy", {"algorithm": "random-sign", "n": 4, "T": 8, "inner": 0.5}, 1, 0)
    with pytest.raises(ValidationError):
        make_config("learning", {"m": 16, "d": 2, "T": 8, "adversary": "mistake-tree", "flip": 0.1}, 1, 0)
    with pytest.raises(ValidationError):
        make_config("learning", {"d": 2, "T": 8}, 1, 0)  # neither m nor sigma
    with pytest.raises(ValidationError):
        make_config("dispersion", {"T": 10, "ell": 2, "sigma": 0.2, "lo": 0.1}, 1, 0)
    with pytest.raises(ValidationError):
        ExperimentConfig("coupling", {}, trials=0, seed=0)
    with pytest.raises(ValidationError):
        ExperimentConfig("coupling", {}, trials=1, seed=-1)


def test_rerun_is_byte_identical(tmp_path):
    cfg = make_config(
        "discrepancy",
        {"algorithm": "potential", "n": 4, "T": 32, "adversary": "adaptive-shell", "sigma": 0.25},
        trials=6,
        seed=13,
    )
    run_experiment(cfg, tmp_path / "a", parallelism=1)
    run_experiment(cfg, tmp_path / "b", parallelism=1)
    assert _dir_bytes(tmp_path / "a") == _dir_bytes(tmp_path / "b")


def test_parallelism_is_byte_identical(tmp_path):
    for kind, params in (
        ("coupling", {"n": 8, "sigma": 0.25, "T": 4, "adversary": "last-value"}),
        ("dispersion", {"T": 10, "ell": 2, "sigma": 0.2, "adversary": "densest-window"}),
        ("learning", {"m": 16, "d": 2, "T": 40}),
    ):
        cfg = make_config(kind, params, trials=16, seed=5)
        run_experiment(cfg, tmp_path / f"{kind}-p1", parallelism=1)
        run_experiment(cfg, tmp_path / f"{kind}-p8", parallelism=8)
        assert _dir_bytes(tmp_path / f"{kind}-p1") == _dir_bytes(tmp_path / f"{kind}-p8"), kind


def test_summary_recompute_matches_emitted(tmp_path):
    cfg = make_config("learning", {"m": 32, "d": 2, "T": 60, "adversary": "mistake-tree"}, 4, 21)
    result = run_experiment(cfg, tmp_path / "run", parallelism=1)
    emitted = (tmp_path / "run" / "summary.json").read_text()
    assert summary_to_json(summarize(tmp_path / "run")) == emitted
    assert summary_to_json(result.summary) == emitted


def test_trial_error_is_recorded_and_run_continues(tmp_path, monkeypatch):
    real = harness._TRIAL_FNS["coupling"]

    def flaky(params, seed, index, keep_raw):
        if index == 2:
            raise RuntimeError("injected trial fault")
        return real(params, seed, index, keep_raw)

    monkeypatch.setitem(harness._TRIAL_FNS, "coupling", flaky)
    cfg = make_config("coupling", {"n": 4, "sigma": 0.5, "T": 2}, trials=5, seed=0)
    result = run_experiment(cfg, tmp_path / "run", parallelism=1)
    assert result.summary["completed"] == 4
    assert result.summary["errors"] == 1
    assert result.summary["error_trials"] == [2]
    rows = [json.loads(line) for line in (tmp_path / "run" / "metrics.jsonl").read_text().splitlines()]
    assert len(rows) == 5
    assert rows[2] == {"trial": 2, "error": "RuntimeError: injected trial fault"}
    assert "contained" in rows[3]
    # The combined trace file only holds the four completed trials.
    traces = (tmp_path / "run" / "traces.jsonl").read_text().strip().splitlines()
    assert len(traces) == 4
    # Any errored trial fails the acceptance check.
    failures = assert_report(cfg.kind, cfg.params, result.summary)
    assert any("errored" in msg for msg in failures)


def test_coupling_summary_has_failure_rate_with_ci(tmp_path):
    cfg = make_config("coupling", {"n": 8, "sigma": 0.25, "T": 4, "k": 8}, trials=200, seed=3)
    result = run_experiment(cfg, tmp_path / "run", parallelism=1)
    block = result.summary["containment_failure"]
    assert block["n"] == 200
    assert 0.0 <= block["ci_low"] <= block["rate"] <= block["ci_high"] <= 1.0
    assert block["count"] == 200 - result.summary["metrics"]["contained"]["count"]
    # 200 traces are far below the floor for stable chi-square diagnostics.
    assert "marginals" not in result.summary


def test_coupling_summary_marginals_block(tmp_path):
    cfg = make_config(
        "coupling", {"n": 4, "sigma": 0.5, "T": 2, "k": 4, "adversary": "last-value"},
        trials=10_000,
        seed=11,
    )
    result = run_experiment(cfg, tmp_path / "run", parallelism=1)
    block = result.summary["marginals"]
    assert block["n_traces"] == 10_000
    assert block["passed"] is True
    assert block["min_cell_pvalue"] > 0.001
    assert block["min_pair_pvalue"] > 0.001
    # Byte-identical recompute also covers the chi-square path.
    assert summary_to_json(summarize(tmp_path / "run")) == (tmp_path / "run" / "summary.json").read_text()


def test_no_traces_skips_raw_files(tmp_path):
    cfg = make_config("dispersion", {"T": 10, "ell": 2, "sigma": 0.2}, trials=3, seed=1)
    run_experiment(cfg, tmp_path / "run", parallelism=1, write_traces=False)
    names = {p.name for p in (tmp_path / "run").iterdir()}
    assert names == {"config.json", "metrics.jsonl", "summary.json"}


def test_dispersion_reports_csv_merges_one_header(tmp_path):
    cfg = make_config("dispersion", {"T": 10, "ell": 2, "sigma": 0.2}, trials=4, seed=1)
    run_experiment(cfg, tmp_path / "run", parallelism=1)
    lines = (tmp_path / "run" / "reports.csv").read_text().splitlines()
    assert lines[0] == "w,total,split,bound,pass"
    assert len(lines) == 5
    assert all(not line.startswith("w,") for line in lines[1:])
    assert {p.name for p in (tmp_path / "run").iterdir()} >= {
        "points_0000.jsonl",
        "points_0003.jsonl",
        "reports.csv",
    }


def test_compare_identical_runs_gives_ratio_exactly_one(tmp_path):
    cfg = make_config("discrepancy", {"algorithm": "random-sign", "n": 4, "T": 30}, 8, 2)
    run_experiment(cfg, tmp_path / "a", parallelism=1)
    run_experiment(cfg, tmp_path / "b", parallelism=1)
    report = compare_runs(tmp_path / "a", tmp_path / "b", "max_inf")
    assert report["ratio"] == 1.0
    assert report["median_a"] == report["median_b"]
    assert report["ci_low"] <= 1.0 <= report["ci_high"]
    # Same seed reproduces the interval; the report is deterministic.
    again = compare_runs(tmp_path / "a", tmp_path / "b", "max_inf")
    assert again == report


def test_compare_missing_metric_and_zero_median(tmp_path):
    cfg_a = make_config("discrepancy", {"algorithm": "random-sign", "n": 4, "T": 30}, 5, 2)
    cfg_b = make_config("learning", {"m": 16, "d": 2, "T": 30}, 5, 2)
    run_experiment(cfg_a, tmp_path / "a", parallelism=1)
    run_experiment(cfg_b, tmp_path / "b", parallelism=1)
    with pytest.raises(ValidationError, match="available"):
        compare_runs(tmp_path / "a", tmp_path / "b", "max_inf")
    with pytest.raises(ValidationError, match="available"):
        compare_runs(tmp_path / "a", tmp_path / "b", "no_such_metric")
    # "failed" is False in every random-sign trial, so its median is zero.
    with pytest.raises(ValidationError, match="zero"):
        compare_runs(tmp_path / "a", tmp_path / "a", "failed")


def test_assert_report_checks_by_kind():
    dispersion_summary = {
        "errors": 0,
        "error_trials": [],
        "completed": 100,
        "metrics": {"within_bound": {"count": 50, "n": 100, "rate": 0.5}},
    }
    failures = assert_report("dispersion", {"T": 10, "ell": 2, "sigma": 0.2}, dispersion_summary)
    assert len(failures) == 1 and "0.5" in failures[0]

    lowerbound_summary = {
        "errors": 0,
        "error_trials": [],
        "completed": 200,
        "metrics": {"ok": {"count": 190, "n": 200, "rate": 0.95}},
    }
    failures = assert_report("discrepancy-lowerbound", {"n": 4, "T": 500}, lowerbound_summary)
    assert len(failures) == 1 and "0.95" in failures[0]

    learning_params = {"T": 1024, "d": 2, "sigma": 1 / 64, "adversary": "mistake-tree"}
    floor = 0.1 * math.sqrt(2 * 1024 * math.log2(32))
    learning_summary = {
        "errors": 0,
        "error_trials": [],
        "completed": 10,
        "metrics": {"regret": {"mean": floor / 2}},
    }
    failures = assert_report("learning", learning_params, learning_summary)
    assert len(failures) == 1 and "below floor" in failures[0]
    learning_summary["metrics"]["regret"]["mean"] = floor * 2
    assert assert_report("learning", learning_params, learning_summary) == []


def test_cli_run_assert_and_exit_codes(tmp_path):
    out = tmp_path / "run"
    code = cli_main(
        [
            "coupling",
            "--param", "n=8",
            "--param", "sigma=0.25",
            "--param", "T=4",
            "--trials", "50",
            "--seed", "3",
            "--out-dir", str(out),
            "--assert",
        ]
    )
    assert code == 0
    assert (out / "summary.json").is_file()

    # Unknown algorithm is a config error.
    assert cli_main(["discrepancy", "--param", "algorithm=bogus", "--param", "n=4", "--param", "T=8"]) == 1
    # Bad flag usage is also a config error, not an argparse exit 2.
    assert cli_main(["coupling", "--trials", "not-a-number"]) == 1
    assert cli_main(["coupling", "--param", "malformed"]) == 1


def test_cli_config_file_with_overrides(tmp_path):
    cfg_file = tmp_path / "cfg.json"
    cfg_file.write_text(
        json.dumps(
            {
                "kind": "learning",
                "params": {"m": 16, "d": 2, "T": 30, "adversary": "realizable"},
                "trials": 2,
                "seed": 7,
            }
        )
    )
    out = tmp_path / "run"
    code = cli_main(
        ["learning", "--config", str(cfg_file), "--trials", "3", "--out-dir", str(out)]
    )
    assert code == 0
    stored = json.loads((out / "config.json").read_text())
    assert stored["trials"] == 3  # flag override wins
    assert stored["seed"] == 7  # file value survives
    assert stored["params"]["adversary"] == "realizable"

    # Mismatched kind in the file is a config error.
    assert cli_main(["dispersion", "--config", str(cfg_file)]) == 1


def test_cli_compare_ratio_limits(tmp_path):
    cfg = make_config("dispersion", {"T": 10, "ell": 2, "sigma": 0.2}, 6, 1)
    run_experiment(cfg, tmp_path / "a", parallelism=1)
    run_experiment(cfg, tmp_path / "b", parallelism=1)
    base = ["compare", str(tmp_path / "a"), str(tmp_path / "b"), "--metric", "total"]
    assert cli_main(base) == 0
    assert cli_main(base + ["--max-ratio", "1e-9"]) == 2
    assert cli_main(base + ["--min-ratio", "0.5", "--max-ratio", "2.0"]) == 0
    assert cli_main(["compare", str(tmp_path / "a"), str(tmp_path / "missing"), "--metric", "total"]) == 1


def test_cli_env_var_default_out_dir(tmp_path, monkeypatch):
    monkeypatch.setenv("SMOOTHLAB_OUT_DIR", str(tmp_path / "base"))
    code = cli_main(
        ["dispersion", "--param", "T=10", "--param", "ell=2", "--param", "sigma=0.2", "--seed", "4"]
    )
    assert code == 0
    assert (tmp_path / "base" / "dispersion-seed4" / "summary.json").is_file()
    assert default_run_dir("coupling", 9, base="elsewhere") == "elsewhere/coupling-seed9"
