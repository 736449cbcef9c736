import json

import numpy as np
import pytest

from chunkmask.cli import main
from chunkmask.toyworld import ToyTaskSpec, generate_group, initial_policy
from chunkmask.traces import TraceRecord, write_traces


@pytest.fixture
def trace_file(tmp_path):
    spec = ToyTaskSpec()
    policy = initial_policy(spec)
    rng = np.random.default_rng(3)
    records = []
    for t in range(4):
        group = generate_group(spec, policy, 10, rng)
        for traj in group.trajectories:
            records.append(TraceRecord.from_trajectory(traj, task_id=f"task-{t}"))
    path = tmp_path / "traces.jsonl"
    write_traces(path, records)
    return path


class TestTrain:
    def test_writes_metrics_csv(self, tmp_path, capsys):
        out = tmp_path / "metrics.csv"
        code = main(["train", "--mode", "pcm", "--steps", "6",
                     "--out", str(out)])
        assert code == 0
        lines = out.read_text().strip().splitlines()
        assert lines[0].startswith("step,success_rate,")
        assert len(lines) == 7
        assert "final_success" in capsys.readouterr().out

    def test_mode_spellings_with_hyphens(self, tmp_path):
        for mode in ("vanilla", "random-mask", "full-mask"):
            out = tmp_path / f"{mode}.csv"
            assert main(["train", "--mode", mode, "--steps", "3",
                         "--out", str(out)]) == 0

    def test_multi_seed_averaging(self, tmp_path):
        out = tmp_path / "metrics.csv"
        code = main(["train", "--steps", "3", "--seeds", "2",
                     "--out", str(out)])
        assert code == 0
        assert len(out.read_text().strip().splitlines()) == 4

    def test_invalid_group_size_exits_1(self, tmp_path):
        code = main(["train", "--group-size", "1", "--steps", "2",
                     "--out", str(tmp_path / "m.csv")])
        assert code == 1


class TestAnalyze:
    def test_reports_scores_and_masks(self, trace_file, capsys):
        assert main(["analyze", str(trace_file)]) == 0
        report = json.loads(capsys.readouterr().out)
        assert set(report["keep_probs"]) == {
            "active_grip", "pre_grasp", "release_ramp", "approach", "tail"}
        assert len(report["groups"]) == 4
        for group in report["groups"]:
            if "skipped" not in group:
                assert len(group["masks"]) == 10
                assert all(len(m) == 12 for m in group["masks"])

    def test_missing_file_exits_1(self, capsys):
        assert main(["analyze", "/nonexistent/traces.jsonl"]) == 1
        assert "error:" in capsys.readouterr().err

    def test_malformed_lines_warn_but_continue(self, trace_file, capsys):
        with open(trace_file, "a") as fh:
            fh.write("not json\n")
        assert main(["analyze", str(trace_file)]) == 0
        captured = capsys.readouterr()
        assert "malformed" in captured.err


class TestAllocate:
    def test_worked_example(self, capsys):
        code = main(["allocate", "--counts", "10,5", "--variances", "4,1",
                     "--budget", "6", "--integer"])
        assert code == 0
        report = json.loads(capsys.readouterr().out)
        assert report["budgets"] == [4.8, 1.2]
        assert report["speedup"] == pytest.approx(1.36)
        assert report["integer_budgets"] == [5, 1]

    def test_mismatched_lengths_exit_1(self, capsys):
        assert main(["allocate", "--counts", "1,2", "--variances", "4",
                     "--budget", "3"]) == 1


class TestSweepBudget:
    def test_emits_curve_and_knee(self, trace_file, capsys):
        assert main(["sweep-budget", str(trace_file)]) == 0
        report = json.loads(capsys.readouterr().out)
        assert report["knee_defined"]
        assert 0.0 < report["knee_fraction"] < 1.0
        assert len(report["curve"]) == 4 * 10 * 16


class TestVerify:
    def test_passes_with_exit_0(self, capsys):
        assert main(["verify", "--fast"]) == 0
        out = capsys.readouterr().out
        assert out.count("PASS") == 6

    def test_zero_budget_exits_1(self, capsys):
        assert main(["verify", "--budget", "0"]) == 1

    def test_failure_exits_2(self, monkeypatch, capsys):
        from chunkmask import cli
        from chunkmask.verify import CheckResult

        monkeypatch.setattr(
            cli, "run_checks",
            lambda **kwargs: [CheckResult("stub", False, "forced failure")])
        assert main(["verify"]) == 2
        assert "FAIL" in capsys.readouterr().out
