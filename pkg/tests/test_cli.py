import json

import numpy as np
import pytest

from rankscope import cli
from rankscope.completion import random_low_rank_matrix
from rankscope.patterns import (
    bernoulli_pattern,
    observed_from_array,
    per_column_pattern,
    read_pattern,
    read_values,
    write_pattern,
    write_values,
)


@pytest.fixture
def pattern_file(tmp_path):
    path = tmp_path / "pattern.txt"
    write_pattern(bernoulli_pattern((5, 5), 0.8, seed=3), path)
    return path


@pytest.fixture
def cube_file(tmp_path):
    path = tmp_path / "cube.txt"
    write_pattern(bernoulli_pattern((3, 3, 3), 0.9, seed=4), path)
    return path


@pytest.fixture
def values_file(tmp_path):
    gt = random_low_rank_matrix(20, 25, 2, seed=6)
    pat = bernoulli_pattern((20, 25), 0.85, seed=7)
    path = tmp_path / "values.txt"
    write_values(observed_from_array(gt.array, pat), path)
    return path


class TestParsing:
    def test_unknown_command_exits_one(self, capsys):
        assert cli.main(["nonsense"]) == 1
        assert "error" in capsys.readouterr().err

    def test_missing_required_flag_exits_one(self, capsys):
        assert cli.main(["gen-pattern", "--dims", "3", "3"]) == 1

    def test_float_grid_inclusive_endpoint(self):
        assert cli._parse_float_grid("0.1:0.3:0.1") == [0.1, 0.2, 0.3]
        assert cli._parse_float_grid("0.54") == [0.54]

    def test_float_grid_rejects_bad_step(self):
        with pytest.raises(cli.CliError):
            cli._parse_float_grid("0.1:0.3:-0.1")
        with pytest.raises(cli.CliError):
            cli._parse_float_grid("0.1:0.2")

    def test_int_grid_forms(self):
        assert cli._parse_int_grid("4") == [4]
        assert cli._parse_int_grid("1:5") == [1, 2, 3, 4, 5]
        assert cli._parse_int_grid("1:8:3") == [1, 4, 7]

    def test_workers_env(self, monkeypatch):
        monkeypatch.delenv("RANKSCOPE_THREADS", raising=False)
        assert cli._workers() == 1
        monkeypatch.setenv("RANKSCOPE_THREADS", "4")
        assert cli._workers() == 4
        monkeypatch.setenv("RANKSCOPE_THREADS", "zero")
        with pytest.raises(cli.CliError):
            cli._workers()


class TestGenPattern:
    def test_writes_readable_pattern(self, tmp_path):
        out = tmp_path / "p.txt"
        assert cli.main(["gen-pattern", "--dims", "4", "6", "--p", "0.5",
                         "--seed", "11", "--out", str(out)]) == 0
        pat = read_pattern(out)
        assert pat.dims == (4, 6)
        assert out.read_text().startswith("# command=gen-pattern")

    def test_per_column_mode(self, tmp_path):
        out = tmp_path / "p.txt"
        assert cli.main(["gen-pattern", "--dims", "6", "4", "--per-column",
                         "2", "--seed", "1", "--out", str(out)]) == 0
        pat = read_pattern(out)
        assert pat.n_observed == 8

    def test_both_modes_rejected(self, tmp_path, capsys):
        out = tmp_path / "p.txt"
        assert cli.main(["gen-pattern", "--dims", "4", "4", "--p", "0.5",
                         "--per-column", "2", "--seed", "1",
                         "--out", str(out)]) == 1

    def test_rerun_is_byte_identical(self, tmp_path):
        out = tmp_path / "p.txt"
        argv = ["gen-pattern", "--dims", "5", "5", "--p", "0.6",
                "--seed", "2", "--out", str(out)]
        assert cli.main(argv) == 0
        first = out.read_bytes()
        assert cli.main(argv) == 0
        assert out.read_bytes() == first


class TestBuildConstraints:
    def test_single_model(self, pattern_file, tmp_path):
        out = tmp_path / "c.txt"
        assert cli.main(["build-constraints", "--pattern", str(pattern_file),
                         "--rank", "1", "--out", str(out)]) == 0
        text = out.read_text()
        assert "model: single" in text and "K:" in text

    def test_tucker_writes_anchor_sidecar(self, cube_file, tmp_path):
        out = tmp_path / "c.txt"
        assert cli.main(["build-constraints", "--pattern", str(cube_file),
                         "--model", "tucker", "--rank-vec", "2",
                         "--split", "2", "--out", str(out)]) == 0
        side = tmp_path / "c.anchor.txt"
        assert side.exists()
        anchor_pat = read_pattern(side)
        assert anchor_pat.n_observed == 3 * 2

    def test_multi_needs_second_pattern(self, pattern_file, tmp_path, capsys):
        out = tmp_path / "c.txt"
        assert cli.main(["build-constraints", "--pattern", str(pattern_file),
                         "--model", "multi", "--rank-vec", "1,1",
                         "--out", str(out)]) == 1

    def test_oversized_rank_reports_validation_error(self, pattern_file,
                                                     tmp_path, capsys):
        out = tmp_path / "c.txt"
        assert cli.main(["build-constraints", "--pattern", str(pattern_file),
                         "--rank", "4", "--out", str(out)]) == 1
        assert "fewer than rank" in capsys.readouterr().err


class TestCertify:
    def test_json_to_stdout(self, pattern_file, capsys):
        assert cli.main(["certify", "--pattern", str(pattern_file),
                         "--rank", "1"]) == 0
        payload = json.loads(capsys.readouterr().out)
        assert payload["config"]["command"] == "certify"
        assert payload["certificate"]["rank"] == {"model": "single", "r": 1}

    def test_budget_exhaustion_exit_two(self, tmp_path):
        pat = per_column_pattern((8, 20), 4, seed=9)
        path = tmp_path / "p.txt"
        write_pattern(pat, path)
        out = tmp_path / "cert.json"
        assert cli.main(["certify", "--pattern", str(path), "--rank", "3",
                         "--budget", "1", "--out", str(out)]) == 2
        cert = json.loads(out.read_text())["certificate"]
        assert cert["in_s"] is None and cert["search_exhausted"] is True

    def test_multi_round_trip(self, tmp_path):
        p1 = tmp_path / "a.txt"
        p2 = tmp_path / "b.txt"
        write_pattern(bernoulli_pattern((5, 4), 0.95, seed=1), p1)
        write_pattern(bernoulli_pattern((5, 4), 0.95, seed=2), p2)
        out = tmp_path / "cert.json"
        assert cli.main(["certify", "--pattern", str(p1), "--pattern2",
                         str(p2), "--model", "multi", "--rank-vec", "1,1,2",
                         "--out", str(out)]) == 0
        cert = json.loads(out.read_text())["certificate"]
        assert cert["model"] == "multi"

    def test_rerun_is_byte_identical(self, pattern_file, tmp_path):
        out = tmp_path / "cert.json"
        argv = ["certify", "--pattern", str(pattern_file), "--rank", "2",
                "--out", str(out)]
        assert cli.main(argv) == 0
        first = out.read_bytes()
        assert cli.main(argv) == 0
        assert out.read_bytes() == first


class TestMaxRank:
    def test_reports_rank(self, pattern_file, capsys):
        assert cli.main(["max-rank", "--pattern", str(pattern_file)]) == 0
        payload = json.loads(capsys.readouterr().out)
        assert payload["rank"] >= 1 and payload["exhausted"] is False


class TestThreshold:
    def test_single(self, capsys):
        assert cli.main(["threshold", "--model", "single", "--dims", "300",
                         "15000", "--rank", "10", "--epsilon", "0.1"]) == 0
        payload = json.loads(capsys.readouterr().out)
        assert payload["preconditions_ok"] is True
        assert 0 < payload["p_threshold"] < 1

    def test_cp_requires_equal_dims(self, capsys):
        assert cli.main(["threshold", "--model", "cp", "--dims", "300",
                         "300", "200", "--rank", "3",
                         "--epsilon", "0.1"]) == 1

    def test_tucker_flag_surfaces(self, capsys):
        assert cli.main(["threshold", "--model", "tucker", "--dims", "20",
                         "20", "4", "4", "--split", "2", "--rank-vec", "2,2",
                         "--epsilon", "0.1"]) == 0
        payload = json.loads(capsys.readouterr().out)
        assert payload["preconditions"]["budget_squares_within_product"] is False


class TestMinEpsilon:
    def test_feasible(self, capsys):
        assert cli.main(["min-epsilon", "--n1", "300", "--p", "0.54",
                         "--rank", "10"]) == 0
        payload = json.loads(capsys.readouterr().out)
        assert payload["feasible"] is True and 0 < payload["epsilon"] < 1

    def test_infeasible_still_exits_zero(self, capsys):
        assert cli.main(["min-epsilon", "--n1", "300", "--p", "0.54",
                         "--rank", "45"]) == 0
        payload = json.loads(capsys.readouterr().out)
        assert payload["feasible"] is False
        assert payload["reason"] == "rank_branch_blocks"


class TestHeatmap:
    def test_csv_with_png_sidecar(self, tmp_path):
        out = tmp_path / "hm.csv"
        assert cli.main(["heatmap", "--n1", "60", "--n2", "1200",
                         "--p-grid", "0.6:0.8:0.1", "--r-grid", "1:3",
                         "--out", str(out)]) == 0
        lines = out.read_text().splitlines()
        assert lines[1] == "p,r,floor"
        assert len(lines) == 2 + 3 * 3
        assert (tmp_path / "hm.png").exists()

    def test_no_plot_skips_png(self, tmp_path):
        out = tmp_path / "hm.csv"
        assert cli.main(["heatmap", "--n1", "60", "--n2", "1200",
                         "--p-grid", "0.7", "--r-grid", "1:2",
                         "--no-plot", "--out", str(out)]) == 0
        assert not (tmp_path / "hm.png").exists()

    def test_json_format(self, tmp_path):
        out = tmp_path / "hm.json"
        assert cli.main(["heatmap", "--n1", "60", "--n2", "1200",
                         "--p-grid", "0.7", "--r-grid", "1:2",
                         "--format", "json", "--no-plot",
                         "--out", str(out)]) == 0
        payload = json.loads(out.read_text())
        assert payload["p_grid"] == [0.7]

    def test_rerun_binary_identical_including_png(self, tmp_path):
        out = tmp_path / "hm.csv"
        argv = ["heatmap", "--n1", "60", "--n2", "1200", "--p-grid",
                "0.7:0.8:0.1", "--r-grid", "1:2", "--out", str(out)]
        assert cli.main(argv) == 0
        csv1 = out.read_bytes()
        png1 = (tmp_path / "hm.png").read_bytes()
        assert cli.main(argv) == 0
        assert out.read_bytes() == csv1
        assert (tmp_path / "hm.png").read_bytes() == png1


class TestComplete:
    def test_writes_full_values_file(self, values_file, tmp_path, capsys):
        out = tmp_path / "done.txt"
        assert cli.main(["complete", "--values", str(values_file),
                         "--max-iterations", "3000", "--out", str(out)]) == 0
        payload = json.loads(capsys.readouterr().out)
        assert payload["converged"] is True
        data = read_values(out)
        assert data.pattern.n_observed == 20 * 25

    def test_solver_flags_respected(self, values_file, tmp_path, capsys):
        out = tmp_path / "done.txt"
        assert cli.main(["complete", "--values", str(values_file),
                         "--max-iterations", "2", "--out", str(out)]) == 0
        payload = json.loads(capsys.readouterr().out)
        assert payload["iterations"] == 2 and payload["converged"] is False


class TestEstimate:
    def test_deterministic(self, values_file, tmp_path):
        out = tmp_path / "est.json"
        assert cli.main(["estimate", "--values", str(values_file),
                         "--max-iterations", "4000", "--out", str(out)]) == 0
        payload = json.loads(out.read_text())
        assert payload["certificate"]["rank"]["r"] == 2
        assert payload["certificate"]["claim"] == "upper_bound_with_prob_one"

    def test_probabilistic(self, values_file, capsys):
        assert cli.main(["estimate", "--values", str(values_file),
                         "--mode", "probabilistic", "--p", "0.85",
                         "--epsilon", "0.1", "--max-iterations", "4000"]) == 0
        payload = json.loads(capsys.readouterr().out)
        assert payload["certificate"]["p_threshold"] is not None

    def test_partial_completion_file_rejected(self, values_file, tmp_path,
                                              capsys):
        assert cli.main(["estimate", "--values", str(values_file),
                         "--model", "tt", "--completion",
                         str(values_file)]) == 1
        assert "every cell" in capsys.readouterr().err


class TestGap:
    def test_outputs_and_sidecars(self, tmp_path):
        out = tmp_path / "gap.csv"
        assert cli.main(["gap", "--n1", "15", "--n2", "30", "--r-grid",
                         "1:2", "--p", "0.9", "--runs", "2", "--seed", "5",
                         "--out", str(out)]) == 0
        lines = out.read_text().splitlines()
        assert lines[1] == "run,seed,r,r_hat,gap,converged"
        assert len(lines) == 2 + 2 * 2
        summary = json.loads((tmp_path / "gap.summary.json").read_text())
        assert [row["r"] for row in summary["rows"]] == [1, 2]
        assert (tmp_path / "gap.png").exists()

    def test_rerun_is_byte_identical(self, tmp_path):
        out = tmp_path / "gap.csv"
        argv = ["gap", "--n1", "15", "--n2", "30", "--r-grid", "1",
                "--p", "0.9", "--runs", "2", "--seed", "6", "--no-plot",
                "--out", str(out)]
        assert cli.main(argv) == 0
        first = out.read_bytes()
        summary1 = (tmp_path / "gap.summary.json").read_bytes()
        assert cli.main(argv) == 0
        assert out.read_bytes() == first
        assert (tmp_path / "gap.summary.json").read_bytes() == summary1
