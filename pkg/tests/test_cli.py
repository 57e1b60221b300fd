"""End-to-end CLI runs: artifacts, config handling, replay, exit codes."""

import csv
import json
from pathlib import Path

import pytest

from curvnoise.cli import (
    EXIT_CONFIG,
    EXIT_INFEASIBLE,
    EXIT_OK,
    main,
    one_sig,
)

TINY_TABLE_CONFIG = """
d = 6
betas = [1]
epsilons = [1.0]
alpha_lo = 1e-3
alpha_hi = 1.0
alpha_per_decade = 10
"""


def read_csv(path):
    with open(path, newline="") as fh:
        return list(csv.reader(fh))


def write_config(tmp_path, text, name="config.toml"):
    path = tmp_path / name
    path.write_text(text)
    return str(path)


class TestOneSig:
    def test_rounds_to_one_significant_digit(self):
        assert one_sig(0.0046) == pytest.approx(5e-3)
        assert one_sig(2.3e-4) == pytest.approx(2e-4)
        assert one_sig(0.96) == pytest.approx(1.0)
        assert one_sig(0.0) == 0.0


class TestTableCommands:
    def test_table1_artifacts(self, tmp_path):
        cfg = write_config(tmp_path, TINY_TABLE_CONFIG)
        out = tmp_path / "t1"
        assert main(["table1", "--config", cfg, "--out", str(out)]) == EXIT_OK
        rows = read_csv(out / "table1.csv")
        assert rows[0][:4] == ["eps", "method", "beta", "status"]
        assert len(rows) == 4  # header + sg/newton/polyak
        md = (out / "table1.md").read_text()
        assert "| eps | method |" in md
        manifest = json.loads((out / "manifest.json").read_text())
        assert manifest["experiment"] == "table1"
        assert manifest["config"]["d"] == 6
        assert manifest["scan_engine"] in ("cython", "numpy")

    def test_table2_reports_one_digit_stepsizes(self, tmp_path):
        cfg = write_config(tmp_path, TINY_TABLE_CONFIG)
        out = tmp_path / "t2"
        assert main(["table2", "--config", cfg, "--out", str(out)]) == EXIT_OK
        header = read_csv(out / "table2.csv")[0]
        assert "value_1sig" in header

    def test_theta0_mode_flag_lands_in_manifest(self, tmp_path):
        cfg = write_config(tmp_path, TINY_TABLE_CONFIG)
        out = tmp_path / "t1"
        code = main(
            [
                "table1",
                "--config",
                cfg,
                "--out",
                str(out),
                "--theta0-mode",
                "unit-subopt-uniform",
            ]
        )
        assert code == EXIT_OK
        manifest = json.loads((out / "manifest.json").read_text())
        assert manifest["config"]["theta0_mode"] == "unit-subopt-uniform"


class TestOtherCommands:
    def test_limit_cycles(self, tmp_path):
        cfg = write_config(
            tmp_path,
            """
[limit-cycles]
d = 4
betas = [0]
alphas = [1e-3]
gammas = [0.0, 0.5]
""",
        )
        out = tmp_path / "lc"
        assert main(["limit-cycles", "--config", cfg, "--out", str(out)]) == EXIT_OK
        rows = read_csv(out / "limit_cycles.csv")
        assert len(rows) == 4  # header + sg + two polyak rows
        diffs = [float(r[-1]) for r in rows[1:]]
        assert max(diffs) < 1e-8
        assert (out / "limit_cycles_summary.txt").exists()

    def test_bounds(self, tmp_path):
        cfg = write_config(tmp_path, "[bounds]\ntrials = 5\n")
        out = tmp_path / "b"
        assert main(["bounds", "--config", cfg, "--out", str(out), "--seed", "1"]) == EXIT_OK
        rows = read_csv(out / "bounds.csv")
        assert len(rows) == 1 + 5 * 2  # both directions per trial
        slack_cols = rows[0].index("slack_FH")
        for row in rows[1:]:
            assert min(float(v) for v in row[slack_cols:]) > -1e-9

    def test_infomat(self, tmp_path):
        cfg = write_config(tmp_path, "[infomat]\nn = 20\n")
        out = tmp_path / "im"
        assert main(["infomat", "--config", cfg, "--out", str(out)]) == EXIT_OK
        doc = json.loads((out / "infomat.json").read_text())
        assert set(doc) >= {"H", "F", "C", "S", "N", "dim"}
        assert doc["N"] == 20
        assert (out / "infomat_summary.csv").exists()

    def test_similarity(self, tmp_path):
        cfg = write_config(tmp_path, "[similarity]\nn = 500\nsigma2 = 0.25\n")
        out = tmp_path / "sim"
        assert main(["similarity", "--config", cfg, "--out", str(out)]) == EXIT_OK
        rows = read_csv(out / "similarity.csv")
        row_ch = next(r for r in rows[1:] if r[0] == "C" and r[1] == "H")
        assert float(row_ch[2]) == pytest.approx(0.25, abs=1e-9)
        assert float(row_ch[3]) == pytest.approx(1.0, abs=1e-9)

    def test_gap(self, tmp_path):
        cfg = write_config(
            tmp_path,
            """
[gap]
corruption_levels = [0.0, 0.6]
seeds_per_level = 1
n_train = 20
n_test = 40
steps = 60
""",
        )
        out = tmp_path / "gap"
        assert main(["gap", "--config", cfg, "--out", str(out), "--seed", "2"]) == EXIT_OK
        rows = read_csv(out / "gap.csv")
        assert len(rows) == 3
        assert (out / "gap_spearman.json").exists()
        for crit in ("tic", "tic_fisher", "trace_ratio", "flatness", "sensitivity"):
            assert (out / f"plotdata_{crit}_vs_gap.tsv").exists()

    def test_gap_cutoff_flag(self, tmp_path):
        cfg = write_config(
            tmp_path,
            "[gap]\ncorruption_levels = [0.0]\nseeds_per_level = 1\n"
            "n_train = 15\nn_test = 20\nsteps = 30\n",
        )
        out = tmp_path / "gap"
        code = main(
            ["gap", "--config", cfg, "--out", str(out), "--cutoff", "1e-2"]
        )
        assert code == EXIT_OK
        manifest = json.loads((out / "manifest.json").read_text())
        assert manifest["config"]["rel_cutoff"] == pytest.approx(1e-2)


class TestReplay:
    def test_manifest_replay_reproduces_outputs(self, tmp_path):
        cfg = write_config(
            tmp_path,
            "[limit-cycles]\nd = 4\nbetas = [0]\nalphas = [1e-3]\ngammas = [0.5]\n",
        )
        out = tmp_path / "lc"
        assert main(["limit-cycles", "--config", cfg, "--out", str(out)]) == EXIT_OK
        first = (out / "limit_cycles.csv").read_bytes()
        assert main(["--from-manifest", str(out / "manifest.json")]) == EXIT_OK
        assert (out / "limit_cycles.csv").read_bytes() == first

    def test_gap_replay(self, tmp_path):
        cfg = write_config(
            tmp_path,
            "[gap]\ncorruption_levels = [0.3]\nseeds_per_level = 1\n"
            "n_train = 15\nn_test = 20\nsteps = 30\n",
        )
        out = tmp_path / "gap"
        assert main(["gap", "--config", cfg, "--out", str(out), "--seed", "5"]) == EXIT_OK
        first = (out / "gap.csv").read_bytes()
        assert main(["--from-manifest", str(out / "manifest.json")]) == EXIT_OK
        assert (out / "gap.csv").read_bytes() == first


class TestExitCodes:
    def test_no_subcommand_prints_help(self, capsys):
        assert main([]) == EXIT_CONFIG
        assert "usage" in capsys.readouterr().out

    def test_unreadable_config_is_config_error(self, tmp_path, capsys):
        bad = tmp_path / "broken.toml"
        bad.write_text("this is not { toml")
        out = tmp_path / "t"
        out.mkdir()
        code = main(["table1", "--config", str(bad), "--out", str(out)])
        assert code == EXIT_CONFIG
        record = json.loads((out / "error.json").read_text())
        assert record["error"] == "config"

    def test_unknown_gamma_mode_is_config_error(self, tmp_path):
        cfg = write_config(tmp_path, 'gamma_mode = "sideways"\n')
        assert main(["table1", "--config", cfg, "--out", str(tmp_path / "t")]) == EXIT_CONFIG

    def test_unreachable_grid_is_infeasible(self, tmp_path):
        # Every stepsize on this grid is unstable for H_ii = i^2, d = 6.
        cfg = write_config(
            tmp_path,
            """
d = 6
betas = [1]
epsilons = [0.001]
alpha_lo = 1.0
alpha_hi = 2.0
alpha_per_decade = 10
""",
        )
        out = tmp_path / "t"
        out.mkdir()
        code = main(["table1", "--config", cfg, "--out", str(out)])
        assert code == EXIT_INFEASIBLE
        record = json.loads((out / "error.json").read_text())
        assert record["error"] == "infeasible"
