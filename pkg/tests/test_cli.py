"""
End-to-end tests for the oligodyn command line.

Tests the full flow: flags or config file -> solver -> CSV/JSON artifacts,
with the exit code and `error:` line of every failure class.
"""

import json
import sys
from pathlib import Path

import numpy as np
import pandas as pd
import pytest

# Add src to path for imports
sys.path.insert(0, str(Path(__file__).parent.parent))

from src.cli.config import read_config_file  # noqa: E402
from src.cli.emit import table_csv  # noqa: E402
from src.cli.oligodyn import COMMANDS, build_parser, run  # noqa: E402
from src.core.errors import ConvergenceFailure  # noqa: E402

CONFIGS_DIR = Path(__file__).parent.parent / "configs"

LBD_ARGS = ["--m", "1", "--costs", "1,0.5", "--delta", "0.9", "--dist", "normal"]


def error_lines(err: str):
    return [line for line in err.splitlines() if line.startswith("error: ")]


class TestSolveCommands:

    def test_switching_symmetric(self, capsys):
        assert run(["solve-switching", "--s", "0", "--delta", "0", "--dist", "normal"]) == 0
        report = json.loads(capsys.readouterr().out)
        eq = report["equilibrium"]
        assert eq["x"] == 0.0
        assert eq["p1"] == pytest.approx(1.2533141, abs=1e-6)
        assert eq["p0"] == pytest.approx(1.2533141, abs=1e-6)
        assert report["meta"]["tool"] == "oligodyn"

    def test_lbd_table(self, tmp_path, capsys):
        out = tmp_path / "eq.csv"
        assert run(["solve-lbd", *LBD_ARGS, "--out", str(out)]) == 0
        table = pd.read_csv(out)
        assert out.read_text().splitlines()[0] == "i,j,P,p,q,v,w,W,C,residual"
        assert "e-" not in out.read_text() and "e+" not in out.read_text()
        assert len(table) == 4
        row = table[(table.i == 1) & (table.j == 0)].iloc[0]
        assert row.P < 0
        companion = tmp_path / "eq_report.json"
        assert json.loads(companion.read_text())["equilibrium"]["P10"] < 0

    @pytest.mark.parametrize('method', ["two-step", "oracle"])
    def test_lbd_methods(self, method, tmp_path, capsys):
        assert run(["solve-lbd", *LBD_ARGS, "--method", method, "--out-dir", str(tmp_path)]) == 0
        report = json.loads((tmp_path / "report.json").read_text())
        assert report["method"] == method
        if method == "oracle":
            assert report["oracle_gap"] < 1e-6
        else:
            assert report["two_step"]["did"] == pytest.approx(report["two_step"]["W10"], abs=1e-10)

    def test_sweep_switching(self, tmp_path, capsys):
        code = run(["sweep-switching", "--delta", "0.9", "--s-max", "10", "--s-step", "0.25",
                    "--out-dir", str(tmp_path)])
        assert code == 0
        table = pd.read_csv(tmp_path / "sweep.csv")
        assert list(table.columns) == ["s", "x", "q1", "p1", "p0", "pbar", "V", "dpbar_ds"]
        assert len(table) == 41
        summary = json.loads((tmp_path / "sweep.json").read_text())["summary"]
        assert summary["s_prime"] is not None
        assert {"s_prime", "s_doubleprime", "sign_changes"} <= set(summary)

    def test_sweep_hypercomp(self, tmp_path, capsys):
        assert run(["sweep-hypercomp", "--delta", "0.9", "--out-dir", str(tmp_path)]) == 0
        report = json.loads((tmp_path / "hypercomp.json").read_text())
        assert report["v00_increasing"]
        assert set(report["effects"]) == {"supertrap"}

    def test_predation(self, capsys):
        assert run(["predation", "--costs", "1,0.5", "--delta", "0.9", "--v-mono-factor", "3"]) == 0
        report = json.loads(capsys.readouterr().out)
        assert report["predation"] is True
        assert {"W_tilde", "P_tilde", "P_hat", "predation", "entry", "below_mc", "p_tilde_10"} <= set(report)

    def test_predation_needs_one_monopoly_value(self, capsys):
        code = run(["predation", "--costs", "1,0.5", "--delta", "0.9", "--v-mono", "20", "--v-mono-factor", "3"])
        assert code == 2

    def test_simulate_with_trajectories(self, tmp_path, capsys):
        code = run(["simulate", *LBD_ARGS, "--periods", "5", "--replications", "40", "--seed", "3",
                    "--trajectories", "--out-dir", str(tmp_path)])
        assert code == 0
        frame = pd.read_csv(tmp_path / "trajectories.csv")
        assert list(frame.columns) == ["rep", "period", "i", "j", "winner"]
        assert len(frame) == 200
        report = json.loads((tmp_path / "simulation.json").read_text())
        assert "dominance" in report
        assert np.array(report["solved_q"]).shape == (2, 2)

    def test_validate_builtin(self, tmp_path, capsys):
        assert run(["validate-dist", "--dist", "logistic", "--out-dir", str(tmp_path)]) == 0
        assert json.loads((tmp_path / "violations.json").read_text())["valid"] is True

    def test_validate_bad_table(self, tmp_path, capsys):
        x = np.linspace(-8, 8, 321)
        path = tmp_path / "skewed.csv"
        pd.DataFrame({"x": x, "density": np.exp(-0.5 * (x - 0.5) ** 2)}).to_csv(path, index=False)
        code = run(["validate-dist", "--dist", str(path), "--out-dir", str(tmp_path / "out")])
        assert code == 2
        report = json.loads((tmp_path / "out" / "violations.json").read_text())
        assert not report["valid"]
        assert "symmetry" in {v["check"] for v in report["violations"]}
        assert len(error_lines(capsys.readouterr().err)) == 1


class TestExitCodes:

    def test_invalid_delta(self, capsys):
        assert run(["solve-lbd", "--m", "1", "--costs", "1,0.5", "--delta", "1.0"]) == 2
        lines = error_lines(capsys.readouterr().err)
        assert len(lines) == 1
        assert "ParameterError" in lines[0]

    def test_unknown_flag(self, capsys):
        assert run(["solve-lbd", *LBD_ARGS, "--bogus", "1"]) == 2
        assert len(error_lines(capsys.readouterr().err)) == 1

    def test_abbreviated_flag_rejected(self, capsys):
        assert run(["solve-switching", "--s", "1", "--del", "0.5"]) == 2

    def test_missing_required(self, capsys):
        assert run(["solve-lbd", "--m", "1"]) == 2
        assert "--costs" in error_lines(capsys.readouterr().err)[0]

    def test_convergence_failure(self, capsys, mocker):
        mocker.patch(
            'src.cli.oligodyn.solve_backward',
            side_effect=ConvergenceFailure("stuck", state=(1, 0))
        )
        assert run(["solve-lbd", *LBD_ARGS]) == 3
        line = error_lines(capsys.readouterr().err)[0]
        assert "ConvergenceFailure" in line and "state=[1, 0]" in line

    def test_oracle_iteration_cap(self, capsys):
        assert run(["solve-lbd", *LBD_ARGS, "--method", "oracle", "--oracle-max-iter", "2"]) == 3

    def test_bracketing_failure(self, capsys):
        assert run(["solve-switching", "--s", "5", "--delta", "0", "--max-bracket", "0.5"]) == 4
        assert "NoSignChange" in error_lines(capsys.readouterr().err)[0]

    def test_unwritable_directory(self, tmp_path, capsys):
        blocker = tmp_path / "file.txt"
        blocker.write_text("not a directory")
        assert run(["solve-lbd", *LBD_ARGS, "--out-dir", str(blocker / "sub")]) == 5
        assert "OutputError" in error_lines(capsys.readouterr().err)[0]

    def test_unwritable_out(self, tmp_path, capsys):
        blocker = tmp_path / "file.txt"
        blocker.write_text("not a directory")
        assert run(["solve-lbd", *LBD_ARGS, "--out", str(blocker / "eq.csv")]) == 5


class TestConfigFiles:

    def test_round_trip_byte_identical(self, tmp_path, capsys):
        first, second = tmp_path / "first", tmp_path / "second"
        assert run(["solve-lbd", *LBD_ARGS, "--out-dir", str(first)]) == 0
        assert run(["solve-lbd", "--config", str(first / "run.cfg"), "--out-dir", str(second)]) == 0
        for name in ("equilibrium.csv", "report.json", "run.cfg"):
            assert (first / name).read_bytes() == (second / name).read_bytes(), name

    def test_meta_config_feeds_back(self, tmp_path, capsys):
        assert run(["solve-switching", "--s", "1", "--delta", "0.5"]) == 0
        meta = json.loads(capsys.readouterr().out)["meta"]
        cfg = tmp_path / "meta.cfg"
        cfg.write_text("".join(f"{k} = {v}\n" for k, v in meta["config"].items()))
        assert run(["solve-switching", "--config", str(cfg)]) == 0
        assert json.loads(capsys.readouterr().out)["meta"] == meta

    def test_repeat_runs_identical(self, tmp_path, capsys):
        a, b = tmp_path / "a", tmp_path / "b"
        args = ["sweep-hypercomp", "--delta", "0.8", "--c1-grid", "0.3,0.6,0.9"]
        assert run([*args, "--out-dir", str(a)]) == 0
        assert run([*args, "--out-dir", str(b)]) == 0
        assert (a / "hypercomp.csv").read_bytes() == (b / "hypercomp.csv").read_bytes()

    def test_flags_override_file(self, tmp_path, capsys):
        cfg = tmp_path / "switch.cfg"
        cfg.write_text("# comment line\ns = 1\ndelta = 0.5\n")
        assert run(["solve-switching", "--config", str(cfg), "--delta", "0.9"]) == 0
        report = json.loads(capsys.readouterr().out)
        assert report["equilibrium"]["delta"] == 0.9
        assert report["meta"]["config"]["delta"] == "0.9"

    def test_unknown_key(self, tmp_path, capsys):
        cfg = tmp_path / "bad.cfg"
        cfg.write_text("s = 1\ndelta = 0.5\ngamma = 2\n")
        assert run(["solve-switching", "--config", str(cfg)]) == 2

    def test_malformed_line(self, tmp_path, capsys):
        cfg = tmp_path / "bad.cfg"
        cfg.write_text("s 1\n")
        assert run(["solve-switching", "--config", str(cfg)]) == 2

    def test_missing_file(self, tmp_path, capsys):
        assert run(["solve-switching", "--config", str(tmp_path / "nope.cfg")]) == 2

    def test_dashed_keys(self, tmp_path):
        cfg = tmp_path / "dashed.cfg"
        cfg.write_text("max-bracket = 10\n")
        assert read_config_file(cfg) == {"max_bracket": "10"}

    CONFIG_COMMANDS = {
        "solve_lbd_two_step.cfg": "solve-lbd",
        "solve_lbd_m3.cfg": "solve-lbd",
        "sweep_switching.cfg": "sweep-switching",
        "sweep_hypercomp.cfg": "sweep-hypercomp",
        "predation.cfg": "predation",
        "simulate_lbd.cfg": "simulate",
        "simulate_switching.cfg": "simulate",
    }

    @pytest.mark.parametrize('filename,command', sorted(CONFIG_COMMANDS.items()))
    def test_shipped_configs(self, filename, command, tmp_path, capsys):
        assert run([command, "--config", str(CONFIGS_DIR / filename), "--out-dir", str(tmp_path)]) == 0
        assert (tmp_path / "run.cfg").exists()

    def test_every_config_covered(self):
        assert {p.name for p in CONFIGS_DIR.glob("*.cfg")} == set(self.CONFIG_COMMANDS)


class TestHelp:

    @pytest.mark.parametrize('command', sorted(COMMANDS))
    def test_help_lists_every_flag(self, command, capsys):
        assert run([command, "--help"]) == 0
        out = capsys.readouterr().out
        for option in COMMANDS[command][1]:
            assert option.cli in out
        for flag in ("--config", "--out", "--out-dir", "--verbose"):
            assert flag in out

    def test_version(self, capsys):
        assert run(["--version"]) == 0
        assert capsys.readouterr().out.startswith("oligodyn ")

    def test_command_required(self, capsys):
        assert run([]) == 2

    def test_parser_lists_commands(self):
        parser = build_parser()
        assert "simulate" in parser.format_help()


class TestTableCsv:

    def test_positional_twelve_digits(self):
        frame = pd.DataFrame({
            "residual": [1.2e-11, -0.0, 2.0 / 3.0],
            "value": [1e13, 0.5, float("nan")],
        })
        lines = table_csv(frame).splitlines()
        assert lines == [
            "residual,value",
            "0.000000000012,10000000000000",
            "0,0.5",
            "0.666666666667,",
        ]

    def test_mixed_object_column(self):
        frame = pd.DataFrame({"field": ["a", "b", "c"], "value": [True, 1e-9, None]})
        assert table_csv(frame).splitlines()[1:] == ["a,True", "b,0.000000001", "c,"]
