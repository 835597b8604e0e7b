import os

import numpy as np
import pytest

from fracreg import cli
from fracreg import config as cfgmod
from fracreg.errors import SolverError
from fracreg.graph import SampleSet
from fracreg.sobolev import zoo

SWEEP_CONFIG = """\
truth = f2
n_grid = [40, 60]
repetitions = 2
seed = 11
noise_sd = 1.0
grids.k = [1, 4, 8, 16]
grids.eps = [0.5, 1.0]
theory_s = 0.45
"""


def run_cli(*argv):
    return cli.main(list(argv))


def write(path, text):
    path.write_text(text)
    return str(path)


class TestConfigFormat:
    def test_scalars_and_lists(self):
        entries = cfgmod.parse_text(
            'a = 3\nb = 2.5\nc = hello\nd = "two words"\ne = true\nf = [1, 2.5, -3]\n'
        )
        values = {k: v.value for k, v in entries.items()}
        assert values == {"a": 3, "b": 2.5, "c": "hello", "d": "two words",
                          "e": True, "f": [1, 2.5, -3]}

    def test_comments_and_blank_lines(self):
        entries = cfgmod.parse_text("# full line\n\nkey = 1  # trailing\n")
        assert entries["key"].value == 1

    def test_duplicate_key_rejected(self):
        with pytest.raises(cfgmod.ConfigError):
            cfgmod.parse_text("a = 1\na = 2\n")

    def test_missing_equals_rejected(self):
        with pytest.raises(cfgmod.ConfigError) as err:
            cfgmod.parse_text("just a line\n")
        assert err.value.line == 1

    def test_round_trip_identity(self):
        entries = cfgmod.parse_text(SWEEP_CONFIG)
        text = cfgmod.serialize(entries)
        again = cfgmod.parse_text(text)
        assert {k: v.value for k, v in entries.items()} == {
            k: v.value for k, v in again.items()
        }
        # a second round trip is byte-stable
        assert cfgmod.serialize(again) == text

    def test_overrides(self):
        entries = cfgmod.parse_text("seed = 1\n")
        out = cfgmod.apply_overrides(entries, ["seed = 99", "extra = [1, 2]"])
        assert out["seed"].value == 99
        assert out["extra"].value == [1, 2]

    def test_bad_override_rejected(self):
        with pytest.raises(cfgmod.ConfigError):
            cfgmod.apply_overrides({}, ["notakeyvalue"])


class TestSweepCommand:
    def test_outputs_and_echo_rerun(self, tmp_path):
        cfg = write(tmp_path / "sweep.txt", SWEEP_CONFIG)
        out1, out2 = str(tmp_path / "o1"), str(tmp_path / "o2")
        assert run_cli("sweep", "--config", cfg, "--out", out1, "--threads", "1") == 0
        for name in ("records.csv", "summary.csv", "config_echo.txt"):
            assert os.path.exists(os.path.join(out1, name))
        echo = os.path.join(out1, "config_echo.txt")
        assert run_cli("sweep", "--config", echo, "--out", out2, "--threads", "2") == 0
        for name in ("records.csv", "summary.csv", "config_echo.txt"):
            a = open(os.path.join(out1, name), "rb").read()
            b = open(os.path.join(out2, name), "rb").read()
            assert a == b, "%s differs between a run and its echo re-run" % name

    def test_curve_output_when_requested(self, tmp_path):
        cfg = write(tmp_path / "sweep.txt", SWEEP_CONFIG + "curve.points = 8\ncurve.n = 60\n")
        out = str(tmp_path / "o")
        assert run_cli("sweep", "--config", cfg, "--out", out, "--threads", "1") == 0
        lines = open(os.path.join(out, "curve.csv")).read().splitlines()
        assert lines[0] == "x,truth,mean_fit"
        assert len(lines) == 9

    def test_minimal_config_applies_documented_defaults(self, tmp_path):
        cfg = write(tmp_path / "min.txt", "truth = f2\n")
        out = str(tmp_path / "o")
        # shrink the workload; everything else comes from the defaults
        assert run_cli("sweep", "--config", cfg, "--out", out, "--threads", "1",
                       "--set", "n_grid = [40, 60]", "--set", "repetitions = 1",
                       "--set", "grids.k = [1, 4]", "--set", "grids.eps = [0.5]") == 0
        entries = cfgmod.parse_text(open(os.path.join(out, "config_echo.txt")).read())
        values = {k: v.value for k, v in entries.items()}
        assert values["seed"] == 0
        assert values["noise_sd"] == 1.0
        assert values["design.low"] == 0.0 and values["design.high"] == 5.0
        assert values["kernel.family"] == "truncated_gaussian"

    def test_set_override_changes_echo(self, tmp_path):
        cfg = write(tmp_path / "sweep.txt", SWEEP_CONFIG)
        out = str(tmp_path / "o")
        assert run_cli("sweep", "--config", cfg, "--out", out,
                       "--set", "seed = 77", "--threads", "1") == 0
        entries = cfgmod.parse_text(open(os.path.join(out, "config_echo.txt")).read())
        assert entries["seed"].value == 77

    def test_seed_flag_overrides(self, tmp_path):
        cfg = write(tmp_path / "sweep.txt", SWEEP_CONFIG)
        out = str(tmp_path / "o")
        assert run_cli("sweep", "--config", cfg, "--out", out,
                       "--seed", "123", "--threads", "1") == 0
        entries = cfgmod.parse_text(open(os.path.join(out, "config_echo.txt")).read())
        assert entries["seed"].value == 123

    def test_invalid_s_names_key(self, tmp_path, capsys):
        bad = SWEEP_CONFIG.replace("theory_s = 0.45", "theory_s = 1.5")
        cfg = write(tmp_path / "bad.txt", bad)
        out = str(tmp_path / "o")
        assert run_cli("sweep", "--config", cfg, "--out", out) == 2
        message = capsys.readouterr().err
        assert "theory_s" in message and "(0,1)" in message
        record = open(os.path.join(out, "error.txt")).read()
        assert "code = 2" in record and "kind = input" in record

    def test_unknown_key_rejected(self, tmp_path):
        cfg = write(tmp_path / "bad.txt", SWEEP_CONFIG + "bogus_key = 1\n")
        out = str(tmp_path / "o")
        assert run_cli("sweep", "--config", cfg, "--out", out) == 2

    def test_tuning_error_exit_code(self, tmp_path):
        # tuning failures inside a sweep become recorded failures, so drive
        # an empty window through eigen where the error surfaces directly
        cfg = write(tmp_path / "e.txt", """\
n = 60
seed = 3
tuning.s = 0.45
tuning.M = 1.0
tuning.c0 = 1000.0
tuning.C0 = 0.0001
""")
        out = str(tmp_path / "o")
        assert run_cli("eigen", "--config", cfg, "--out", out) == 3
        record = open(os.path.join(out, "error.txt")).read()
        assert "kind = tuning" in record

    def test_missing_config_is_io_error(self, tmp_path):
        out = str(tmp_path / "o")
        assert run_cli("sweep", "--config", str(tmp_path / "nope.txt"), "--out", out) == 5

    def test_out_env_var_default(self, tmp_path, monkeypatch):
        cfg = write(tmp_path / "sweep.txt", SWEEP_CONFIG)
        out = str(tmp_path / "from_env")
        monkeypatch.setenv(cli.OUT_ENV_VAR, out)
        assert run_cli("sweep", "--config", cfg, "--threads", "1") == 0
        assert os.path.exists(os.path.join(out, "records.csv"))

    def test_no_out_dir_is_input_error(self, tmp_path, monkeypatch, capsys):
        monkeypatch.delenv(cli.OUT_ENV_VAR, raising=False)
        cfg = write(tmp_path / "sweep.txt", SWEEP_CONFIG)
        assert run_cli("sweep", "--config", cfg) == 2

    def test_solver_error_maps_to_exit_4(self, tmp_path, monkeypatch):
        cfg = write(tmp_path / "sweep.txt", SWEEP_CONFIG)
        out = str(tmp_path / "o")

        def boom(args, out_dir, entries):
            raise SolverError("no convergence", worst_residual=1.0)

        monkeypatch.setitem(cli._HANDLERS, "sweep", boom)
        assert run_cli("sweep", "--config", cfg, "--out", out) == 4
        record = open(os.path.join(out, "error.txt")).read()
        assert "kind = solver" in record


class TestFitCommand:
    def test_fit_csv_written(self, tmp_path):
        rng = np.random.default_rng(2)
        x = np.sort(rng.uniform(0, 5, 40))
        SampleSet(x[:, None], np.sin(x)).save_csv(tmp_path / "data.csv")
        cfg = write(tmp_path / "fit.txt", """\
data = %s
K = 5
epsilon = 0.8
meta.s = 0.45
meta.M = 1.0
""" % (tmp_path / "data.csv"))
        out = str(tmp_path / "o")
        assert run_cli("fit", "--config", cfg, "--out", out) == 0
        lines = open(os.path.join(out, "fit.csv")).read().splitlines()
        assert lines[0] == "# K = 5"
        assert any(l.startswith("# s = 0.45") for l in lines)
        data_rows = [l for l in lines if not l.startswith("#")]
        assert data_rows[0] == "index,x1,y,fitted"
        assert len(data_rows) == 41

    def test_fit_needs_responses(self, tmp_path):
        x = np.linspace(0, 4, 20)
        SampleSet(x[:, None]).save_csv(tmp_path / "data.csv")
        cfg = write(tmp_path / "fit.txt",
                    "data = %s\nK = 2\nepsilon = 0.8\n" % (tmp_path / "data.csv"))
        assert run_cli("fit", "--config", cfg, "--out", str(tmp_path / "o")) == 2


class TestSeminormCommand:
    def test_divergence_flag_in_summary(self, tmp_path):
        cfg = write(tmp_path / "sem.txt", """\
function.family = piecewise_constant
function.breakpoints = [0, 0.5, 1]
function.values = [1, 0]
s = [0.25, 0.75]
level = 11
""")
        out = str(tmp_path / "o")
        assert run_cli("seminorm", "--config", cfg, "--out", out) == 0
        lines = open(os.path.join(out, "seminorm.csv")).read().splitlines()
        rows = [l.split(",") for l in lines[1:]]
        by_s = {float(r[0]): r for r in rows}
        assert by_s[0.25][2] == "false"
        assert by_s[0.75][2] == "true"
        assert by_s[0.75][1] == "inf"

    def test_zoo_truth_by_name(self, tmp_path):
        cfg = write(tmp_path / "sem.txt", "truth = f2\ns = 0.25\nlevel = 10\n")
        out = str(tmp_path / "o")
        assert run_cli("seminorm", "--config", cfg, "--out", out) == 0

    def test_s_out_of_range(self, tmp_path):
        cfg = write(tmp_path / "sem.txt", "truth = f2\ns = 1.5\n")
        assert run_cli("seminorm", "--config", cfg, "--out", str(tmp_path / "o")) == 2


class TestEigenCommand:
    def test_generated_design_lambda1(self, tmp_path):
        cfg = write(tmp_path / "e.txt", """\
n = 300
seed = 8
epsilon = 0.4
m = 10
""")
        out = str(tmp_path / "o")
        assert run_cli("eigen", "--config", cfg, "--out", out) == 0
        lines = open(os.path.join(out, "eigen.csv")).read().splitlines()
        assert len(lines) == 11
        first = lines[1].split(",")
        assert float(first[1]) <= 1e-8

    def test_data_file_input(self, tmp_path):
        x = np.linspace(0, 2, 50)
        SampleSet(x[:, None]).save_csv(tmp_path / "pts.csv")
        cfg = write(tmp_path / "e.txt",
                    "data = %s\nepsilon = 0.5\nm = 4\n" % (tmp_path / "pts.csv"))
        out = str(tmp_path / "o")
        assert run_cli("eigen", "--config", cfg, "--out", out) == 0


class TestGridsearchCommand:
    def test_surface_and_best(self, tmp_path):
        cfg = write(tmp_path / "g.txt", """\
truth = f2
n = 60
seed = 4
grids.k = [1, 4, 16]
grids.eps = [0.5, 1.0]
""")
        out = str(tmp_path / "o")
        assert run_cli("gridsearch", "--config", cfg, "--out", out) == 0
        surface = open(os.path.join(out, "surface.csv")).read().splitlines()
        assert surface[0] == "K,epsilon,mse"
        assert len(surface) == 1 + 6
        best = cfgmod.parse_text(open(os.path.join(out, "best.txt")).read())
        assert best["best_K"].value in (1, 4, 16)


class TestZooCommand:
    def test_definitions_round_trip(self, tmp_path):
        out = str(tmp_path / "o")
        assert run_cli("zoo", "--out", out) == 0
        for name, fn in zoo().items():
            text = open(os.path.join(out, "%s.txt" % name)).read()
            entries = cfgmod.parse_text(text)
            view = cfgmod.ConfigView(entries)
            parsed = cli.function_from_view(view)
            assert parsed == fn
