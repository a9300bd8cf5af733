"""End-to-end CLI runs on the packaged toy mechanism."""
import shutil

import numpy as np
import pytest

from conftest import FIXTURE_DIR
from expkin.cli import EXIT_CONFIG, EXIT_IO, EXIT_OK, EXIT_SOLVER, main
from expkin.mechio import read_csv

SHORT_CFG = """\
mechanism toy3.mech
T0 1000.0
pressure 101325.0
Y F 0.1
Y B 0.9
t_final 0.2
atol 1e-8
rtol 1e-6
n_output_samples 50
"""


@pytest.fixture
def workdir(tmp_path):
    shutil.copy(FIXTURE_DIR / "toy3.mech", tmp_path / "toy3.mech")
    (tmp_path / "run.cfg").write_text(SHORT_CFG)
    return tmp_path


def run_cli(*argv):
    return main(list(argv))


class TestRun:
    def test_run_produces_outputs(self, workdir, capsys):
        rc = run_cli("run", "--config", str(workdir / "run.cfg"),
                     "--out", str(workdir / "out"))
        assert rc == EXIT_OK
        assert (workdir / "out" / "solution.csv").exists()
        assert (workdir / "out" / "steps.csv").exists()
        assert "completed" in capsys.readouterr().out

    def test_solution_contents(self, workdir):
        run_cli("run", "--config", str(workdir / "run.cfg"),
                "--out", str(workdir / "out"))
        header, rows = read_csv(workdir / "out" / "solution.csv")
        assert header == ["t", "T", "Y_F", "Y_X", "Y_B"]
        assert len(rows) == 50
        t = np.array([r[0] for r in rows])
        T = np.array([r[1] for r in rows])
        assert t[0] == 0.0 and t[-1] == pytest.approx(0.2)
        assert T[0] == pytest.approx(1000.0)
        assert T[-1] > T[0]  # the toy mixture heats up

    def test_steps_csv_schema(self, workdir):
        run_cli("run", "--config", str(workdir / "run.cfg"),
                "--out", str(workdir / "out"))
        header, rows = read_csv(workdir / "out" / "steps.csv")
        assert header == ["t", "h", "accepted", "err_est", "krylov_dim",
                          "substeps", "kiops_calls", "cpu_ns"]
        assert rows
        accepted = [r for r in rows if r[2] == 1.0]
        assert accepted
        # Completed attempts always use exactly two Krylov evaluations.
        assert all(r[6] == 2.0 for r in accepted)

    def test_reproducible_solution(self, workdir):
        run_cli("run", "--config", str(workdir / "run.cfg"),
                "--out", str(workdir / "a"))
        run_cli("run", "--config", str(workdir / "run.cfg"),
                "--out", str(workdir / "b"))
        sa = (workdir / "a" / "solution.csv").read_bytes()
        sb = (workdir / "b" / "solution.csv").read_bytes()
        assert sa == sb  # bit-identical across repeated runs
        # steps.csv may differ only in the cpu_ns timing column.
        _, ra = read_csv(workdir / "a" / "steps.csv")
        _, rb = read_csv(workdir / "b" / "steps.csv")
        assert [r[:-1] for r in ra] == [r[:-1] for r in rb]

    def test_validate_ok(self, workdir, capsys):
        rc = run_cli("validate", "--config", str(workdir / "run.cfg"))
        assert rc == EXIT_OK
        assert capsys.readouterr().out.strip() == "ok"


class TestErrorPaths:
    def test_missing_config_file(self, workdir, capsys):
        rc = run_cli("run", "--config", str(workdir / "nope.cfg"))
        assert rc == EXIT_IO
        assert "cannot read" in capsys.readouterr().err

    def test_missing_mechanism_file(self, workdir, capsys):
        (workdir / "toy3.mech").unlink()
        rc = run_cli("validate", "--config", str(workdir / "run.cfg"))
        assert rc == EXIT_IO

    def test_bad_config(self, workdir, capsys):
        (workdir / "bad.cfg").write_text(SHORT_CFG.replace("Y B 0.9", "Y B 0.5"))
        rc = run_cli("validate", "--config", str(workdir / "bad.cfg"))
        assert rc == EXIT_CONFIG
        assert "MassFractionSum" in capsys.readouterr().err

    def test_species_not_in_mechanism(self, workdir, capsys):
        (workdir / "bad.cfg").write_text(SHORT_CFG.replace("Y F 0.1", "Y Q 0.1"))
        rc = run_cli("validate", "--config", str(workdir / "bad.cfg"))
        assert rc == EXIT_CONFIG

    def test_sweep_without_points(self, workdir):
        rc = run_cli("sweep", "--config", str(workdir / "run.cfg"))
        assert rc == EXIT_CONFIG

    def test_sweep_reference_not_tight_enough(self, workdir):
        (workdir / "s.cfg").write_text(
            SHORT_CFG + "sweep 1e-6 1e-4\nreference 1e-4 1e-2\n")
        rc = run_cli("sweep", "--config", str(workdir / "s.cfg"))
        assert rc == EXIT_CONFIG

    def test_solver_failure_exit_code(self, workdir, capsys):
        # h_min too large for the transient: the march cannot recover.
        (workdir / "hard.cfg").write_text(
            SHORT_CFG.replace("atol 1e-8", "atol 1e-14\nh_min 1e-3\nh0 1e-3")
            .replace("rtol 1e-6", "rtol 1e-13"))
        rc = run_cli("run", "--config", str(workdir / "hard.cfg"),
                     "--out", str(workdir / "out"))
        assert rc == EXIT_SOLVER
        assert "solver failure" in capsys.readouterr().err
        # Partial telemetry is still written for post-mortem analysis.
        assert (workdir / "out" / "steps.csv").exists()


class TestSweep:
    def test_sweep_rows_and_self_consistency(self, workdir):
        (workdir / "s.cfg").write_text(
            SHORT_CFG + "sweep 1e-6 1e-4\nsweep 1e-8 1e-6\nsweep 1e-10 1e-8\n"
            "reference 1e-10 1e-8\n")
        rc = run_cli("sweep", "--config", str(workdir / "s.cfg"),
                     "--out", str(workdir / "out"))
        assert rc == EXIT_OK
        header, rows = read_csv(workdir / "out" / "sweep.csv")
        assert header == ["atol", "rtol", "cpu_s", "err_2norm", "err_scaled",
                          "failed"]
        assert len(rows) == 3
        assert all(r[5] == 0.0 for r in rows)
        errs = [r[3] for r in rows]
        assert errs[0] > errs[2]  # looser tolerances, larger error
        # The last point duplicates the reference: identical march, error 0.
        assert errs[2] == 0.0

    def test_parallel_matches_serial(self, workdir):
        (workdir / "s.cfg").write_text(
            SHORT_CFG + "sweep 1e-6 1e-4\nsweep 1e-8 1e-6\n"
            "reference 1e-11 1e-9\n")
        run_cli("sweep", "--config", str(workdir / "s.cfg"),
                "--out", str(workdir / "serial"))
        run_cli("sweep", "--config", str(workdir / "s.cfg"),
                "--out", str(workdir / "par"), "--parallel")
        _, rs = read_csv(workdir / "serial" / "sweep.csv")
        _, rp = read_csv(workdir / "par" / "sweep.csv")
        # Everything except the wall-clock column is identical.
        for a, b in zip(rs, rp):
            assert a[:2] == b[:2] and a[3:] == b[3:]


class TestSpectrum:
    def test_spectrum_rows(self, workdir):
        rc = run_cli("spectrum", "--config", str(workdir / "run.cfg"),
                     "--out", str(workdir / "out"))
        assert rc == EXIT_OK
        header, rows = read_csv(workdir / "out" / "spectrum.csv")
        assert header == ["t", "alpha", "beta", "omega", "max_real",
                          "norm_step_cost"]
        assert rows
        # Full decimation=1 output: every row carries eigenvalue data.
        assert all(isinstance(r[3], float) for r in rows)
        assert all(r[5] > 0 for r in rows)

    def test_spectrum_decimation(self, workdir):
        rc = run_cli("spectrum", "--config", str(workdir / "run.cfg"),
                     "--out", str(workdir / "out"), "--spectrum-every", "10")
        assert rc == EXIT_OK
        _, rows = read_csv(workdir / "out" / "spectrum.csv")
        filled = [r for r in rows if r[1] != ""]
        skipped = [r for r in rows if r[1] == ""]
        assert len(filled) == (len(rows) + 9) // 10
        assert skipped  # decimated rows still log t and cost

    def test_pre_ignition_alpha_settles(self, workdir):
        # Once the radical pool leaves exactly zero (the clamp kink in the
        # FD Jacobian) the pre-ignition spectrum is essentially frozen.
        (workdir / "early.cfg").write_text(
            SHORT_CFG.replace("t_final 0.2", "t_final 1e-4"))
        run_cli("spectrum", "--config", str(workdir / "early.cfg"),
                "--out", str(workdir / "out"))
        _, rows = read_csv(workdir / "out" / "spectrum.csv")
        alphas = np.array([r[1] for r in rows], dtype=float)
        tail = alphas[-6:]
        assert np.ptp(tail) <= 1e-4 * np.abs(tail).max()
