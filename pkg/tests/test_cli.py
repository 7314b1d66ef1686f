import os
import shutil
import subprocess
import sys

import numpy as np
import pytest

from berknash import __version__
from berknash.cli import run_command

from conftest import ar1_document

SMALL = ["--states", "41", "--radius", "5"]


def _files(d):
    return {name: open(os.path.join(d, name), "rb").read() for name in sorted(os.listdir(d))}


def _table(path):
    """Numeric body of an artifact CSV (comments and column header dropped)."""
    rows = [ln for ln in open(path).read().splitlines() if not ln.startswith("#")][1:]
    return np.array([[float(v) for v in ln.split(",")] for ln in rows])


def _run(tmp_path, *argv):
    out = tmp_path / "out"
    code = run_command([*argv, "--out", str(out)])
    return code, out


class TestCommands:
    def test_solve_ar1(self, tmp_path):
        code, out = _run(tmp_path, "solve", "--example", "ar1", "--a0", "0.5", "--b0", "1", *SMALL)
        assert code == 0
        names = set(os.listdir(out))
        assert {"report.txt", "m.csv", "nu.csv", "kl.csv", "trace_solve.csv"} <= names
        report = (out / "report.txt").read_text()
        assert "converged = true" in report
        nu = _table(out / "nu.csv")
        top = nu[np.argmax(nu[:, -1])]
        np.testing.assert_allclose(top[1:3], [0.5, 1.0])
        assert top[-1] == pytest.approx(1.0)

    def test_header(self, tmp_path):
        code, out = _run(tmp_path, "example", "--example", "ar1", "--seed", "5")
        assert code == 0
        for name in os.listdir(out):
            lines = (out / name).read_text().splitlines()
            assert lines[0] == f"# berknash {__version__}"
            assert lines[1].startswith("# argv: example --example ar1")
            assert lines[2] == "# seed: 5"

    def test_verify_round_trip(self, tmp_path):
        code, out = _run(tmp_path, "solve", "--example", "ar1", *SMALL)
        assert code == 0
        shutil.copy(out / "m.csv", tmp_path / "m.csv")
        shutil.copy(out / "nu.csv", tmp_path / "nu.csv")
        code, _ = _run(tmp_path, "verify", "--example", "ar1", *SMALL, "--m", str(tmp_path / "m.csv"),
                       "--nu", str(tmp_path / "nu.csv"))
        assert code == 0

    def test_ladder_unit_root(self, tmp_path):
        code, out = _run(tmp_path, "ladder", "--example", "ar1", "--a0", "1.0", "--b0", "1", "--levels", "3")
        assert code == 2
        assert "verdict = mass-escape" in (out / "report.txt").read_text()
        assert (out / "trace_ladder.csv").exists()

    def test_lyapunov(self, tmp_path):
        assert _run(tmp_path, "lyapunov", "--example", "ar1")[0] == 0
        code, out = _run(tmp_path, "lyapunov", "--example", "ar1", "--a0", "1.2")
        assert code == 2
        assert "witness" in (out / "report.txt").read_text()

    def test_learn(self, tmp_path):
        code, out = _run(tmp_path, "learn", "--example", "ar1", *SMALL, "--horizon", "500")
        assert code == 0
        assert {"trace_history.csv", "trace_beliefs.csv", "trace_frequencies.csv"} <= set(os.listdir(out))
        hist = _table(out / "trace_history.csv")
        assert hist.shape[0] == 500

    def test_discretize(self, tmp_path):
        code, out = _run(tmp_path, "discretize", "--example", "ar1", *SMALL, "--levels", "2")
        assert code == 0
        assert {"states.csv", "actions.csv", "thetas.csv", "trace_truncation.csv"} <= set(os.listdir(out))

    def test_model_file_and_set(self, tmp_path):
        model = tmp_path / "ar1.txt"
        model.write_text(ar1_document())
        code, out = _run(tmp_path, "solve", "--model", str(model), "--set", "solve.discount=0.5")
        assert code == 0

    def test_env_out(self, tmp_path, monkeypatch):
        monkeypatch.setenv("BERKNASH_OUT", str(tmp_path / "env"))
        assert run_command(["example", "--example", "ar1"]) == 0
        assert (tmp_path / "env" / "report.txt").exists()


class TestErrors:
    def test_missing_model(self, tmp_path):
        assert _run(tmp_path, "solve", "--model", str(tmp_path / "missing.txt"))[0] == 1

    def test_unknown_command(self, tmp_path):
        assert run_command(["bogus"]) == 1

    def test_missing_constant(self, tmp_path):
        assert _run(tmp_path, "solve", "--example", "cost")[0] == 1

    def test_bad_flag_value(self, tmp_path):
        assert _run(tmp_path, "solve", "--example", "ar1", "--states", "many")[0] == 1
        assert _run(tmp_path, "solve", "--example", "ar1", "--discount", "1.5")[0] == 1

    def test_flag_for_other_example(self, tmp_path):
        assert _run(tmp_path, "solve", "--example", "ar1", "--mean", "1")[0] == 1


def test_module_entry_point(tmp_path):
    proc = subprocess.run(
        [sys.executable, "-m", "berknash", "example", "--example", "ar1", "--out", str(tmp_path)],
        capture_output=True,
        text=True,
    )
    assert proc.returncode == 0, proc.stderr


DETERMINISM = [
    ["example", "--example", "ar1"],
    ["discretize", "--example", "ar1", *SMALL],
    ["solve", "--example", "ar1", *SMALL, "--restarts", "1", "--seed", "3"],
    ["ladder", "--example", "ar1", "--levels", "2"],
    ["learn", "--example", "ar1", *SMALL, "--horizon", "300", "--seed", "9"],
    ["lyapunov", "--example", "ar1", "--samples", "50"],
]


@pytest.mark.parametrize("argv", DETERMINISM, ids=[a[0] for a in DETERMINISM])
def test_byte_identical(tmp_path, argv):
    out = tmp_path / "out"
    run_command([*argv, "--out", str(out)])
    first = _files(out)
    shutil.rmtree(out)
    run_command([*argv, "--out", str(out)])
    assert _files(out) == first
