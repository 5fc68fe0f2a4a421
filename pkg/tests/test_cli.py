import csv
import json
import subprocess
import sys

import numpy as np
import pytest

from quadenv import __version__
from quadenv.model import load_instance
from quadenv.cli import EXIT_CAP, EXIT_DIVERGED, EXIT_INVALID, EXIT_OK, main


def run(*argv):
    return main([str(a) for a in argv])


@pytest.fixture
def inst_dir(tmp_path):
    out = tmp_path / "inst"
    assert run("gen", "--m", 30, "--n", 12, "--k", 2, "--noise", 0.05, "--seed", 1,
               "--x0-norm", 0, "--mag-range", "4,6", "--out", out) == EXIT_OK
    return out


def test_gen_writes_loadable_instance(inst_dir, capsys):
    inst = load_instance(inst_dir)
    assert inst.A.shape == (30, 12) and inst.support.size == 2
    assert np.linalg.norm(inst.epsilon) == pytest.approx(0.05)
    header = json.loads((inst_dir / "header.json").read_text())
    assert header["support"] == list(inst.support)


def test_gen_matrix_only(tmp_path, capsys):
    assert run("gen", "--m", 4, "--n", 6, "--matrix-only", "--out", tmp_path) == EXIT_OK
    A = np.loadtxt(tmp_path / "A.csv", delimiter=",")
    np.testing.assert_allclose(np.linalg.norm(A, axis=0), 1.0)
    assert json.loads(capsys.readouterr().out)["n"] == 6


def test_solve_and_certify(inst_dir, tmp_path, capsys):
    x_path = tmp_path / "x.csv"
    assert run("solve", "--instance", inst_dir, "--method", "qcard", "--out", x_path) == EXIT_OK
    solved = json.loads(capsys.readouterr().out)
    assert solved["converged"] and solved["residual_kind"] == "subgradient"
    assert solved["support"] == list(load_instance(inst_dir).support)

    report = tmp_path / "cert.json"
    assert run("certify", "--instance", inst_dir, "--theorem", "card", "--x", x_path,
               "--out", report) == EXIT_OK
    data = json.loads(report.read_text())
    assert data["verdict"] == "UniqueGlobalMin"
    capsys.readouterr()
    assert run("certify", "--instance", inst_dir, "--theorem", "pk", "--k", 2, "--x",
               x_path) == EXIT_OK
    assert json.loads(capsys.readouterr().out)["theorem"].startswith("pk")


def test_solve_from_matrix_and_b(inst_dir, capsys):
    assert run("solve", "--matrix", inst_dir / "A.csv", "--b", inst_dir / "b.csv",
               "--method", "l1", "--lam", 0.1) == EXIT_OK
    assert json.loads(capsys.readouterr().out)["method"] == "l1"


@pytest.mark.parametrize("theorem", ["oracle-card", "oracle-pk"])
def test_oracle_guarantees(inst_dir, theorem, capsys):
    assert run("certify", "--instance", inst_dir, "--theorem", theorem) == EXIT_OK
    out = json.loads(capsys.readouterr().out)
    assert out["K"] == 2 and isinstance(out["holds"], bool)
    assert out["noise_norm"] == pytest.approx(0.05)


def test_constants_outputs(tmp_path, capsys):
    out = tmp_path / "c"
    assert run("constants", "--m", 6, "--n", 9, "--kmax", 4, "--delta", "--out", out) == EXIT_OK
    rows = list(csv.DictReader((out / "constants.csv").open()))
    assert [int(r["k"]) for r in rows] == [1, 2, 3, 4]
    assert float(rows[0]["beta_k"]) == pytest.approx(1.0)
    assert (out / "crt.csv").exists() and (out / "inv_beta.svg").exists()
    assert json.loads((out / "report.json").read_text())["m"] == 6


def test_constants_cap_and_force(tmp_path, capsys):
    args = ("constants", "--m", 6, "--n", 9, "--kmax", 3, "--cap", 10, "--out", tmp_path)
    assert run(*args) == EXIT_OK
    assert "exceeds cap" in capsys.readouterr().err
    assert len(list(csv.DictReader((tmp_path / "constants.csv").open()))) == 1
    assert run(*args, "--force") == EXIT_OK
    assert len(list(csv.DictReader((tmp_path / "constants.csv").open()))) == 3


def test_certify_cap_exit_code(tmp_path, capsys):
    d = tmp_path / "big"
    run("gen", "--m", 20, "--n", 60, "--k", 5, "--out", d)
    assert run("certify", "--instance", d, "--theorem", "oracle-card", "--cap", 100) == EXIT_CAP
    assert "force" in capsys.readouterr().err


def test_divergence_exit_code(inst_dir, capsys):
    code = run("solve", "--instance", inst_dir, "--method", "l1", "--lam", 0.1, "--step", 50,
               "--max-iter", 5000)
    assert code == EXIT_DIVERGED
    assert "error" in capsys.readouterr().err


@pytest.mark.parametrize("argv", [
    ("gen", "--m", 3),
    ("gen", "--m", 3, "--n", 4, "--k", 9, "--out", "x"),
    ("certify", "--instance", "nowhere", "--theorem", "card"),
    ("solve", "--method", "qpk", "--matrix", "nowhere.csv"),
    ("sweep", "--out", "x", "--noise-grid", "1,zero"),
    ("frobnicate",),
    ("hist", "--out", "x", "--trials", 0),
])
def test_invalid_arguments(argv, tmp_path, monkeypatch, capsys):
    monkeypatch.chdir(tmp_path)
    assert run(*argv) == EXIT_INVALID
    assert "error:" in capsys.readouterr().err


def test_sweep_outputs(tmp_path, capsys):
    out = tmp_path / "s"
    assert run("sweep", "--m", 15, "--n", 30, "--k", 2, "--trials", 2, "--noise-grid", "0,1",
               "--methods", "qcard,l1", "--x0-norm", 4, "--out", out) == EXIT_OK
    for f in ("summary.csv", "trials.csv", "report.json", "errors.svg"):
        assert (out / f).exists()
    rows = list(csv.DictReader((out / "summary.csv").open()))
    assert [(r["method"], float(r["noise"])) for r in rows] == [
        ("qcard", 0.0), ("qcard", 1.0), ("l1", 0.0), ("l1", 1.0)]
    first = (out / "trials.csv").read_bytes()
    assert run("sweep", "--m", 15, "--n", 30, "--k", 2, "--trials", 2, "--noise-grid", "0,1",
               "--methods", "qcard,l1", "--x0-norm", 4, "--out", out, "--no-plot") == EXIT_OK
    assert (out / "trials.csv").read_bytes() == first


def test_hist_with_toml_config(tmp_path, capsys):
    cfg = tmp_path / "run.toml"
    cfg.write_text(
        'seed = 3\n'
        '[hist]\n'
        f'out = "{(tmp_path / "h").as_posix()}"\n'
        'm = 15\nn = 30\nk = 2\ntrials = 3\nnoise = 0.5\nx0-norm = 4.0\n')
    assert run("--config", cfg, "hist", "--m", 99) == EXIT_OK
    report = json.loads((tmp_path / "h" / "report.json").read_text())
    assert report["config"]["m"] == 15 and report["config"]["seed"] == 3
    counts = list(csv.DictReader((tmp_path / "h" / "histogram.csv").open()))
    assert len(counts) == 31 and sum(int(r["count"]) for r in counts) == 3


def test_unknown_config_key(tmp_path, capsys):
    cfg = tmp_path / "bad.toml"
    cfg.write_text("[sweep]\nbogus = 1\n")
    assert run("--config", cfg, "sweep", "--out", tmp_path) == EXIT_INVALID
    assert "bogus" in capsys.readouterr().err


def test_console_script_version():
    out = subprocess.run([sys.executable, "-m", "quadenv.cli", "--version"],
                         capture_output=True, text=True, check=True)
    assert out.stdout.strip() == __version__
