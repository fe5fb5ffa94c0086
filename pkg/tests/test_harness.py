from __future__ import annotations

import io
import math

import numpy as np
import pytest

from cellflow import acceptance
from cellflow.config import Config
from cellflow.harness import SCAN_COLUMNS, main, read_scan_csv, run_scan, run_verify


@pytest.fixture(scope="module")
def scan(tmp_path_factory):
    out = tmp_path_factory.mktemp("scan")
    cfg = Config(L_list=(4, 8), beta_list=(3.0, 5.0), mc_paths=40, seed=5, out=out).validate()
    return cfg, run_scan(cfg)


@pytest.mark.slow
def test_scan_rows_populated(scan):
    cfg, rows = scan
    assert len(rows) == 4
    on_disk = read_scan_csv(cfg.out / "scan.csv")
    assert list(on_disk[0]) == SCAN_COLUMNS and len(on_disk) == 4
    for r in on_disk:
        assert r["status"] == "ok" or r["status"].startswith("relaxed(")
        assert all(r[k] not in ("", "nan") for k in SCAN_COLUMNS)
        assert float(r["tol"]) == cfg.tol and int(r["resolution"]) > 0
    assert (cfg.out / "transition.svg").read_text().count("<svg") == 1


@pytest.mark.slow
def test_scan_regimes(scan):
    _, rows = scan
    by = {(r["L"], r["beta"]): r for r in rows}
    ratio = [by[L, 3.0]["lambda"] * L**2 / by[L, 3.0]["sigma_trace"] for L in (4, 8)]
    assert max(ratio) / min(ratio) <= 2.0
    lam5 = [by[L, 5.0]["lambda"] for L in (4, 8)]
    assert max(lam5) / min(lam5) <= 3.0


@pytest.mark.slow
def test_scan_reproducible(tmp_path):
    outs = []
    for k in range(2):
        cfg = Config(L_list=(2, 4), beta_list=(3.0,), mc_paths=200, seed=9, out=tmp_path / str(k)).validate()
        run_scan(cfg)
        outs.append((cfg.out / "scan.csv").read_bytes())
    assert outs[0] == outs[1]


def test_scan_point_failure_recorded(tmp_path, monkeypatch):
    import cellflow.harness as h

    def boom(*a, **k):
        raise RuntimeError("injected")

    monkeypatch.setattr(h, "principal_eigenpair", boom)
    rows = run_scan(Config(L_list=(2,), beta_list=(2.0, 3.0), out=tmp_path).validate())
    assert len(rows) == 2 and all(r["status"].startswith("error") for r in rows)
    assert all(math.isfinite(r["sigma_trace"]) for r in rows)


def test_verify_table_and_exit_code():
    buf = io.StringIO()
    assert run_verify(["C1"], stream=buf) == 0
    lines = buf.getvalue().splitlines()
    assert lines[0].split()[:3] == ["check", "result", "seconds"]
    assert lines[1].startswith("C1") and "PASS" in lines[1]
    float(lines[1].split()[2])


def test_verify_failure_exit_code(monkeypatch):
    monkeypatch.setitem(acceptance.CHECKS, "C1", lambda: acceptance.Check("x", False, "forced"))
    assert run_verify(["C1"], stream=io.StringIO()) == 1


def test_negative_control_flip_advection():
    buf = io.StringIO()
    assert run_verify(["C7"], fault="flip-advection", stream=buf) == 1, buf.getvalue()


def test_negative_control_drop_advection():
    buf = io.StringIO()
    assert run_verify(["C7"], fault="drop-advection", stream=buf) == 1, buf.getvalue()


def test_exit_code_two_on_bad_config(tmp_path, capsys):
    p = tmp_path / "bad.cfg"
    p.write_text("L_list = 3\n")
    assert main(["--config", str(p), "scan"]) == 2
    p.write_text("nonsense = 1\n")
    assert main(["--config", str(p), "verify", "--only", "C1"]) == 2
    assert main(["verify", "--only", "C99"]) == 2
    assert main(["--threads", "x", "scan"]) == 2


def test_cli_commands(tmp_path, monkeypatch):
    monkeypatch.setenv("CELLFLOW_OUT", str(tmp_path / "env"))
    assert main(["exit", "--L", "2", "--A", "64"]) == 0
    assert (tmp_path / "env" / "exit.csv").exists() and (tmp_path / "env" / "tau.svg").exists()
    assert main(["--out", str(tmp_path / "flag"), "eig", "--L", "2", "--A", "64"]) == 0
    assert (tmp_path / "flag" / "eigen.csv").exists() and not (tmp_path / "env" / "eigen.csv").exists()
    assert main(["--out", str(tmp_path), "cell", "--A", "0,64", "--n", "64"]) == 0
    rows = np.loadtxt(tmp_path / "sigma.csv", delimiter=",", skiprows=1)
    assert rows.shape == (2, 7) and rows[0, 1] == 1.0
    assert main(["--out", str(tmp_path), "--seed", "3", "sde", "--L", "1", "--A", "0", "--paths", "50",
                 "--trajectories", "2"]) == 0
    assert (tmp_path / "sde_stats.csv").read_text().splitlines()[1].endswith(",3")
    assert (tmp_path / "trajectories.svg").exists()
    assert main(["--out", str(tmp_path), "exit", "--L", "2", "--A", "0", "--topology", "disk",
                 "--resolution", "16"]) == 0
