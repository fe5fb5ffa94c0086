from __future__ import annotations

import math
from dataclasses import replace

import numpy as np
import pytest

from cellflow.cellproblem import EffectiveDiffusivity
from cellflow.exittime import (
    EXIT_COLUMNS,
    ExitTimeSolution,
    contour_svg,
    drift_independent_bound_check,
    exit_row,
    homogenized_profile_deviation,
    separatrix_report,
    solve_exit_time,
    torsion_square_max,
    write_exit_csv,
)
from cellflow.grid import ScalarField, Topology, build_grid

ORACLE = 0.07367


def test_torsion_oracle():
    assert torsion_square_max(1.0, 50) == pytest.approx(ORACLE, abs=5e-6)


def test_unit_square_zero_amplitude():
    sol = solve_exit_time(Topology.SQUARE, 1, 0, 32)
    assert abs(sol.max_tau() - ORACLE) <= 0.002
    assert sol.tau.values.argmax() == np.ravel_multi_index((16, 16), sol.grid.shape)


def test_disk_zero_amplitude():
    sol = solve_exit_time(Topology.DISK, 2, 0, 32, quarter=True)
    assert abs(sol.center_value() - 1.0) <= 0.02


@pytest.mark.parametrize("topology", [Topology.SQUARE, Topology.DISK])
def test_point_symmetry(topology):
    sol = solve_exit_time(topology, 2, 64, 20, tol=1e-12)
    v = sol.tau.values
    assert np.max(np.abs(v - v[::-1, ::-1])) <= 1e-6 * sol.max_tau()


def test_quarter_grid_agrees_with_full():
    full = solve_exit_time(Topology.SQUARE, 2, 64, 20, tol=1e-12)
    q = solve_exit_time(Topology.SQUARE, 2, 64, 20, tol=1e-12, quarter=True)
    assert np.max(np.abs(q.tau.unfold().values - full.tau.values)) <= 1e-8 * full.max_tau()


def test_maximum_principle_and_boundary():
    sol = solve_exit_time(Topology.SQUARE, 4, 256)
    v = sol.tau.values
    assert v.min() >= -1e-12 * sol.max_tau()
    assert not np.any(v[~sol.grid.interior])
    assert sol.grid.interior.ravel()[v.argmax()]


def test_refinement_stability():
    a = solve_exit_time(Topology.SQUARE, 2, 64, 20).center_value()
    b = solve_exit_time(Topology.SQUARE, 2, 64, 40).center_value()
    assert abs(a - b) <= 0.02 * b


def test_resolution_rule():
    with pytest.raises(ValueError):
        solve_exit_time(Topology.SQUARE, 2, 1024, 10)


def test_profile_deviation_zero_amplitude():
    sol = solve_exit_time(Topology.DISK, 2, 0, 32, quarter=True)
    d = homogenized_profile_deviation(sol, EffectiveDiffusivity(0.0, np.eye(2)))
    assert d.deviation <= 0.02 * 2**2 / 4


def test_profile_deviation_checks_inputs():
    sq = solve_exit_time(Topology.SQUARE, 2, 0, 8)
    with pytest.raises(ValueError):
        homogenized_profile_deviation(sq, EffectiveDiffusivity(0.0, np.eye(2)))
    disk = solve_exit_time(Topology.DISK, 2, 0, 8)
    with pytest.raises(ValueError):
        homogenized_profile_deviation(disk, EffectiveDiffusivity(5.0, np.eye(2)))


def test_separatrix_zero_amplitude():
    sol = solve_exit_time(Topology.SQUARE, 4, 0, 16, quarter=True)
    rep = separatrix_report(sol)
    # the lines x_i = 0 through the centre of [-2, 2]^2 are separatrices
    assert 0.5 < rep.ratio <= 1 + 1e-12
    assert rep.max_on_sep == pytest.approx(sol.center_value(), rel=1e-12)
    assert sol.tau.at(1.0, 0.0) / sol.max_tau() > 0.5


def test_separatrix_monotone():
    r = [separatrix_report(solve_exit_time(Topology.SQUARE, 4, A, quarter=True)).ratio for A in (256, 4096)]
    assert r[1] <= r[0]


def test_separatrix_ratio_averaging_regime():
    rep = separatrix_report(solve_exit_time(Topology.SQUARE, 4, 1024, quarter=True))
    assert rep.ratio <= 0.35


def test_separatrix_empty_set():
    g = build_grid(Topology.SQUARE, 0.5, 5, center=(0.5, 0.5))
    sol = ExitTimeSolution(g, ScalarField(g, np.ones(g.shape)), 0.0, 0.5)
    with pytest.raises(ValueError):
        separatrix_report(sol, tol=1e-3)


def test_drift_bound_examples():
    sol = solve_exit_time(Topology.SQUARE, 1, 0, 256)
    assert drift_independent_bound_check(sol)
    assert ORACLE <= 1 / (4 * math.pi)
    for A in (16, 256):
        assert drift_independent_bound_check(solve_exit_time(Topology.SQUARE, 1, A))
    doubled = replace(sol, tau=ScalarField(sol.grid, 2 * sol.tau.values))
    assert not drift_independent_bound_check(doubled)


def test_regime_contrast_small():
    # tau(0) sqrt(A) / L^2 stays within a factor 10 band at A = L^3
    vals = []
    for L in (4, 8):
        A = L**3
        sol = solve_exit_time(Topology.SQUARE, L, A, quarter=True)
        vals.append(sol.center_value() * math.sqrt(A) / L**2)
    assert max(vals) / min(vals) <= 10 and all(0.1 <= v <= 10 for v in vals)


def test_csv_and_svg(tmp_path):
    sol = solve_exit_time(Topology.SQUARE, 2, 16, 10, quarter=True)
    row = exit_row(sol, separatrix_report(sol))
    p = write_exit_csv([row], tmp_path / "exit.csv")
    lines = p.read_text().splitlines()
    assert lines[0] == ",".join(EXIT_COLUMNS) and len(lines) == 2
    s = contour_svg(sol, tmp_path / "tau.svg")
    assert s.read_text().lstrip().startswith("<?xml") and "<svg" in s.read_text()
    sol.tau.to_csv(tmp_path / "tau.csv")
    assert (tmp_path / "tau.csv").read_text().count("\n") == sol.grid.full().n_nodes + 1
