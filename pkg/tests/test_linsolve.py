from __future__ import annotations

import numpy as np
import pytest
import scipy.sparse as sp
from hypothesis import given
from hypothesis import strategies as st

from cellflow.grid import Topology, assemble, build_grid, periodic_grid, square_grid
from cellflow.linsolve import (
    IncompatibleRhs,
    Solver,
    SolverError,
    default_max_iter,
    solve,
    solve_periodic_meanzero,
)


def test_identity_one_iteration():
    b = np.array([1.0, -2.0, 3.0])
    x, rep = solve(sp.identity(3, format="csr"), b)
    assert rep.converged and rep.iterations <= 1
    assert np.allclose(x, b, atol=1e-14)


def test_small_dense_oracle():
    M = np.array([[4.0, -1.0, 0.5], [1.0, 5.0, -2.0], [0.0, 1.0, 3.0]])
    b = np.array([1.0, 2.0, 3.0])
    x, rep = solve(sp.csr_matrix(M), b, tol=1e-14)
    assert rep.converged
    assert np.max(np.abs(x - np.linalg.solve(M, b))) <= 1e-10


def test_laplacian_nine_unknowns():
    g = build_grid(Topology.SQUARE, 1.0, 5)
    M = assemble(g, 0.0)
    b = np.ones(9)
    x, rep = solve(M, b, tol=1e-14)
    assert np.max(np.abs(x - np.linalg.solve(M.toarray(), b))) <= 1e-10


@pytest.mark.parametrize("pre", ["none", "jacobi", "ilu", "ilu-fine", "lu"])
def test_preconditioners_agree(pre):
    g = square_grid(2, 12)
    M = assemble(g, 300.0, "central")
    b = np.linspace(0, 1, g.n_unknowns)
    x, rep = solve(M, b, tol=1e-10, preconditioner=pre, max_iter=5000)
    assert rep.converged
    assert np.max(np.abs(x - np.linalg.solve(M.toarray(), b))) <= 1e-8 * np.max(np.abs(x))


@given(st.integers(0, 2**32 - 1), st.floats(0, 500), st.sampled_from(["jacobi", "ilu", "lu"]))
def test_report_matches_independent_residual(seed, A, pre):
    rng = np.random.default_rng(seed)
    g = square_grid(2, 8)
    M = assemble(g, A, "exp-fitted")
    b = rng.standard_normal(g.n_unknowns)
    x, rep = solve(M, b, tol=1e-9, preconditioner=pre, max_iter=2000)
    res = np.linalg.norm(b - M @ x) / np.linalg.norm(b)
    assert abs(res - rep.residual) <= 1e-13 * max(1.0, res) + 1e-13
    assert rep.converged == (rep.residual <= 1e-9)
    if rep.converged:
        assert res <= 1e-9


def test_nonconvergence_reported_not_raised():
    g = square_grid(4, 10)
    M = assemble(g, 0.0)
    x, rep = solve(M, np.ones(g.n_unknowns), tol=1e-12, max_iter=2, preconditioner="none")
    assert not rep.converged
    with pytest.raises(SolverError):
        rep.require()


def test_rejects_bad_input():
    with pytest.raises(ValueError):
        solve(sp.csr_matrix(np.ones((2, 3))), np.ones(2))
    with pytest.raises(ValueError):
        solve(sp.identity(2, format="csr"), np.ones(3))
    with pytest.raises(ValueError):
        solve(sp.identity(2, format="csr"), np.ones(2), tol=0.0)


def test_deterministic():
    g = square_grid(2, 10)
    M = assemble(g, 100.0)
    b = np.cos(np.arange(g.n_unknowns))
    x1, _ = solve(M, b, preconditioner="jacobi")
    x2, _ = solve(M, b, preconditioner="jacobi")
    assert np.array_equal(x1, x2)


def test_default_max_iter():
    assert default_max_iter(10_000) == 2000


def test_periodic_zero_rhs():
    g = periodic_grid(8)
    x, rep = solve_periodic_meanzero(assemble(g, 5.0), np.zeros(g.n_unknowns))
    assert rep.converged and not np.any(x)


def test_periodic_pseudo_inverse_oracle():
    g = build_grid(Topology.PERIODIC, 2.0, 16)
    M = assemble(g, 0.0)
    Y1, Y2 = g.coordinates()
    b = (np.sin(np.pi * Y1) * np.sin(np.pi * Y2)).ravel()
    x, rep = solve_periodic_meanzero(M, b, tol=1e-13)
    # dense least squares with the mean-zero constraint appended as a row
    Md = np.vstack([M.toarray(), np.ones(g.n_unknowns)])
    oracle = np.linalg.lstsq(Md, np.append(b, 0.0), rcond=None)[0]
    assert np.max(np.abs(x - oracle)) <= 1e-8


@pytest.mark.parametrize("pre", ["jacobi", "ilu", "lu"])
def test_periodic_mean_zero_output(pre):
    g = periodic_grid(10)
    M = assemble(g, 80.0, "central")
    Y1, Y2 = g.coordinates()
    b = (np.cos(np.pi * Y1) * np.sin(2 * np.pi * Y2) + np.sin(np.pi * Y1)).ravel()
    x, rep = solve_periodic_meanzero(M, b, tol=1e-10, preconditioner=pre, max_iter=5000)
    assert rep.converged
    assert abs(x.mean()) <= 1e-12 * np.max(np.abs(x))


def test_incompatible_rhs():
    g = periodic_grid(6)
    with pytest.raises(IncompatibleRhs):
        solve_periodic_meanzero(assemble(g, 1.0), np.ones(g.n_unknowns))


def test_periodic_solver_reuse_guard():
    g = periodic_grid(6)
    M = assemble(g, 1.0)
    with pytest.raises(ValueError):
        solve_periodic_meanzero(M, np.zeros(g.n_unknowns), solver=Solver(M))
