from __future__ import annotations

import math

import numpy as np
import pytest
import scipy.sparse as sp
from hypothesis import given
from hypothesis import strategies as st

from cellflow.flow import stream_gradient, velocity
from cellflow.grid import (
    SCHEMES,
    ScalarField,
    Topology,
    apply,
    assemble,
    build_grid,
    disk_grid,
    periodic_grid,
    read_field_csv,
    square_grid,
    write_field_csv,
)
from cellflow.linsolve import solve


def test_square_example():
    g = build_grid(Topology.SQUARE, 1.0, 5)
    assert g.h == 0.25 and g.n_unknowns == 9


def test_periodic_example():
    g = build_grid(Topology.PERIODIC, 2.0, 8)
    assert g.h == 0.25 and g.n_unknowns == 64


def test_disk_example():
    g = build_grid(Topology.DISK, 1.0, 5)
    assert g.n_nodes == 25 and g.n_unknowns == 9


def test_rejects_small_resolution():
    with pytest.raises(ValueError):
        build_grid(Topology.SQUARE, 1.0, 2)
    with pytest.raises(ValueError):
        build_grid(Topology.SQUARE, -1.0, 5)


@pytest.mark.parametrize("scheme", SCHEMES)
def test_laplacian_stencil(scheme):
    g = build_grid(Topology.SQUARE, 1.0, 6)
    M = assemble(g, 0.0, scheme).toarray()
    h2 = g.h**2
    # the interior-most unknown has all four neighbours among the unknowns
    idx = g.unknown_index
    r = idx[2, 2]
    row = M[r]
    assert row[r] == pytest.approx(4 / h2)
    for di, dj in ((1, 0), (-1, 0), (0, 1), (0, -1)):
        assert row[idx[2 + di, 2 + dj]] == pytest.approx(-1 / h2)
    assert np.count_nonzero(row) == 5


def test_central_advection_rows_sum_to_zero():
    g = periodic_grid(16)
    adv = assemble(g, 50.0, "central") - assemble(g, 0.0, "central")
    assert np.max(np.abs(adv @ np.ones(g.n_unknowns))) < 1e-9 * 50 / g.h
    # opposite pairs: east/west coefficients differ only by the face velocity sign
    A = adv.tocsr()
    assert abs(A.diagonal()).max() < 1e-9 * 50 / g.h


def test_upwind_m_matrix_sign_pattern():
    g = square_grid(3, 10)
    M = assemble(g, 400.0, "upwind").tocoo()
    off = M.data[M.row != M.col]
    assert np.all(off <= 0)


def test_exp_fitted_sign_pattern_and_reduction():
    g = square_grid(3, 10)
    M = assemble(g, 400.0, "exp-fitted").tocoo()
    assert np.all(M.data[M.row != M.col] <= 0)
    diff = assemble(g, 0.0, "exp-fitted") - assemble(g, 0.0, "central")
    assert abs(diff).max() == 0.0


def _operator_error(n_per_unit, A, scheme):
    g = periodic_grid(n_per_unit)
    X1, X2 = g.coordinates()
    k = math.pi
    u = np.sin(k * X1) * np.cos(k * X2) + 0.3 * np.cos(k * X1 + 0.2)
    lap = -2 * k * k * np.sin(k * X1) * np.cos(k * X2) - 0.3 * k * k * np.cos(k * X1 + 0.2)
    u1 = k * np.cos(k * X1) * np.cos(k * X2) - 0.3 * k * np.sin(k * X1 + 0.2)
    u2 = -k * np.sin(k * X1) * np.sin(k * X2)
    v1, v2 = velocity(X1, X2)
    exact = -lap + A * (v1 * u1 + v2 * u2)
    M = assemble(g, A, scheme)
    return np.max(np.abs(M @ u.ravel() - exact.ravel()))


@pytest.mark.parametrize("scheme, order", [("central", 2), ("exp-fitted", 2), ("upwind", 1)])
def test_consistency_order(scheme, order):
    e = [_operator_error(n, 3.0, scheme) for n in (32, 64, 128)]
    observed = [math.log2(a / b) for a, b in zip(e, e[1:])]
    assert abs(observed[-1] - order) <= 0.4


@given(st.integers(0, 2**32 - 1), st.sampled_from(["upwind", "exp-fitted"]), st.floats(0, 2000))
def test_discrete_maximum_principle(seed, scheme, A):
    rng = np.random.default_rng(seed)
    g = square_grid(2, 8)
    M = assemble(g, A, scheme)
    b = rng.random(g.n_unknowns) * (rng.random(g.n_unknowns) < 0.5)
    x = sp.linalg.spsolve(M.tocsc(), b)
    assert np.min(x) >= -1e-12 * max(1.0, np.max(np.abs(x)))


@pytest.mark.parametrize("scheme", SCHEMES)
def test_periodic_null_space(scheme):
    g = periodic_grid(12)
    M = assemble(g, 30.0, scheme)
    one = np.ones(g.n_unknowns)
    assert np.max(np.abs(M @ one)) < 1e-9 / g.h**2
    s = np.linalg.svd(M.toarray(), compute_uv=False)
    assert s[-1] < 1e-8 and s[-2] > 1e-3


def test_apply_examples():
    x = np.arange(5.0)
    assert np.array_equal(apply(sp.identity(5, format="csr"), x), x)
    g = build_grid(Topology.SQUARE, 1.0, 33, center=(0.5, 0.5))
    M = assemble(g, 0.0)
    X1, X2 = g.coordinates()
    u = (np.sin(np.pi * X1) * np.sin(np.pi * X2))[g.interior]
    assert np.max(np.abs(apply(M, u) - 2 * np.pi**2 * u)) < 2 * g.h**2 * np.pi**4
    assert not np.any(apply(M, np.zeros(g.n_unknowns)))
    with pytest.raises(ValueError):
        apply(M, np.zeros(3))


def test_matrix_storage_sorted_unique():
    M = assemble(square_grid(2, 6), 10.0, "central")
    assert M.has_sorted_indices and M.has_canonical_format
    assert M.shape == (square_grid(2, 6).n_unknowns,) * 2


def test_quarter_grid_matches_full_solution():
    full = square_grid(2, 16)
    quarter = square_grid(2, 16, quarter=True)
    for g in (full, quarter):
        M = assemble(g, 64.0, "central")
        x, rep = solve(M, np.ones(g.n_unknowns), tol=1e-12)
        rep.require()
        if g.quarter:
            fq = ScalarField.from_unknowns(g, x).unfold()
        else:
            ff = ScalarField.from_unknowns(g, x)
    assert fq.values.shape == ff.values.shape
    assert np.max(np.abs(fq.values - ff.values)) < 1e-9 * ff.sup()


def test_disk_quarter_grid_mask():
    g = disk_grid(3.0, 4, quarter=True)
    full = disk_grid(3.0, 4)
    assert g.full().n_unknowns == full.n_unknowns


def test_face_velocities_divergence_free():
    from cellflow.grid import face_velocities

    g = periodic_grid(10)
    ve, vn = face_velocities(g)
    div = ve - np.roll(ve, 1, 0) + vn - np.roll(vn, 1, 1)
    assert np.max(np.abs(div)) < 1e-12


def test_field_csv_round_trip(tmp_path):
    g = build_grid(Topology.SQUARE, 1.0, 4)
    X1, X2 = g.coordinates()
    f = ScalarField(g, np.exp(X1) * np.cos(X2) / 3)
    p = write_field_csv(f, tmp_path / "f.csv")
    assert p.read_text().splitlines()[0] == "x1,x2,value"
    x1, x2, v = read_field_csv(p)
    assert np.array_equal(v, f.values.ravel()) and np.array_equal(x1, X1.ravel())
    assert np.array_equal(x2, X2.ravel())


def test_field_shape_checked():
    g = build_grid(Topology.SQUARE, 1.0, 4)
    with pytest.raises(ValueError):
        ScalarField(g, np.zeros(3))


def test_stream_gradient_matches_velocity():
    x = np.linspace(-1, 1, 7)
    g1, g2 = stream_gradient(x, x[::-1])
    v1, v2 = velocity(x, x[::-1])
    assert np.allclose(v1, -g2) and np.allclose(v2, g1)
