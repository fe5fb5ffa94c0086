from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from cellflow.cellproblem import (
    EffectiveDiffusivity,
    discrete_trace,
    effective_diffusivity,
    energy_identity_residual,
    fit_power_law,
    fit_sigma0,
    gradient_energy,
    interior_deviation,
    max_spacing,
    per_unit_for,
    second_corrector,
    second_corrector_rhs,
    solve_correctors,
    symmetry_errors,
    write_sigma_csv,
)
from cellflow.linsolve import IncompatibleRhs


@pytest.fixture(scope="module")
def c100():
    return solve_correctors(100, 128)


def test_zero_amplitude():
    c = solve_correctors(0, 16)
    assert not np.any(c.chi1.values) and not np.any(c.chi2.values)
    s = effective_diffusivity(c)
    assert np.array_equal(s.sigma, np.eye(2))
    assert energy_identity_residual(c) == 0.0
    assert not np.any(second_corrector(c).values)


def test_resolution_rule_enforced():
    with pytest.raises(ValueError):
        solve_correctors(1024, 64)
    assert max_spacing(100) == pytest.approx(0.04)
    assert 2 / (2 * per_unit_for(100)) <= max_spacing(100)


def test_mean_zero(c100):
    assert abs(c100.chi1.mean()) <= 1e-10 and abs(c100.chi2.mean()) <= 1e-10


def test_sup_bound(c100):
    assert c100.chi1.sup() <= 1 + 5 * c100.h


def test_symmetries(c100):
    err = symmetry_errors(c100)
    assert all(v <= 1e-6 for v in err.values())


def test_swap_needs_even_n():
    err = symmetry_errors(solve_correctors(0.0, 33))
    assert np.isnan(err["swap"]) and err["odd_y1"] <= 1e-10


def test_offdiagonal_and_symmetry(c100):
    s = effective_diffusivity(c100)
    assert abs(s.sigma[0, 1]) <= 1e-3 * s.sigma[0, 0]
    assert abs(s.sigma[1, 0]) <= 1e-3 * s.sigma[0, 0]
    assert abs(s.sigma[0, 1] - s.sigma[1, 0]) <= 1e-10
    assert s.sigma[0, 0] >= 1 and s.sigma[1, 1] >= 1


def test_trace_identity(c100):
    s = effective_diffusivity(c100)
    E = gradient_energy(c100)
    assert abs(s.trace - (2 + E[0, 0] + E[1, 1])) <= 1e-12 * s.trace


def test_discrete_trace_close_to_energy_trace(c100):
    s = effective_diffusivity(c100)
    assert abs(discrete_trace(c100) - s.trace) <= 1e-3 * s.trace


def test_energy_identity_at_256():
    assert energy_identity_residual(solve_correctors(256, 257)) <= 1e-2


def test_energy_identity_refinement():
    r = [energy_identity_residual(solve_correctors(64, n)) for n in (64, 128)]
    assert r[1] <= 0.5 * r[0]


def test_sigma_nondecreasing():
    s = [effective_diffusivity(solve_correctors(A, 128)).sigma for A in (0, 16, 64, 100)]
    d = [m[0, 0] for m in s]
    assert all(b >= a for a, b in zip(d, d[1:]))


def test_interior_deviation_zero_amplitude():
    c = solve_correctors(0, 20)
    xi = interior_deviation(c)
    y1, y2 = c.grid.coordinates()
    k = np.flatnonzero((np.abs(y1 - 0.5) < 1e-12) & (np.abs(y2 - 0.3) < 1e-12))
    assert len(k) == 1 and xi.xi1.values.ravel()[k[0]] == pytest.approx(0.0, abs=1e-15)
    # sign(0) = 0 keeps xi odd
    assert xi.xi1.values[10, 5] == 0.0


def test_interior_deviation_bounded(c100):
    xi = interior_deviation(c100)
    assert xi.lp_norms[np.inf][0] <= 1.5 + 1e-9
    assert set(xi.lp_norms) == {1, 2, 4, np.inf}


def test_second_corrector_mean_zero(c100):
    t = second_corrector(c100)
    assert abs(t.mean()) <= 1e-12 * t.sup()


def test_second_corrector_analytic_rhs_compatible(c100):
    rhs = second_corrector_rhs(c100, "analytic")
    assert abs(rhs.mean()) <= 1e-8 * np.abs(rhs).max()


def test_second_corrector_rejects_incompatible(c100, monkeypatch):
    import cellflow.cellproblem as cp

    monkeypatch.setattr(cp, "second_corrector_rhs", lambda c: np.ones(c.grid.shape))
    with pytest.raises(IncompatibleRhs):
        cp.second_corrector(c100)


def test_fit_sigma0_exact():
    sig = [EffectiveDiffusivity(A, 2 * math.sqrt(A) * np.eye(2)) for A in (256, 1024, 4096)]
    s0, e = fit_sigma0(sig)
    assert s0 == pytest.approx(2.0, rel=1e-12) and e == pytest.approx(0.5, rel=1e-12)


def test_fit_sigma0_rejects():
    sig = [EffectiveDiffusivity(A, np.eye(2)) for A in (256, 1024)]
    with pytest.raises(ValueError):
        fit_sigma0(sig)
    with pytest.raises(ValueError):
        fit_sigma0([EffectiveDiffusivity(A, np.eye(2)) for A in (100, 200, 300)])


@given(st.floats(0.1, 10), st.floats(-2, 2))
def test_power_law_recovers(c, e):
    A = np.array([10.0, 100.0, 1000.0, 5000.0])
    c_fit, e_fit = fit_power_law(A, c * A**e)
    assert c_fit == pytest.approx(c, rel=1e-9) and e_fit == pytest.approx(e, abs=1e-9)


def test_sigma_csv(tmp_path):
    row = dict(A=1, sigma11=2, sigma22=2, sigma12=0, trace=4, xi_l1=0.1, tau12_inf=0.5)
    p = write_sigma_csv([row], tmp_path / "s.csv")
    assert p.read_text().splitlines()[0] == "A,sigma11,sigma22,sigma12,trace,xi_l1,tau12_inf"
