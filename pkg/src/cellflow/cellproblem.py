"""Cell problem on the period cell [-1, 1)^2.

Correctors chi_j are the mean-zero periodic solutions of

    -Lap chi_j + A v . grad chi_j = -A v_j,

the effective diffusivity is sigma_ij = delta_ij + <grad chi_i . grad chi_j>,
and the second corrector tau12 solves the same operator with right side

    -2 d_1 chi_1 - 2 d_2 chi_2 + A (v_1 chi_1 + v_2 chi_2 - <v_1 chi_1> - <v_2 chi_2>).

Two right-side conventions are offered.  ``analytic`` samples the formulas
above at the nodes.  ``consistent`` (default) applies the discrete stencil to
the slow profiles instead: the corrector right side is minus the stencil
applied to the linear function y_j, and the second-corrector right side is
built from the stencil's commutators with y_j.  Both agree to O(h^2) for a
resolved boundary layer, but only the consistent version makes the two-scale
expansion an exact discrete identity, which is what the disk checks rely on
when the cell Peclet number A h is large.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .flow import velocity
from .grid import SOLVER_SCHEME, Grid, ScalarField, Topology, assemble, build_grid, face_gradients
from .linsolve import DEFAULT_TOL, Solver, SolveReport, check_compatible, solve_periodic_meanzero

GRID_RULE = 0.4


def max_spacing(A: float, rule: float = GRID_RULE) -> float:
    """Largest spacing resolving the 1/sqrt(A) boundary layer."""
    return rule / np.sqrt(max(A, 1.0))


def per_unit_for(A: float, rule: float = GRID_RULE) -> int:
    """Smallest integer nodes-per-unit-length satisfying h <= rule / sqrt(A)."""
    return int(np.ceil(1.0 / max_spacing(A, rule) - 1e-12))


@dataclass(frozen=True, eq=False)
class StencilMoments:
    """Local moments of the periodic stencil, m_ik summed against offsets d = y_k - y_i.

    drift[j] = sum_k m_ik d_j          (stencil applied to y_j)
    second[j] = sum_k m_ik d_j^2       (stencil applied to y_j^2, centred at y_i)
    """

    drift: tuple[np.ndarray, np.ndarray]
    second: tuple[np.ndarray, np.ndarray]
    offsets: tuple[np.ndarray, np.ndarray]


def stencil_moments(grid: Grid, matrix) -> StencilMoments:
    coo = matrix.tocoo()
    n1, n2 = grid.shape
    i1, i2 = np.divmod(coo.row, n2)
    k1, k2 = np.divmod(coo.col, n2)
    # unwrap periodic neighbours to signed offsets in units of h
    d1 = (k1 - i1 + n1 // 2) % n1 - n1 // 2
    d2 = (k2 - i2 + n2 // 2) % n2 - n2 // 2
    d1 = d1 * grid.h
    d2 = d2 * grid.h
    m = grid.n_nodes
    drift = (
        np.bincount(coo.row, coo.data * d1, m).reshape(grid.shape),
        np.bincount(coo.row, coo.data * d2, m).reshape(grid.shape),
    )
    second = (
        np.bincount(coo.row, coo.data * d1 * d1, m).reshape(grid.shape),
        np.bincount(coo.row, coo.data * d2 * d2, m).reshape(grid.shape),
    )
    return StencilMoments(drift, second, (d1, d2))


def _commutator(grid: Grid, matrix, offsets, values: np.ndarray) -> np.ndarray:
    """sum_k m_ik (y_k - y_i) u_k for one offset component."""
    coo = matrix.tocoo()
    u = values.ravel()
    return np.bincount(coo.row, coo.data * offsets * u[coo.col], grid.n_nodes).reshape(grid.shape)


@dataclass(frozen=True, eq=False)
class CorrectorSet:
    A: float
    chi1: ScalarField
    chi2: ScalarField
    resolution: int
    scheme: str = SOLVER_SCHEME
    rhs_mode: str = "consistent"
    reports: tuple[SolveReport, ...] = ()
    matrix: object = field(default=None, repr=False)
    solver: Solver | None = field(default=None, repr=False)

    @property
    def grid(self) -> Grid:
        return self.chi1.grid

    @property
    def h(self) -> float:
        return self.grid.h

    def chi(self, j: int) -> ScalarField:
        return (self.chi1, self.chi2)[j]


def solve_correctors(
    A: float,
    resolution: int,
    *,
    scheme: str = SOLVER_SCHEME,
    rhs: str = "consistent",
    tol: float = 1e-11,
    enforce_rule: bool = True,
    rule: float = GRID_RULE,
) -> CorrectorSet:
    """Solve both cell problems on a ``resolution``-by-``resolution`` periodic grid."""
    grid = build_grid(Topology.PERIODIC, 2.0, resolution)
    if enforce_rule and grid.h > max_spacing(A, rule) * (1 + 1e-12):
        raise ValueError(
            f"h = {grid.h:.4g} does not resolve the boundary layer at A = {A:g}; "
            f"need h <= {max_spacing(A, rule):.4g} (resolution >= {int(np.ceil(2 / max_spacing(A, rule)))})"
        )
    M = assemble(grid, A, scheme)
    if A == 0:
        z = np.zeros(grid.shape)
        rep = SolveReport(0, 0.0, True, "trivial")
        return CorrectorSet(A, ScalarField(grid, z), ScalarField(grid, z.copy()), resolution,
                            scheme, rhs, (rep, rep), M, None)
    solver = Solver(M, "lu", periodic=True)
    if rhs == "consistent":
        mom = stencil_moments(grid, M)
        sources = [-mom.drift[0], -mom.drift[1]]
    elif rhs == "analytic":
        y1, y2 = grid.coordinates()
        v1, v2 = velocity(y1, y2)
        sources = [-A * v1, -A * v2]
    else:
        raise ValueError(f"unknown rhs mode {rhs!r}")
    fields, reports = [], []
    for src in sources:
        u, rep = solve_periodic_meanzero(M, src.ravel(), tol, solver=solver, compat_rel=1e-8)
        rep.require("corrector solve")
        fields.append(ScalarField(grid, u.reshape(grid.shape)))
        reports.append(rep)
    return CorrectorSet(A, fields[0], fields[1], resolution, scheme, rhs, tuple(reports), M, solver)


@dataclass(frozen=True)
class EffectiveDiffusivity:
    A: float
    sigma: np.ndarray
    trace_consistent: float | None = None
    resolution: int | None = None
    sigma0_fit: float | None = None

    @property
    def trace(self) -> float:
        return float(np.trace(self.sigma))

    @property
    def expansion_trace(self) -> float:
        """Trace constant of the discrete two-scale expansion (falls back to trace)."""
        return self.trace if self.trace_consistent is None else self.trace_consistent


def gradient_energy(c: CorrectorSet) -> np.ndarray:
    """Matrix <grad chi_i . grad chi_j> from periodic face differences."""
    g = [face_gradients(c.chi(j).values, c.h) for j in range(2)]
    E = np.empty((2, 2))
    for i in range(2):
        for j in range(2):
            E[i, j] = np.mean(g[i][0] * g[j][0] + g[i][1] * g[j][1])
    return E


def discrete_trace(c: CorrectorSet) -> float:
    """-<g> where g is the stencil's second-corrector source before centering."""
    if c.A == 0:
        return 2.0
    g = _expansion_source(c)
    return float(-g.mean())


def _expansion_source(c: CorrectorSet) -> np.ndarray:
    grid = c.grid
    mom = stencil_moments(grid, c.matrix)
    g = 0.5 * (mom.second[0] + mom.second[1])
    for j in range(2):
        g = g + _commutator(grid, c.matrix, mom.offsets[j], c.chi(j).values)
    return g


def effective_diffusivity(c: CorrectorSet) -> EffectiveDiffusivity:
    sigma = np.eye(2) + gradient_energy(c)
    return EffectiveDiffusivity(c.A, sigma, discrete_trace(c), c.resolution)


def energy_identity_residual(c: CorrectorSet) -> float:
    """max_i |<|grad chi_i|^2> + A <v_i chi_i>| / (1 + <|grad chi_i|^2>)."""
    if c.A == 0:
        return 0.0
    E = gradient_energy(c)
    y1, y2 = c.grid.coordinates()
    v = velocity(y1, y2)
    out = 0.0
    for i in range(2):
        r = abs(E[i, i] + c.A * np.mean(v[i] * c.chi(i).values)) / (1.0 + E[i, i])
        out = max(out, r)
    return float(out)


@dataclass(frozen=True, eq=False)
class InteriorDeviation:
    xi1: ScalarField
    xi2: ScalarField
    lp_norms: dict = field(default_factory=dict)


def interior_deviation(c: CorrectorSet, ps=(1, 2, 4, np.inf)) -> InteriorDeviation:
    """xi_i = chi_i + y_i - sign(y_i)/2, with sign(0) = 0."""
    y1, y2 = c.grid.coordinates()
    xi1 = ScalarField(c.grid, c.chi1.values + y1 - 0.5 * np.sign(y1))
    xi2 = ScalarField(c.grid, c.chi2.values + y2 - 0.5 * np.sign(y2))
    norms = {p: (xi1.lp_norm(p), xi2.lp_norm(p)) for p in ps}
    return InteriorDeviation(xi1, xi2, norms)


def second_corrector_rhs(c: CorrectorSet, mode: str | None = None) -> np.ndarray:
    mode = c.rhs_mode if mode is None else mode
    if c.A == 0:
        return np.zeros(c.grid.shape)
    if mode == "consistent":
        g = _expansion_source(c)
        return g - g.mean()
    h = c.h
    y1, y2 = c.grid.coordinates()
    v1, v2 = velocity(y1, y2)
    x1, x2 = c.chi1.values, c.chi2.values
    d1 = (np.roll(x1, -1, axis=0) - np.roll(x1, 1, axis=0)) / (2 * h)
    d2 = (np.roll(x2, -1, axis=1) - np.roll(x2, 1, axis=1)) / (2 * h)
    p = v1 * x1 + v2 * x2
    return -2 * d1 - 2 * d2 + c.A * (p - p.mean())


def second_corrector(c: CorrectorSet, tol: float = 1e-11) -> ScalarField:
    """Mean-zero periodic tau12; the right side mean is checked before solving."""
    rhs = second_corrector_rhs(c)
    if c.A == 0:
        return ScalarField(c.grid, np.zeros(c.grid.shape))
    check_compatible(rhs.ravel(), 1e-8)
    u, rep = solve_periodic_meanzero(c.matrix, rhs.ravel(), tol, solver=c.solver, compat_rel=1e-8)
    rep.require("second corrector solve")
    return ScalarField(c.grid, u.reshape(c.grid.shape))


def fit_power_law(A_values, y_values) -> tuple[float, float]:
    """Least-squares fit log y = log c + e log A; returns (c, e)."""
    logA = np.log(np.asarray(A_values, dtype=float))
    logy = np.log(np.asarray(y_values, dtype=float))
    e, logc = np.polyfit(logA, logy, 1)
    return float(np.exp(logc)), float(e)


def fit_sigma0(sigmas: list[EffectiveDiffusivity]) -> tuple[float, float]:
    """Fit sigma_11(A) = sigma0 A^exponent; needs >= 3 amplitudes over >= 1 decade."""
    if len(sigmas) < 3:
        raise ValueError("need at least three amplitudes to fit sigma0")
    A = np.array([s.A for s in sigmas], dtype=float)
    if A.min() <= 0 or A.max() / A.min() < 10 * (1 - 1e-12):
        raise ValueError("amplitudes must be positive and span at least one decade")
    return fit_power_law(A, [s.sigma[0, 0] for s in sigmas])


def mirror_index(n: int) -> np.ndarray:
    """Index of the node at -y for each node y of an n-point periodic axis."""
    return (n - np.arange(n)) % n


def symmetry_errors(c: CorrectorSet) -> dict[str, float]:
    """Relative violations of the corrector symmetries.

    chi1 is odd in y1 and even in y2, chi2 the reverse.  Swapping the axes
    reverses the flow and a shift by one flow cell reverses it back, so
    chi2(y1, y2) = chi1(y2 + 1, y1); that shift is a lattice translation only
    for even n, so ``swap`` is nan otherwise.
    """
    n = c.grid.n1
    a, b = c.chi1.values, c.chi2.values
    sup = max(float(np.max(np.abs(a))), float(np.max(np.abs(b))), 1e-300)
    m = mirror_index(n)
    swap = np.max(np.abs(b - np.roll(a.T, n // 2, axis=0))) / sup if n % 2 == 0 else np.nan
    return {
        "odd_y1": float(np.max(np.abs(a + a[m, :])) / sup),
        "even_y2": float(np.max(np.abs(a - a[:, m])) / sup),
        "chi2_odd_y2": float(np.max(np.abs(b + b[:, m])) / sup),
        "chi2_even_y1": float(np.max(np.abs(b - b[m, :])) / sup),
        "swap": float(swap),
    }


def write_sigma_csv(rows, path) -> Path:
    """Write ``A,sigma11,sigma22,sigma12,trace,xi_l1,tau12_inf`` rows."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["A", "sigma11", "sigma22", "sigma12", "trace", "xi_l1", "tau12_inf"])
        for r in rows:
            w.writerow([f"{r[k]:.17g}" for k in ("A", "sigma11", "sigma22", "sigma12", "trace", "xi_l1", "tau12_inf")])
    return path
