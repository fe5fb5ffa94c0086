"""Principal Dirichlet eigenpair of -Lap + A v.grad and the eigenvalue-side checks."""

from __future__ import annotations

import csv
import logging
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import scipy.linalg as sla
import scipy.sparse.linalg as spla

from .cellproblem import EffectiveDiffusivity
from .exittime import domain_grid, resolve_per_unit
from .flow import H_MAX, stream, stream_gradient, velocity
from .grid import SOLVER_SCHEME, Grid, ScalarField, Topology, assemble
from .linsolve import Solver

log = logging.getLogger(__name__)

_INNER_TOL = 1e-9


class SignChange(RuntimeError):
    """Converged eigenvector is not single signed."""


class EigenNotConverged(RuntimeError):
    pass


@dataclass(frozen=True, eq=False)
class Eigenpair:
    lam: float
    phi: ScalarField
    residual: float
    iterations: int
    A: float = 0.0
    L: float = 0.0
    method: str = "inverse-power"

    @property
    def grid(self) -> Grid:
        return self.phi.grid


def _weighted_dot(w, a, b):
    return float(np.sum(w * a * b))


def _start_vector(grid: Grid) -> np.ndarray:
    x1, x2 = grid.coordinates()
    if grid.topology is Topology.DISK:
        r = np.sqrt(x1**2 + x2**2) / grid.radius
        bump = np.cos(0.5 * np.pi * np.minimum(r, 1.0))
    else:
        side = (grid.full().n1 - 1) * grid.h
        c1, c2 = grid.center
        bump = np.cos(np.pi * (x1 - c1) / side) * np.cos(np.pi * (x2 - c2) / side)
    return np.maximum(bump, 0.0)[grid.interior] + 1e-3


def principal_eigenpair(
    L: float,
    A: float,
    per_unit: int | None = None,
    tol: float = 1e-8,
    *,
    topology=Topology.SQUARE,
    scheme: str = SOLVER_SCHEME,
    quarter: bool = False,
    rule: float = 0.4,
    enforce_rule: bool = True,
    max_iter: int = 80,
    drift_sign: float = 1.0,
) -> Eigenpair:
    """Inverse power iteration with a sparse LU of the operator.

    Converges to the eigenvalue of smallest modulus, which for this operator
    is the real, simple principal eigenvalue.  When the spectrum is clustered
    (averaging regime, many nearly decoupled cells) and the iteration stalls,
    the same factorization drives a shift-invert Arnoldi step instead.
    """
    per_unit = resolve_per_unit(A, per_unit, rule, enforce_rule)
    grid = domain_grid(topology, L, per_unit, quarter)
    M = assemble(grid, A, scheme, drift_sign=drift_sign)
    solver = Solver(M, "lu")
    w = grid.node_weights()[grid.interior]

    phi = _start_vector(grid)
    phi /= np.sqrt(_weighted_dot(w, phi, phi))
    lam_old = np.inf
    lam = np.nan
    method = "inverse-power"
    converged = False
    it = 0
    for it in range(1, max_iter + 1):
        u, rep = solver.solve(phi, tol=_INNER_TOL)
        rep.require("inverse iteration solve")
        u /= np.sqrt(_weighted_dot(w, u, u))
        if _weighted_dot(w, u, phi) < 0:
            u = -u
        phi = u
        Mphi = M @ phi
        lam = _weighted_dot(w, phi, Mphi) / _weighted_dot(w, phi, phi)
        single_signed = np.all(phi > 0) or np.all(phi < 0)
        residual = _residual(Mphi, lam, phi)
        if abs(lam - lam_old) < tol * abs(lam) and residual <= tol and single_signed:
            converged = True
            break
        lam_old = lam

    if not converged:
        log.info("inverse iteration stalled at L=%g A=%g (residual %.2e); using shift-invert Arnoldi", L, A, residual)
        lam, phi, it2 = _arnoldi(M, solver, phi)
        it += it2
        method = "shift-invert-arnoldi"
        residual = _residual(M @ phi, lam, phi)
        if residual > tol:
            raise EigenNotConverged(f"eigen residual {residual:.2e} above tolerance {tol:.1e}")

    if np.sum(phi) < 0:
        phi = -phi
    phi /= np.sqrt(_weighted_dot(w, phi, phi))
    if not np.all(phi > 0):
        raise SignChange(
            f"principal eigenvector changes sign (min {phi.min():.3e}); refine the grid"
        )
    return Eigenpair(float(lam), ScalarField.from_unknowns(grid, phi), residual, it, A, L, method)


def _residual(Mphi, lam, phi) -> float:
    return float(np.linalg.norm(Mphi - lam * phi) / (abs(lam) * np.linalg.norm(phi)))


def _arnoldi(M, solver: Solver, v0: np.ndarray, k: int = 6):
    n = M.shape[0]
    op = spla.LinearOperator((n, n), matvec=lambda x: solver.solve(x, tol=_INNER_TOL)[0], dtype=float)
    mu, vecs = spla.eigs(op, k=min(k, n - 2), which="LM", v0=v0, tol=1e-13)
    lam = 1.0 / mu
    # principal eigenvalue: real, smallest real part, single-signed vector
    order = np.argsort(lam.real)
    for i in order:
        vec = vecs[:, i].real
        if abs(lam[i].imag) < 1e-8 * abs(lam[i]) and (np.all(vec > 0) or np.all(vec < 0)):
            return float(lam[i].real), vec, k
    i = order[0]
    return float(lam[i].real), vecs[:, i].real, k


def heinze_diagnostic(e: Eigenpair | ScalarField, A: float) -> float:
    """r = A * int |v.grad phi|^2 / int |grad phi|^2 with central differences."""
    f = e.phi if isinstance(e, Eigenpair) else e
    f = f.unfold()
    g = f.grid
    d1, d2 = np.gradient(f.values, g.h, edge_order=2)
    x1, x2 = g.coordinates()
    v1, v2 = velocity(x1, x2)
    num = np.sum((v1 * d1 + v2 * d2) ** 2)
    den = np.sum(d1**2 + d2**2)
    return float(A * num / den) if den > 0 else 0.0


def first_integral_quotient(grid: Grid) -> float:
    """Discrete Rayleigh quotient of w = H on the domain (needs sides on separatrices)."""
    f = stream_field(grid).unfold()
    g = f.grid
    d1, d2 = np.gradient(f.values, g.h, edge_order=2)
    return float(np.sum(d1**2 + d2**2) / np.sum(f.values**2))


def stream_field(grid: Grid) -> ScalarField:
    x1, x2 = grid.coordinates()
    return ScalarField(grid, np.where(grid.interior, stream(x1, x2), 0.0))


def strong_flow_variational_bound(resolution: int = 400, knots: int = 64, identity_only: bool = False) -> float:
    """min over w = f(H) of int |grad w|^2 / int w^2 on one flow cell.

    f is continuous piecewise linear on ``knots`` equal intervals of [0, 1/pi]
    with f(0) = 0.  The cell integrals reduce to a generalized symmetric
    eigenproblem K c = q Mass c assembled by midpoint quadrature
    (``resolution`` points per axis).
    """
    t = (np.arange(resolution) + 0.5) / resolution
    x1, x2 = np.meshgrid(t, t, indexing="ij")
    Hq = stream(x1, x2).ravel()
    g1, g2 = stream_gradient(x1, x2)
    G = (g1**2 + g2**2).ravel()
    wq = 1.0 / resolution**2
    s = np.linspace(0.0, H_MAX, knots + 1)
    ds = s[1] - s[0]
    # hat functions a = 1..knots on the knot grid, f(0) = 0
    seg = np.minimum((Hq / ds).astype(int), knots - 1)
    loc = Hq / ds - seg
    # values and slopes of the two hats supported on each segment
    K = np.zeros((knots + 1, knots + 1))
    Mm = np.zeros((knots + 1, knots + 1))
    left_val, right_val = 1.0 - loc, loc
    left_d, right_d = -1.0 / ds, 1.0 / ds
    for (ia, va, da) in ((seg, left_val, left_d), (seg + 1, right_val, right_d)):
        for (ib, vb, db) in ((seg, left_val, left_d), (seg + 1, right_val, right_d)):
            np.add.at(K, (ia, ib), wq * G * da * db)
            np.add.at(Mm, (ia, ib), wq * va * vb)
    K = K[1:, 1:]
    Mm = Mm[1:, 1:]
    if identity_only:
        c = s[1:]
        return float(c @ K @ c / (c @ Mm @ c))
    vals = sla.eigh(K, Mm, eigvals_only=True, subset_by_index=[0, 0])
    return float(vals[0])


@dataclass(frozen=True)
class RegimeRecord:
    L: float
    A: float
    lam: float
    trace_sigma: float
    ratio: float


def regime_scan_record(L: float, A: float, eig: Eigenpair | float, sigma: EffectiveDiffusivity | float) -> RegimeRecord:
    """Record lambda L^2 / tr sigma (the trace, not a single diagonal entry)."""
    lam = eig.lam if isinstance(eig, Eigenpair) else float(eig)
    if isinstance(sigma, EffectiveDiffusivity):
        if sigma.A != A:
            raise ValueError("sigma computed at a different amplitude")
        tr = sigma.trace
    else:
        tr = float(sigma)
    return RegimeRecord(L, A, lam, tr, lam * L * L / tr)


EIGEN_COLUMNS = ["L", "A", "lambda", "residual", "iters", "ratio", "heinze_r"]


def write_eigen_csv(rows, path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(EIGEN_COLUMNS)
        for r in rows:
            w.writerow([f"{float(r[k]):.17g}" for k in EIGEN_COLUMNS])
    return path
