"""Expected exit time: -Lap tau + A v.grad tau = 1 in D, tau = 0 on the boundary.

Squares have side L (lattice aligned, so the sides lie on separatrices for
integer L); disks have radius L and are centred at the origin.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .cellproblem import EffectiveDiffusivity, max_spacing, per_unit_for
from .flow import separatrix_nodes
from .grid import SOLVER_SCHEME, Grid, ScalarField, Topology, assemble, disk_grid, square_grid
from .linsolve import DEFAULT_TOL, Solver, SolveReport


@dataclass(frozen=True, eq=False)
class ExitTimeSolution:
    grid: Grid
    tau: ScalarField
    A: float
    L: float
    report: SolveReport | None = None
    scheme: str = SOLVER_SCHEME

    @property
    def topology(self) -> Topology:
        return self.grid.topology

    @property
    def per_unit(self) -> int:
        return int(round(1.0 / self.grid.h))

    def max_tau(self) -> float:
        return float(self.tau.values.max())

    def center_value(self) -> float:
        c = self.grid.center if self.grid.topology is not Topology.DISK else (0.0, 0.0)
        return self.tau.at(*c)


def domain_grid(topology, L: float, per_unit: int, quarter: bool = False) -> Grid:
    topology = Topology(topology)
    if topology is Topology.SQUARE:
        return square_grid(L, per_unit, quarter=quarter)
    if topology is Topology.DISK:
        return disk_grid(L, per_unit, quarter=quarter)
    raise ValueError("exit times are posed on a square or a disk")


def resolve_per_unit(A: float, per_unit: int | None, rule: float, enforce_rule: bool) -> int:
    if per_unit is None:
        return per_unit_for(A, rule)
    if enforce_rule and 1.0 / per_unit > max_spacing(A, rule) * (1 + 1e-12):
        raise ValueError(
            f"spacing 1/{per_unit} does not resolve the boundary layer at A = {A:g}; "
            f"need at least {per_unit_for(A, rule)} nodes per unit length"
        )
    return per_unit


def solve_exit_time(
    topology,
    L: float,
    A: float,
    per_unit: int | None = None,
    *,
    scheme: str = SOLVER_SCHEME,
    quarter: bool = False,
    tol: float = DEFAULT_TOL,
    rule: float = 0.4,
    enforce_rule: bool = True,
    drift_sign: float = 1.0,
) -> ExitTimeSolution:
    """Solve the exit-time problem with spacing 1/per_unit.

    ``per_unit`` defaults to the smallest value with h <= rule / sqrt(A).
    """
    per_unit = resolve_per_unit(A, per_unit, rule, enforce_rule)
    grid = domain_grid(topology, L, per_unit, quarter)
    M = assemble(grid, A, scheme, drift_sign=drift_sign)
    solver = Solver(M, "lu")
    u, report = solver.solve(np.ones(grid.n_unknowns), tol)
    report.require("exit-time solve")
    return ExitTimeSolution(grid, ScalarField.from_unknowns(grid, u), A, L, report, scheme)


def torsion_square_max(L: float = 1.0, terms: int = 50) -> float:
    """Centre value of -Lap u = 1 on a square of side L, by Fourier series."""
    s = 0.0
    for m in range(1, 2 * terms, 2):
        for n in range(1, 2 * terms, 2):
            s += 16.0 / (np.pi**4 * m * n * (m * m + n * n)) * np.sin(m * np.pi / 2) * np.sin(n * np.pi / 2)
    return float(s * L * L)


@dataclass(frozen=True)
class ProfileDeviation:
    deviation: float
    normalized: float
    max_tau: float
    trace: float


def homogenized_profile_deviation(sol: ExitTimeSolution, sigma: EffectiveDiffusivity,
                                  trace: float | None = None) -> ProfileDeviation:
    """max |tau(x) - (L^2 - |x|^2) / (2 tr sigma)| over interior disk nodes."""
    if sol.topology is not Topology.DISK:
        raise ValueError("the homogenized profile comparison needs a disk solution")
    if sigma.A != sol.A:
        raise ValueError(f"sigma computed at A={sigma.A}, solution at A={sol.A}")
    tr = sigma.expansion_trace if trace is None else trace
    x1, x2 = sol.grid.coordinates()
    profile = (sol.L**2 - x1**2 - x2**2) / (2.0 * tr)
    inside = sol.grid.interior
    dev = float(np.max(np.abs(sol.tau.values[inside] - profile[inside])))
    scale = sol.L / max(sol.A, 1e-300) ** 0.25 if sol.A > 0 else np.inf
    return ProfileDeviation(dev, dev / scale, sol.max_tau(), tr)


@dataclass(frozen=True)
class SeparatrixReport:
    max_on_sep: float
    max_global: float
    ratio: float
    n_nodes: int = 0


def separatrix_report(sol: ExitTimeSolution, tol: float | None = None) -> SeparatrixReport:
    """Largest exit time on nodes with |H| < tol against the global maximum."""
    g = sol.grid
    if tol is None:
        tol = g.h
    idx = separatrix_nodes(g, tol)
    if idx.size == 0:
        raise ValueError("no grid nodes on the separatrices for this tolerance")
    vals = sol.tau.values.ravel()
    on_sep = float(vals[idx].max())
    glob = float(vals.max())
    return SeparatrixReport(on_sep, glob, on_sep / glob if glob > 0 else 0.0, int(idx.size))


def ball_exit_time_bound(area: float) -> float:
    """Centre exit time of the Brownian motion dX = sqrt(2) dW from a disk of this area."""
    return area / (4.0 * np.pi)


def drift_independent_bound_check(sol: ExitTimeSolution, tau_max: float | None = None) -> bool:
    """max tau <= |D| / (4 pi) + 5 h L, the equal-area ball bound."""
    if sol.topology is Topology.SQUARE:
        area = sol.L**2
    else:
        area = np.pi * sol.L**2
    m = sol.max_tau() if tau_max is None else tau_max
    return bool(m <= ball_exit_time_bound(area) + 5.0 * sol.grid.h * sol.L)


EXIT_COLUMNS = ["L", "A", "topology", "max_tau", "tau_center", "sep_max", "ratio", "deviation"]


def exit_row(sol: ExitTimeSolution, sep: SeparatrixReport | None = None,
             deviation: ProfileDeviation | None = None) -> dict:
    return {
        "L": sol.L,
        "A": sol.A,
        "topology": sol.topology.value,
        "max_tau": sol.max_tau(),
        "tau_center": sol.center_value(),
        "sep_max": sep.max_on_sep if sep else float("nan"),
        "ratio": sep.ratio if sep else float("nan"),
        "deviation": deviation.deviation if deviation else float("nan"),
    }


def write_exit_csv(rows, path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(EXIT_COLUMNS)
        for r in rows:
            w.writerow([r[k] if isinstance(r[k], str) else f"{r[k]:.17g}" for k in EXIT_COLUMNS])
    return path


def contour_svg(sol: ExitTimeSolution, path, levels: int = 10, title: str | None = None) -> Path:
    """Filled contour plot of tau with ``levels`` bands, written as SVG."""
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    f = sol.tau.unfold()
    x1, x2 = f.grid.coordinates()
    fig, ax = plt.subplots(figsize=(5, 5))
    cs = ax.contourf(x1, x2, f.values, levels=levels, cmap="viridis")
    fig.colorbar(cs, ax=ax, label=r"$\tau$")
    ax.set_aspect("equal")
    ax.set_xlabel(r"$x_1$")
    ax.set_ylabel(r"$x_2$")
    ax.set_title(title or rf"$\tau$, $L={sol.L:g}$, $A={sol.A:g}$")
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fig.savefig(path, format="svg")
    plt.close(fig)
    return path
