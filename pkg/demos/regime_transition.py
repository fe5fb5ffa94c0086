"""Homogenization versus averaging: eigenvalues and exit times along A = L^beta.

For beta = 3 the principal eigenvalue tracks tr sigma(A) / L^2; for beta = 5
it stops decaying with L and the exit time concentrates inside the cells,
away from the separatrices.  Writes a contour plot of tau for each point.

    python3 demos/regime_transition.py [outdir]
"""

from __future__ import annotations

import sys
from pathlib import Path

from cellflow.cellproblem import effective_diffusivity, per_unit_for, solve_correctors
from cellflow.eigen import principal_eigenpair
from cellflow.exittime import contour_svg, separatrix_report, solve_exit_time
from cellflow.grid import Topology

POINTS = ((4, 3.0), (8, 3.0), (2, 5.0), (4, 5.0))


def main(out: Path) -> None:
    print(f"{'L':>3} {'beta':>5} {'A':>7} {'lambda':>9} {'lam L^2/tr':>11} {'tau(0)':>8} {'sep ratio':>9}")
    for L, beta in POINTS:
        A = float(L) ** beta
        pu = per_unit_for(A)
        tr = effective_diffusivity(solve_correctors(A, 2 * pu, enforce_rule=False)).trace
        lam = principal_eigenpair(L, A, pu, quarter=True).lam
        sol = solve_exit_time(Topology.SQUARE, L, A, pu, quarter=True)
        ratio = separatrix_report(sol).ratio
        print(f"{L:3d} {beta:5.1f} {A:7.0f} {lam:9.4f} {lam * L * L / tr:11.3f} "
              f"{sol.center_value():8.4f} {ratio:9.3f}")
        contour_svg(sol, out / f"tau_L{L}_beta{beta:g}.svg")
    print(f"contour plots in {out}")


if __name__ == "__main__":
    main(Path(sys.argv[1] if len(sys.argv) > 1 else "demos-out"))
