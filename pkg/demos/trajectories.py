"""Sample paths of dX = -A v(X) dt + sqrt(2) dW at moderate and large amplitude.

At A = L^3 a path wanders through many cells like a Brownian motion with
enhanced diffusivity; at A = L^4.5 it is carried along the separatrices and
spends long stretches circling inside single cells.  Also compares the Monte
Carlo mean exit time with the PDE value at the moderate amplitude.

    python3 demos/trajectories.py [outdir]
"""

from __future__ import annotations

import sys
from pathlib import Path

from cellflow.exittime import solve_exit_time
from cellflow.grid import Topology
from cellflow.sde import SdeConfig, dump_trajectories, estimate_exit_time, read_trajectories, trajectory_svg

L = 8


def main(out: Path) -> None:
    for beta in (3.0, 4.5):
        A = L**beta
        cfg = SdeConfig(A, L, 0.05 / A, seed=1)
        p = dump_trajectories(cfg, (0.0, 0.0), 3, out / f"traj_beta{beta:g}.csv")
        trajs = read_trajectories(p)
        svg = trajectory_svg(cfg, [trajs[k] for k in sorted(trajs)], out / f"traj_beta{beta:g}.svg",
                             title=rf"$L={L}$, $A=L^{{{beta:g}}}$")
        print(f"beta={beta:g}: exit times " + ", ".join(f"{t[-1, 0]:.3f}" for t in trajs.values()) + f" -> {svg}")
    A = L**3
    st = estimate_exit_time(SdeConfig(A, L, 0.0125 / A, 2000, seed=2), (0.0, 0.0))
    pde = solve_exit_time(Topology.SQUARE, L, A, quarter=True).center_value()
    print(f"A=L^3: Monte Carlo tau(0) = {st.mean:.4f} +- {st.stderr:.4f}, PDE {pde:.4f}")


if __name__ == "__main__":
    main(Path(sys.argv[1] if len(sys.argv) > 1 else "demos-out"))
