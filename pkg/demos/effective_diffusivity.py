"""Effective diffusivity of the cellular flow and its sqrt(A) growth.

Solves both cell problems for a few amplitudes, prints sigma_11, the energy
identity residual and the interior deviation, then fits sigma_11 = sigma0 A^e.

    python3 demos/effective_diffusivity.py [n]
"""

from __future__ import annotations

import sys

from cellflow.cellproblem import (
    effective_diffusivity,
    energy_identity_residual,
    fit_sigma0,
    interior_deviation,
    per_unit_for,
    solve_correctors,
)

AMPLITUDES = (64, 256, 1024)


def main(n: int | None = None) -> None:
    sig = []
    print(f"{'A':>6} {'n':>5} {'sigma11':>10} {'sigma11/sqrt(A)':>16} {'energy res':>11} {'|xi1|_L1':>9}")
    for A in AMPLITUDES:
        nn = n or 2 * per_unit_for(A)
        c = solve_correctors(A, nn)
        s = effective_diffusivity(c)
        sig.append(s)
        xi = interior_deviation(c, ps=(1,)).lp_norms[1][0]
        print(f"{A:6d} {nn:5d} {s.sigma[0, 0]:10.4f} {s.sigma[0, 0] / A**0.5:16.4f} "
              f"{energy_identity_residual(c):11.2e} {xi:9.4f}")
    s0, e = fit_sigma0(sig)
    print(f"fit: sigma11 ~ {s0:.3f} * A^{e:.3f}")


if __name__ == "__main__":
    main(int(sys.argv[1]) if len(sys.argv) > 1 else None)
