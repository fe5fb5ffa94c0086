"""Regime scans, CSV/SVG emission and the command line interface.

    python3 -m cellflow [--config PATH] [--out DIR] [--threads N] [--seed S] COMMAND ...

Commands: cell, exit, eig, sde, scan, verify.  Exit status 0 on success,
1 when a verify check fails, 2 on configuration errors.
"""

from __future__ import annotations

import argparse
import csv
import logging
import math
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .cellproblem import (
    effective_diffusivity,
    interior_deviation,
    per_unit_for,
    second_corrector,
    solve_correctors,
    write_sigma_csv,
)
from .config import Config, ConfigError, load_config
from .eigen import heinze_diagnostic, principal_eigenpair, regime_scan_record, write_eigen_csv
from .exittime import (
    contour_svg,
    exit_row,
    separatrix_report,
    solve_exit_time,
    write_exit_csv,
)
from .grid import Topology
from .sde import (
    SdeConfig,
    dump_trajectories,
    estimate_exit_time,
    max_dt,
    read_trajectories,
    stats_row,
    trajectory_svg,
    write_stats_csv,
)

log = logging.getLogger("cellflow")

SCAN_COLUMNS = ["L", "beta", "A", "resolution", "sigma_trace", "lambda", "tau_center",
                "tau_sep_ratio", "mc_mean", "mc_stderr", "status", "tol"]


def _topology(name: str) -> Topology:
    return {"square": Topology.SQUARE, "disk": Topology.DISK}.get(name) or Topology(name)


def square_unknowns(L: float, per_unit: int) -> int:
    """Unknowns of the quarter square grid."""
    return int((L * per_unit / 2) ** 2)


def scan_resolution(L: float, A: float, cfg: Config) -> tuple[int, bool]:
    """Nodes per unit length for a scan point and whether the rule was relaxed."""
    pu = per_unit_for(A, cfg.rule) if A > 0 else 16
    relaxed = False
    while pu > 4 and (square_unknowns(L, pu) > cfg.max_unknowns or (2 * pu) ** 2 > cfg.max_unknowns):
        pu = int(pu * 0.9)
        relaxed = True
    return pu, relaxed


@dataclass(frozen=True)
class ScanPoint:
    L: int
    beta: float

    @property
    def A(self) -> float:
        return float(self.L) ** self.beta


def run_point(point: ScanPoint, cfg: Config) -> dict:
    """All scan quantities for one (L, beta); failures go into the status column."""
    L, A = point.L, point.A
    row = {k: float("nan") for k in SCAN_COLUMNS}
    row.update(L=L, beta=point.beta, A=A, tol=cfg.tol, status="ok")
    try:
        pu, relaxed = scan_resolution(L, A, cfg)
        row["resolution"] = pu
        if relaxed:
            row["status"] = f"relaxed(sqrtA*h={math.sqrt(A) / pu:.2f})"
        if A > 0:
            c = solve_correctors(A, 2 * pu, scheme=cfg.scheme, enforce_rule=False)
            row["sigma_trace"] = effective_diffusivity(c).trace
            del c
        else:
            row["sigma_trace"] = 2.0
        eig = principal_eigenpair(L, A, pu, cfg.eig_tol, scheme=cfg.scheme, quarter=True, enforce_rule=False)
        row["lambda"] = eig.lam
        sol = solve_exit_time(Topology.SQUARE, L, A, pu, scheme=cfg.scheme, quarter=True,
                              tol=cfg.tol, enforce_rule=False)
        row["tau_center"] = sol.center_value()
        row["tau_sep_ratio"] = separatrix_report(sol).ratio
        if cfg.mc_paths > 0:
            dt = min(max_dt(A), cfg.mc_dt_factor / A) if A > 0 else max_dt(0)
            st = estimate_exit_time(SdeConfig(A, L, dt, cfg.mc_paths, cfg.seed), (0.0, 0.0))
            row["mc_mean"], row["mc_stderr"] = st.mean, st.stderr
    except Exception as exc:  # recorded, the scan goes on
        log.warning("scan point L=%s beta=%s failed: %s", L, point.beta, exc)
        row["status"] = f"error: {type(exc).__name__}: {exc}".replace(",", ";")
    return row


def run_scan(cfg: Config) -> list[dict]:
    """Evaluate every (L, beta), write scan.csv and transition.svg."""
    points = [ScanPoint(L, b) for L in cfg.L_list for b in cfg.beta_list]
    if cfg.threads > 1:
        with ProcessPoolExecutor(cfg.threads) as pool:
            rows = list(pool.map(run_point, points, [cfg] * len(points)))
    else:
        rows = [run_point(p, cfg) for p in points]
    rows.sort(key=lambda r: (r["L"], r["beta"]))
    out = Path(cfg.out)
    write_scan_csv(rows, out / "scan.csv")
    transition_svg(rows, out / "transition.svg")
    return rows


def _fmt(v) -> str:
    if isinstance(v, str):
        return v
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return repr(float(v))


def write_scan_csv(rows, path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(SCAN_COLUMNS)
        for r in rows:
            w.writerow([_fmt(r[k]) for k in SCAN_COLUMNS])
    return path


def read_scan_csv(path) -> list[dict]:
    with Path(path).open() as fh:
        return list(csv.DictReader(fh))


def transition_svg(rows, path) -> Path:
    """lambda L^2 / tr sigma against beta, one line per L."""
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    fig, ax = plt.subplots(figsize=(6, 4))
    for L in sorted({r["L"] for r in rows}):
        sel = [r for r in rows if r["L"] == L and np.isfinite(r["lambda"]) and np.isfinite(r["sigma_trace"])]
        if not sel:
            continue
        b = [r["beta"] for r in sel]
        y = [r["lambda"] * L**2 / r["sigma_trace"] for r in sel]
        ax.plot(b, y, "o-", label=f"$L={L}$")
    ax.axvline(4.0, color="0.6", ls="--", lw=0.8)
    if ax.lines[:-1]:
        ax.set_yscale("log")
    ax.set_xlabel(r"$\beta$  ($A = L^\beta$)")
    ax.set_ylabel(r"$\lambda L^2 / \mathrm{tr}\,\bar\sigma(A)$")
    if ax.lines[:-1]:
        ax.legend()
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fig.tight_layout()
    fig.savefig(path, format="svg")
    plt.close(fig)
    return path


# ------------------------------------------------------------------ verify


def run_verify(only=None, fault: str | None = None, stream=None) -> int:
    """Run the acceptance checks, print a table, return the exit status."""
    from . import acceptance

    stream = sys.stdout if stream is None else stream
    names = list(acceptance.CHECKS) if not only else list(only)
    unknown = [n for n in names if n not in acceptance.CHECKS]
    if unknown:
        raise ConfigError(f"unknown checks: {', '.join(unknown)}")
    failed = 0
    print(f"{'check':<5} {'result':<6} {'seconds':>8}  detail", file=stream)
    for n in names:
        fn = acceptance.CHECKS[n]
        try:
            chk = fn(fault=fault) if n == "C7" else fn()
        except Exception as exc:
            chk = acceptance.Check(n, False, f"error: {type(exc).__name__}: {exc}")
        failed += not chk.passed
        print(f"{n:<5} {'PASS' if chk.passed else 'FAIL':<6} {chk.seconds:8.1f}  {chk.name}: {chk.detail}",
              file=stream, flush=True)
    print(f"{len(names) - failed}/{len(names)} checks passed", file=stream)
    return 1 if failed else 0


# ------------------------------------------------------------------ CLI


def _per_unit(cfg: Config) -> int | None:
    return cfg.resolution or None


def cmd_cell(cfg: Config, args) -> int:
    amplitudes = args.A or [cfg.A]
    rows = []
    for A in amplitudes:
        n = args.n or 2 * per_unit_for(max(A, 1.0), cfg.rule)
        c = solve_correctors(A, n, scheme=cfg.scheme)
        s = effective_diffusivity(c)
        xi = interior_deviation(c, ps=(1,))
        t12 = second_corrector(c)
        rows.append({"A": A, "sigma11": s.sigma[0, 0], "sigma22": s.sigma[1, 1], "sigma12": s.sigma[0, 1],
                     "trace": s.trace, "xi_l1": xi.lp_norms[1][0], "tau12_inf": t12.sup()})
        print(f"A={A:g} n={n}: sigma11={s.sigma[0, 0]:.6g} trace={s.trace:.6g}")
    print(write_sigma_csv(rows, Path(cfg.out) / "sigma.csv"))
    return 0


def cmd_exit(cfg: Config, args) -> int:
    topo = _topology(cfg.topology)
    quarter = float(cfg.L).is_integer() and int(cfg.L) % 2 == 0
    sol = solve_exit_time(topo, cfg.L, cfg.A, _per_unit(cfg), scheme=cfg.scheme, quarter=quarter,
                          tol=cfg.tol, enforce_rule=not cfg.resolution)
    sep = separatrix_report(sol) if topo is Topology.SQUARE else None
    out = Path(cfg.out)
    print(write_exit_csv([exit_row(sol, sep)], out / "exit.csv"))
    sol.tau.to_csv(out / "tau_field.csv")
    print(contour_svg(sol, out / "tau.svg"))
    print(f"max tau={sol.max_tau():.6g} tau(center)={sol.center_value():.6g}")
    return 0


def cmd_eig(cfg: Config, args) -> int:
    quarter = float(cfg.L).is_integer() and int(cfg.L) % 2 == 0
    e = principal_eigenpair(cfg.L, cfg.A, _per_unit(cfg), cfg.eig_tol, scheme=cfg.scheme, quarter=quarter,
                            enforce_rule=not cfg.resolution)
    pu = int(round(1 / e.grid.h))
    tr = effective_diffusivity(solve_correctors(cfg.A, 2 * pu, scheme=cfg.scheme, enforce_rule=False)).trace \
        if cfg.A > 0 else 2.0
    rec = regime_scan_record(cfg.L, cfg.A, e, tr)
    row = {"L": cfg.L, "A": cfg.A, "lambda": e.lam, "residual": e.residual, "iters": e.iterations,
           "ratio": rec.ratio, "heinze_r": heinze_diagnostic(e, cfg.A)}
    print(write_eigen_csv([row], Path(cfg.out) / "eigen.csv"))
    print(f"lambda={e.lam:.8g} residual={e.residual:.2e} iterations={e.iterations} ratio={rec.ratio:.4g}")
    return 0


def cmd_sde(cfg: Config, args) -> int:
    topo = _topology(cfg.topology)
    sc = SdeConfig(cfg.A, cfg.L, args.dt, cfg.paths, cfg.seed, topology=topo)
    x0 = tuple(args.x0) if args.x0 else sc.center
    st = estimate_exit_time(sc, x0)
    out = Path(cfg.out)
    print(write_stats_csv([stats_row(sc, x0, st)], out / "sde_stats.csv"))
    print(f"mean exit={st.mean:.6g} +- {st.stderr:.2g} (censored {st.n_censored})")
    if cfg.trajectories:
        p = dump_trajectories(sc, x0, cfg.trajectories, out / "trajectories.csv")
        trajs = read_trajectories(p)
        print(p, trajectory_svg(sc, [trajs[k] for k in sorted(trajs)], out / "trajectories.svg"))
    return 0


def cmd_scan(cfg: Config, args) -> int:
    rows = run_scan(cfg)
    bad = [r for r in rows if str(r["status"]).startswith("error")]
    print(f"{len(rows)} scan points written to {Path(cfg.out) / 'scan.csv'} ({len(bad)} failed)")
    return 0


def cmd_verify(cfg: Config, args) -> int:
    only = args.only.split(",") if args.only else None
    return run_verify(only, args.inject_fault)


def _floats(text: str) -> list[float]:
    return [float(x) for x in text.split(",") if x.strip()]


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="cellflow", description="Cellular-flow advection-diffusion experiments.")
    p.add_argument("--config", type=Path, help="flat key=value configuration file")
    p.add_argument("--out", type=Path, help="output directory (overrides CELLFLOW_OUT)")
    p.add_argument("--threads", type=int, help="worker processes for scans")
    p.add_argument("--seed", type=int, help="Monte Carlo seed")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    c = sub.add_parser("cell", help="correctors and effective diffusivity")
    c.add_argument("--A", type=_floats, help="comma-separated amplitudes")
    c.add_argument("--n", type=int, help="cell nodes per axis")

    for name, helptext in (("exit", "expected exit time"), ("eig", "principal eigenpair"), ("sde", "Monte Carlo exit time")):
        s = sub.add_parser(name, help=helptext)
        s.add_argument("--L", type=float)
        s.add_argument("--A", type=float)
        s.add_argument("--resolution", type=int, help="nodes per unit length")
        if name != "eig":
            s.add_argument("--topology", choices=["square", "disk"])
        if name == "sde":
            s.add_argument("--paths", type=int)
            s.add_argument("--dt", type=float)
            s.add_argument("--x0", type=_floats)
            s.add_argument("--trajectories", type=int)

    s = sub.add_parser("scan", help="regime scan over L and beta")
    s.add_argument("--L-list", dest="L_list", type=lambda t: tuple(int(float(x)) for x in t.split(",")))
    s.add_argument("--beta-list", dest="beta_list", type=lambda t: tuple(_floats(t)))
    s.add_argument("--mc-paths", dest="mc_paths", type=int)

    v = sub.add_parser("verify", help="run the acceptance checks")
    v.add_argument("--only", help="comma-separated check ids, e.g. C1,C7")
    v.add_argument("--inject-fault", choices=["flip-advection", "drop-advection"])
    return p


COMMANDS = {"cell": cmd_cell, "exit": cmd_exit, "eig": cmd_eig, "sde": cmd_sde, "scan": cmd_scan,
            "verify": cmd_verify}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:  # argparse already printed the message
        return int(exc.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    overrides = {k: getattr(args, k, None) for k in
                 ("out", "threads", "seed", "L", "A", "resolution", "paths", "trajectories",
                  "L_list", "beta_list", "mc_paths")}
    if getattr(args, "topology", None):
        overrides["topology"] = args.topology
    if args.command == "cell":
        overrides.pop("A")
    try:
        cfg = load_config(args.config, overrides)
        t0 = time.perf_counter()
        status = COMMANDS[args.command](cfg, args)
        log.info("%s finished in %.1fs", args.command, time.perf_counter() - t0)
        return status
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
