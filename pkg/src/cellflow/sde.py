"""Euler-Maruyama sampling of dX = -A v(X) dt + sqrt(2) dW and Monte Carlo exit times.

Every path draws its Gaussian increments from its own Philox stream keyed by
(seed, path_index), so a path is reproducible independently of how paths are
batched or scheduled.
"""

from __future__ import annotations

import csv
import math
import warnings
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable

import numpy as np
from numba import njit

from .flow import Point2
from .grid import Topology, lattice_center

BLOCK = 512
# "euler-maruyama": x += -A v(x) dt + sqrt(2 dt) N.
# "strang-rk4": half RK4 step of the flow, the same Gaussian increment, half
# RK4 step.  Explicit Euler spirals outward on closed streamlines (growth
# factor sqrt(1 + (pi A dt)^2) per step), which at dt = 0.2/A destroys the
# cell trapping; the split step keeps orbits closed at the same dt.
INTEGRATORS = ("strang-rk4", "euler-maruyama")
MAX_POINTS_PER_PATH = 100_000


def max_dt(A: float) -> float:
    """Largest admissible step: min(1e-3, 0.2 / A)."""
    return 1e-3 if A <= 0 else min(1e-3, 0.2 / A)


@dataclass(frozen=True)
class SdeConfig:
    A: float
    L: float
    dt: float | None = None
    n_paths: int = 10_000
    seed: int = 0
    max_steps: int = 1_000_000
    topology: Topology = Topology.SQUARE
    integrator: str = "strang-rk4"

    def __post_init__(self):
        object.__setattr__(self, "topology", Topology(self.topology))
        if self.integrator not in INTEGRATORS:
            raise ValueError(f"integrator must be one of {INTEGRATORS}")
        if self.topology is Topology.PERIODIC:
            raise ValueError("exit times need a bounded domain")
        if self.A < 0 or self.L <= 0:
            raise ValueError("need A >= 0 and L > 0")
        if self.dt is None:
            object.__setattr__(self, "dt", max_dt(self.A))
        if not self.dt > 0 or self.dt > max_dt(self.A) * (1 + 1e-12):
            raise ValueError(f"dt must lie in (0, {max_dt(self.A):.3g}] at A = {self.A:g}")
        if self.n_paths < 1 or self.max_steps < 1:
            raise ValueError("n_paths and max_steps must be positive")
        if not 0 <= self.seed < 2**64:
            raise ValueError("seed must be a 64-bit unsigned integer")

    @property
    def center(self) -> tuple[float, float]:
        return lattice_center(self.L) if self.topology is Topology.SQUARE else (0.0, 0.0)

    def inside(self, x1, x2):
        c1, c2 = self.center
        if self.topology is Topology.SQUARE:
            half = 0.5 * self.L
            return (np.abs(x1 - c1) < half) & (np.abs(x2 - c2) < half)
        return (x1 - c1) ** 2 + (x2 - c2) ** 2 < self.L**2


@dataclass(frozen=True)
class PathResult:
    path_index: int
    exit_time: float | None  # None when censored
    steps: int
    trajectory: np.ndarray | None = None  # (k, 3) rows of t, x1, x2

    @property
    def censored(self) -> bool:
        return self.exit_time is None


@dataclass(frozen=True)
class ExitStats:
    mean: float
    stderr: float
    n_exited: int
    n_censored: int
    degenerate: bool = False  # a single exited path: stderr is reported as 0
    times: np.ndarray = field(default=None, repr=False, compare=False)

    @property
    def n_paths(self) -> int:
        return self.n_exited + self.n_censored

    @property
    def censored_fraction(self) -> float:
        return self.n_censored / self.n_paths if self.n_paths else 0.0


def path_generator(seed: int, path_index: int) -> np.random.Generator:
    """Counter-based stream for one path."""
    return np.random.Generator(np.random.Philox(key=[int(seed), int(path_index)]))


def _check_start(config: SdeConfig, x0) -> np.ndarray:
    p = Point2(*x0)
    if not bool(config.inside(p.x1, p.x2)):
        raise ValueError(f"starting point ({p.x1}, {p.x2}) is not strictly inside the domain")
    return np.array([p.x1, p.x2])


@njit(cache=True)
def _drift(x1, x2, A):
    # -A v(x) with v = (-sin(pi x1) cos(pi x2), cos(pi x1) sin(pi x2))
    s1, c1 = math.sin(math.pi * x1), math.cos(math.pi * x1)
    s2, c2 = math.sin(math.pi * x2), math.cos(math.pi * x2)
    return A * s1 * c2, -A * c1 * s2


@njit(cache=True)
def _rk4(x1, x2, A, h):
    k11, k12 = _drift(x1, x2, A)
    k21, k22 = _drift(x1 + 0.5 * h * k11, x2 + 0.5 * h * k12, A)
    k31, k32 = _drift(x1 + 0.5 * h * k21, x2 + 0.5 * h * k22, A)
    k41, k42 = _drift(x1 + h * k31, x2 + h * k32, A)
    return (x1 + h / 6.0 * (k11 + 2 * k21 + 2 * k31 + k41),
            x2 + h / 6.0 * (k12 + 2 * k22 + 2 * k32 + k42))


@njit(cache=True)
def _advance(x, noise, A, dt, strang, square, c1, c2, size, exit_step, traj, record):
    """Advance each path through one block of increments; stop at first exit."""
    sq = math.sqrt(2.0 * dt)
    n, m = noise.shape[0], noise.shape[1]
    for i in range(n):
        a, b = x[i, 0], x[i, 1]
        for s in range(m):
            if strang:
                a, b = _rk4(a, b, A, 0.5 * dt)
                a += sq * noise[i, s, 0]
                b += sq * noise[i, s, 1]
                a, b = _rk4(a, b, A, 0.5 * dt)
            else:
                d1, d2 = _drift(a, b, A)
                a += d1 * dt + sq * noise[i, s, 0]
                b += d2 * dt + sq * noise[i, s, 1]
            if record:
                traj[i, s, 0] = a
                traj[i, s, 1] = b
            if square:
                inside = abs(a - c1) < size and abs(b - c2) < size
            else:
                inside = (a - c1) ** 2 + (b - c2) ** 2 < size * size
            if not inside:
                exit_step[i] = s + 1
                break
        x[i, 0] = a
        x[i, 1] = b


def _simulate(config: SdeConfig, x0, indices: np.ndarray, record: bool = False,
              normals: Callable[[int, int], np.ndarray] | None = None):
    """Advance the given paths until exit or max_steps.

    ``normals(path_index, n)`` returns an (n, 2) block of standard normals; by
    default it comes from the path's Philox stream.  Returns per-path step
    counts (-1 when censored) and, if requested, trajectories as (k, 3)
    arrays of t, x1, x2.
    """
    n = len(indices)
    if normals is None:
        gens = [path_generator(config.seed, i) for i in indices]

        def fill(k, out):
            gens[k].standard_normal(out=out)
    else:
        def fill(k, out):
            out[...] = np.asarray(normals(int(indices[k]), out.shape[0]), dtype=float).reshape(out.shape)

    square = config.topology is Topology.SQUARE
    size = 0.5 * config.L if square else config.L
    c1, c2 = config.center
    strang = config.integrator == "strang-rk4"
    x = np.tile(np.asarray(x0, dtype=float), (n, 1))
    steps = np.full(n, -1, dtype=np.int64)
    active = np.arange(n)
    pieces = [[np.array([[0.0, *x0]])] for _ in range(n)] if record else None
    done = 0
    while active.size and done < config.max_steps:
        m = min(BLOCK, config.max_steps - done)
        noise = np.empty((active.size, m, 2))
        for j, k in enumerate(active):
            fill(k, noise[j])
        xa = np.ascontiguousarray(x[active])
        ex = np.full(active.size, -1, dtype=np.int64)
        traj = np.zeros((active.size, m, 2)) if record else np.zeros((1, 1, 2))
        _advance(xa, noise, float(config.A), float(config.dt), strang, square,
                 float(c1), float(c2), float(size), ex, traj, record)
        x[active] = xa
        if record:
            for j, k in enumerate(active):
                cnt = m if ex[j] < 0 else ex[j]
                t = (done + np.arange(1, cnt + 1)) * config.dt
                pieces[k].append(np.column_stack([t, traj[j, :cnt]]))
        hit = ex >= 0
        steps[active[hit]] = done + ex[hit]
        active = active[~hit]
        done += m
    trajs = [np.vstack(p) for p in pieces] if record else None
    return steps, trajs


def simulate_path(config: SdeConfig, x0, path_index: int, record: bool = False,
                  normals: Callable[[int, int], np.ndarray] | None = None) -> PathResult:
    """One Euler-Maruyama path from x0; exit time is the step count times dt."""
    start = _check_start(config, x0)
    steps, trajs = _simulate(config, start, np.array([path_index]), record, normals)
    k = int(steps[0])
    traj = trajs[0] if record else None
    if k < 0:
        return PathResult(path_index, None, config.max_steps, traj)
    return PathResult(path_index, k * config.dt, k, traj)


def _stats(times: np.ndarray, n_censored: int) -> ExitStats:
    n = times.size
    if n == 0:
        return ExitStats(float("nan"), float("nan"), 0, n_censored, True, times)
    mean = float(times.mean())
    if n == 1:
        return ExitStats(mean, 0.0, 1, n_censored, True, times)
    stderr = float(times.std(ddof=1) / math.sqrt(n))
    return ExitStats(mean, stderr, n, n_censored, False, times)


def estimate_exit_time(config: SdeConfig, x0=None, chunk: int = 20_000) -> ExitStats:
    """Monte Carlo mean exit time over config.n_paths paths (index order)."""
    start = _check_start(config, config.center if x0 is None else x0)
    steps_all = []
    for lo in range(0, config.n_paths, chunk):
        idx = np.arange(lo, min(lo + chunk, config.n_paths))
        steps, _ = _simulate(config, start, idx)
        steps_all.append(steps)
    steps = np.concatenate(steps_all)
    exited = steps >= 0
    stats = _stats(steps[exited] * config.dt, int((~exited).sum()))
    if stats.censored_fraction > 0.01:
        warnings.warn(
            f"{stats.n_censored} of {config.n_paths} paths censored at max_steps={config.max_steps}; "
            "the mean exit time is biased low",
            RuntimeWarning,
            stacklevel=2,
        )
    return stats


def subsample(traj: np.ndarray, limit: int = MAX_POINTS_PER_PATH) -> np.ndarray:
    """Keep at most ``limit`` rows, always including the first and last."""
    if len(traj) <= limit:
        return traj
    keep = np.unique(np.linspace(0, len(traj) - 1, limit).round().astype(int))
    return traj[keep]


def dump_trajectories(config: SdeConfig, x0, k: int, path, limit: int = MAX_POINTS_PER_PATH) -> Path:
    """Write k trajectories as CSV rows path_id,t,x1,x2."""
    if k < 1:
        raise ValueError("k must be at least 1")
    start = _check_start(config, x0)
    _, trajs = _simulate(config, start, np.arange(k), record=True)
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["path_id", "t", "x1", "x2"])
        for i, tr in enumerate(trajs):
            for t, a, b in subsample(tr, limit):
                w.writerow([i, f"{t:.17g}", f"{a:.17g}", f"{b:.17g}"])
    return path


def read_trajectories(path) -> dict[int, np.ndarray]:
    data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    return {int(i): data[data[:, 0] == i, 1:] for i in np.unique(data[:, 0])}


def mean_square_displacement(traj: np.ndarray, lags) -> np.ndarray:
    """Time-averaged |X(t+lag) - X(t)|^2 for integer step lags."""
    xy = traj[:, 1:]
    return np.array([np.mean(np.sum((xy[lag:] - xy[:-lag]) ** 2, axis=1)) for lag in lags])


STATS_COLUMNS = ["L", "A", "x0_1", "x0_2", "mean", "stderr", "n_exited", "n_censored", "seed"]


def stats_row(config: SdeConfig, x0, stats: ExitStats) -> dict:
    return {"L": config.L, "A": config.A, "x0_1": x0[0], "x0_2": x0[1], "mean": stats.mean,
            "stderr": stats.stderr, "n_exited": stats.n_exited, "n_censored": stats.n_censored,
            "seed": config.seed}


def write_stats_csv(rows, path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(STATS_COLUMNS)
        for r in rows:
            w.writerow([r[c] if isinstance(r[c], (int, np.integer)) else f"{r[c]:.17g}" for c in STATS_COLUMNS])
    return path


def trajectory_svg(config: SdeConfig, trajectories, path, title: str | None = None) -> Path:
    """Overlay trajectories on the separatrix lattice of the domain."""
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    c1, c2 = config.center
    half = 0.5 * config.L if config.topology is Topology.SQUARE else config.L
    fig, ax = plt.subplots(figsize=(5, 5))
    for k in range(math.floor(c1 - half), math.ceil(c1 + half) + 1):
        ax.axvline(k, color="0.85", lw=0.6)
    for k in range(math.floor(c2 - half), math.ceil(c2 + half) + 1):
        ax.axhline(k, color="0.85", lw=0.6)
    if config.topology is Topology.SQUARE:
        ax.add_patch(plt.Rectangle((c1 - half, c2 - half), 2 * half, 2 * half, fill=False, color="k"))
    else:
        ax.add_patch(plt.Circle((c1, c2), half, fill=False, color="k"))
    for i, tr in enumerate(trajectories):
        ax.plot(tr[:, 1], tr[:, 2], lw=0.5, label=f"path {i}")
    ax.set_xlim(c1 - half * 1.05, c1 + half * 1.05)
    ax.set_ylim(c2 - half * 1.05, c2 + half * 1.05)
    ax.set_aspect("equal")
    ax.set_xlabel(r"$x_1$")
    ax.set_ylabel(r"$x_2$")
    ax.set_title(title or rf"$X_t$, $L={config.L:g}$, $A={config.A:g}$")
    ax.legend(loc="upper right", fontsize=7)
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fig.savefig(path, format="svg")
    plt.close(fig)
    return path
