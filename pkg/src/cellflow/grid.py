"""Uniform Cartesian grids and finite-difference assembly of -Lap + A v.grad.

The operator is discretized in conservative form, div(-grad u + A v u), which
equals -Lap u + A v.grad u because v is divergence free.  Face velocities are
differences of the stream function across each face, so they are exactly
divergence free on the grid.  As a consequence constants lie in both the left
and the right null space of the periodic matrix: mean-zero right sides are
exactly compatible and solutions are unique up to a constant.

Each face flux has the form (alpha * u_left - beta * u_right) / h with
P = A v_face h the face Peclet number and

    central      alpha = 1 + P/2        beta = 1 - P/2
    upwind       alpha = 1 + max(P, 0)  beta = 1 - min(P, 0)
    exp-fitted   alpha = B(-P)          beta = B(P),   B(z) = z / (e^z - 1)

Nodes are stored in arrays of shape (n1, n2) indexed [i, j] -> (x1_i, x2_j)
and flattened row-major.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path

import numpy as np
import scipy.sparse as sp

from .flow import stream


class Topology(str, Enum):
    SQUARE = "dirichlet-square"
    DISK = "dirichlet-disk"
    PERIODIC = "periodic-cell"


SCHEMES = ("central", "upwind", "exp-fitted")
# Scheme used by the cell, exit-time and eigen solvers.  On grids that resolve
# the O(1/sqrt(A)) layers, central differences converge at second order while
# exponential fitting adds cross-stream diffusion of order A h.
SOLVER_SCHEME = "central"


@dataclass(frozen=True, eq=False)
class Grid:
    """Node lattice x = center + (k - offset) * h on one of three topologies.

    For Dirichlet topologies ``interior`` marks the unknowns; every other node
    carries the boundary value 0.  The periodic cell has no boundary.
    """

    n1: int
    n2: int
    h: float
    topology: Topology
    center: tuple[float, float] = (0.0, 0.0)
    radius: float | None = None
    quarter: bool = False
    interior: np.ndarray = field(repr=False, default=None)

    def __post_init__(self):
        if self.h <= 0:
            raise ValueError("grid spacing must be positive")
        if self.quarter and (self.periodic or tuple(self.center) != (0.0, 0.0)):
            raise ValueError("quarter grids need a Dirichlet domain centred at the origin")
        if self.interior is None:
            object.__setattr__(self, "interior", self._interior_mask())
        self.interior.setflags(write=False)
        unknown = np.full(self.shape, -1, dtype=np.int64)
        unknown[self.interior] = np.arange(int(self.interior.sum()))
        object.__setattr__(self, "_unknown", unknown)

    @property
    def shape(self) -> tuple[int, int]:
        return (self.n1, self.n2)

    @property
    def n_nodes(self) -> int:
        return self.n1 * self.n2

    @property
    def n_unknowns(self) -> int:
        return int(self.interior.sum())

    @property
    def periodic(self) -> bool:
        return self.topology is Topology.PERIODIC

    @property
    def unknown_index(self) -> np.ndarray:
        """Node -> unknown number, -1 on boundary/exterior nodes."""
        return self._unknown

    def axes(self) -> tuple[np.ndarray, np.ndarray]:
        if self.periodic:
            k1 = np.arange(self.n1) - self.n1 / 2
            k2 = np.arange(self.n2) - self.n2 / 2
        elif self.quarter:
            k1 = np.arange(self.n1, dtype=float)
            k2 = np.arange(self.n2, dtype=float)
        else:
            k1 = np.arange(self.n1) - (self.n1 - 1) / 2
            k2 = np.arange(self.n2) - (self.n2 - 1) / 2
        return self.center[0] + k1 * self.h, self.center[1] + k2 * self.h

    def coordinates(self) -> tuple[np.ndarray, np.ndarray]:
        a1, a2 = self.axes()
        return np.meshgrid(a1, a2, indexing="ij")

    def _interior_mask(self) -> np.ndarray:
        mask = np.ones(self.shape, dtype=bool)
        if self.topology is Topology.PERIODIC:
            return mask
        mask[-1, :] = mask[:, -1] = False
        if not self.quarter:
            mask[0, :] = mask[:, 0] = False
        if self.topology is Topology.DISK:
            x1, x2 = self.coordinates()
            r2 = (x1 - self.center[0]) ** 2 + (x2 - self.center[1]) ** 2
            mask &= r2 < self.radius**2
        return mask

    @property
    def origin(self) -> tuple[float, float]:
        a1, a2 = self.axes()
        return float(a1[0]), float(a2[0])

    def node_area(self) -> float:
        return self.h * self.h

    def node_weights(self) -> np.ndarray:
        """Quadrature weights over the whole domain (mirror images included)."""
        w = np.full(self.shape, self.h * self.h)
        if self.quarter:
            w[1:, :] *= 2.0
            w[:, 1:] *= 2.0
        return w

    def full(self) -> Grid:
        """The unreduced grid a quarter grid stands for."""
        if not self.quarter:
            return self
        return Grid(2 * self.n1 - 1, 2 * self.n2 - 1, self.h, self.topology, self.center, self.radius)

    def domain_area(self) -> float:
        if self.topology is Topology.PERIODIC:
            return self.n1 * self.n2 * self.h * self.h
        if self.topology is Topology.DISK:
            return np.pi * self.radius**2
        f = 4.0 if self.quarter else 1.0
        return f * (self.n1 - 1) * (self.n2 - 1) * self.h * self.h


@dataclass(frozen=True, eq=False)
class ScalarField:
    """Nodal values on a grid (array of shape grid.shape)."""

    grid: Grid
    values: np.ndarray

    def __post_init__(self):
        if self.values.shape != self.grid.shape:
            raise ValueError(
                f"field shape {self.values.shape} does not match grid {self.grid.shape}"
            )

    @classmethod
    def from_unknowns(cls, grid: Grid, u: np.ndarray) -> ScalarField:
        values = np.zeros(grid.shape)
        values[grid.interior] = u
        return cls(grid, values)

    def unknowns(self) -> np.ndarray:
        return self.values[self.grid.interior]

    def sup(self) -> float:
        return float(np.max(np.abs(self.values)))

    def mean(self) -> float:
        return float(self.values.mean())

    def lp_norm(self, p: float) -> float:
        """L^p norm with nodal quadrature weights h^2 (sup norm for p = inf)."""
        if np.isinf(p):
            return self.sup()
        w = self.grid.node_weights()
        return float(np.sum(w * np.abs(self.values) ** p) ** (1.0 / p))

    def at(self, x1: float, x2: float) -> float:
        """Value at the node nearest to (x1, x2)."""
        a1, a2 = self.grid.axes()
        return float(self.values[np.abs(a1 - x1).argmin(), np.abs(a2 - x2).argmin()])

    def unfold(self) -> ScalarField:
        """Expand a quarter-grid field to the full symmetric grid."""
        if not self.grid.quarter:
            return self
        v = self.values
        v = np.concatenate([v[:0:-1, :], v], axis=0)
        v = np.concatenate([v[:, :0:-1], v], axis=1)
        return ScalarField(self.grid.full(), v)

    def to_csv(self, path) -> Path:
        return write_field_csv(self.unfold(), path)


def build_grid(
    topology: Topology | str,
    extent: float,
    resolution: int,
    center: tuple[float, float] = (0.0, 0.0),
) -> Grid:
    """Grid with ``resolution`` nodes per axis.

    ``extent`` is the side length for a square, the radius for a disk (grid
    covers the bounding box), and the period (2) for the periodic cell, where
    nodes sit at -1 + k h with h = 2 / resolution.
    """
    topology = Topology(topology)
    if resolution < 3:
        raise ValueError("resolution must be at least 3 nodes per axis")
    if extent <= 0:
        raise ValueError("extent must be positive")
    n = int(resolution)
    if topology is Topology.PERIODIC:
        return Grid(n, n, extent / n, topology, center)
    if topology is Topology.DISK:
        return Grid(n, n, 2 * extent / (n - 1), topology, center, radius=float(extent))
    return Grid(n, n, extent / (n - 1), topology, center)


def lattice_center(L: float) -> tuple[float, float]:
    """Center putting the sides of an L-square on separatrices for integer L."""
    if float(L).is_integer() and int(L) % 2 == 1:
        return (0.5, 0.5)
    return (0.0, 0.0)


def square_grid(L: float, per_unit: int, center=None, quarter: bool = False) -> Grid:
    """Square of side L with spacing 1/per_unit, lattice aligned by default.

    ``quarter=True`` keeps only x1, x2 >= 0 and imposes the mirror symmetry
    x_i -> -x_i, which the operator has for origin-centred domains.
    """
    n = int(round(L * per_unit)) + 1
    if center is None:
        center = lattice_center(L)
    if quarter:
        if n % 2 == 0:
            raise ValueError("quarter grid needs an odd node count (a node at the centre)")
        m = (n + 1) // 2
        return Grid(m, m, L / (n - 1), Topology.SQUARE, tuple(center), None, True)
    return build_grid(Topology.SQUARE, L, n, center)


def disk_grid(radius: float, per_unit: int, quarter: bool = False) -> Grid:
    k = int(round(radius * per_unit))
    if quarter:
        return Grid(k + 1, k + 1, radius / k, Topology.DISK, (0.0, 0.0), float(radius), True)
    return build_grid(Topology.DISK, radius, 2 * k + 1)


def periodic_grid(per_unit: int) -> Grid:
    return build_grid(Topology.PERIODIC, 2.0, 2 * per_unit)


def _bernoulli(z: np.ndarray) -> np.ndarray:
    small = np.abs(z) < 1e-8
    with np.errstate(over="ignore", invalid="ignore", divide="ignore"):
        out = z / np.expm1(z)
    out = np.where(small, 1.0 - z / 2.0, out)
    return np.where(np.isnan(out), 0.0, out)


def _face_weights(P: np.ndarray, scheme: str) -> tuple[np.ndarray, np.ndarray]:
    if scheme == "central":
        return 1.0 + 0.5 * P, 1.0 - 0.5 * P
    if scheme == "upwind":
        return 1.0 + np.maximum(P, 0.0), 1.0 - np.minimum(P, 0.0)
    if scheme == "exp-fitted":
        return _bernoulli(-P), _bernoulli(P)
    raise ValueError(f"unknown scheme {scheme!r}; expected one of {SCHEMES}")


def face_velocities(grid: Grid) -> tuple[np.ndarray, np.ndarray]:
    """Normal velocities on the east and north face of every node.

    v1 on the face at x1 + h/2 is -(H(NE) - H(SE)) / h and v2 on the face at
    x2 + h/2 is (H(NE) - H(NW)) / h, with H sampled at cell corners.
    """
    a1, a2 = grid.axes()
    h = grid.h
    c1 = np.concatenate([a1 - h / 2, [a1[-1] + h / 2]])
    c2 = np.concatenate([a2 - h / 2, [a2[-1] + h / 2]])
    Hc = stream(c1[:, None], c2[None, :])  # corners, shape (n1+1, n2+1)
    ve = -(Hc[1:, 1:] - Hc[1:, :-1]) / h
    vn = (Hc[1:, 1:] - Hc[:-1, 1:]) / h
    return ve, vn


def assemble(grid: Grid, amplitude: float, scheme: str = "exp-fitted", drift_sign=1.0) -> sp.csr_matrix:
    """Sparse matrix of -Lap + A v.grad on the grid unknowns.

    Dirichlet nodes are eliminated (zero data), the periodic topology wraps.
    ``drift_sign`` multiplies the advection term; a pair (s1, s2) scales the
    two velocity components separately.  Values other than 1 exist only for
    negative-control experiments.
    """
    if amplitude < 0:
        raise ValueError("amplitude must be non-negative")
    h = grid.h
    ve, vn = face_velocities(grid)
    s1, s2 = np.broadcast_to(np.asarray(drift_sign, dtype=float), (2,))
    amp1, amp2 = s1 * amplitude, s2 * amplitude
    alpha_e, beta_e = _face_weights(amp1 * ve * h, scheme)
    alpha_n, beta_n = _face_weights(amp2 * vn * h, scheme)
    # flux through the west/south face is the east/north flux of the neighbour
    if grid.periodic:
        alpha_w, beta_w = np.roll(alpha_e, 1, axis=0), np.roll(beta_e, 1, axis=0)
        alpha_s, beta_s = np.roll(alpha_n, 1, axis=1), np.roll(beta_n, 1, axis=1)
    else:
        ve_w = np.empty_like(ve)
        vn_s = np.empty_like(vn)
        a1, a2 = grid.axes()
        ve_w[1:, :] = ve[:-1, :]
        vn_s[:, 1:] = vn[:, :-1]
        # faces west of the first column / south of the first row
        h_w = stream(a1[0] - h / 2, a2 + h / 2) - stream(a1[0] - h / 2, a2 - h / 2)
        h_s = stream(a1 + h / 2, a2[0] - h / 2) - stream(a1 - h / 2, a2[0] - h / 2)
        ve_w[0, :] = -h_w / h
        vn_s[:, 0] = h_s / h
        alpha_w, beta_w = _face_weights(amp1 * ve_w * h, scheme)
        alpha_s, beta_s = _face_weights(amp2 * vn_s * h, scheme)

    inv_h2 = 1.0 / (h * h)
    diag = (alpha_e + beta_w + alpha_n + beta_s) * inv_h2
    east = -beta_e * inv_h2
    west = -alpha_w * inv_h2
    north = -beta_n * inv_h2
    south = -alpha_s * inv_h2

    n1, n2 = grid.shape
    idx = grid.unknown_index
    I, J = np.nonzero(grid.interior)
    rows = idx[I, J]
    row_list = [rows]
    col_list = [rows]
    val_list = [diag[I, J]]
    for di, dj, coef in ((1, 0, east), (-1, 0, west), (0, 1, north), (0, -1, south)):
        ni, nj = I + di, J + dj
        if grid.periodic:
            ni %= n1
            nj %= n2
            keep = np.ones_like(ni, dtype=bool)
        else:
            if grid.quarter:
                ni = np.abs(ni)
                nj = np.abs(nj)
            inside = (ni >= 0) & (ni < n1) & (nj >= 0) & (nj < n2)
            keep = inside.copy()
            keep[inside] = idx[ni[inside], nj[inside]] >= 0
        row_list.append(rows[keep])
        col_list.append(idx[ni[keep], nj[keep]])
        val_list.append(coef[I[keep], J[keep]])
    m = grid.n_unknowns
    mat = sp.csr_matrix(
        (np.concatenate(val_list), (np.concatenate(row_list), np.concatenate(col_list))),
        shape=(m, m),
    )
    mat.sum_duplicates()
    mat.sort_indices()
    return mat


def apply(matrix: sp.spmatrix, values: np.ndarray) -> np.ndarray:
    """Matrix-vector product with a dimension check."""
    values = np.asarray(values, dtype=float)
    if matrix.shape[1] != values.shape[0]:
        raise ValueError(
            f"dimension mismatch: matrix has {matrix.shape[1]} columns, vector has {values.shape[0]} entries"
        )
    return matrix @ values


def face_gradients(field_values: np.ndarray, h: float) -> tuple[np.ndarray, np.ndarray]:
    """Periodic face differences (u[i+1] - u[i]) / h along each axis."""
    g1 = (np.roll(field_values, -1, axis=0) - field_values) / h
    g2 = (np.roll(field_values, -1, axis=1) - field_values) / h
    return g1, g2


def periodic_interpolate(f: ScalarField, y1: np.ndarray, y2: np.ndarray) -> np.ndarray:
    """Bilinear interpolation of a periodic-cell field at arbitrary points."""
    g = f.grid
    if not g.periodic:
        raise ValueError("periodic_interpolate needs a periodic-cell field")
    n1, n2 = g.shape
    s1 = (np.asarray(y1) + 1.0) / g.h
    s2 = (np.asarray(y2) + 1.0) / g.h
    i0 = np.floor(s1)
    j0 = np.floor(s2)
    t1 = s1 - i0
    t2 = s2 - j0
    i0 = i0.astype(np.int64) % n1
    j0 = j0.astype(np.int64) % n2
    i1 = (i0 + 1) % n1
    j1 = (j0 + 1) % n2
    v = f.values
    return (
        (1 - t1) * (1 - t2) * v[i0, j0]
        + t1 * (1 - t2) * v[i1, j0]
        + (1 - t1) * t2 * v[i0, j1]
        + t1 * t2 * v[i1, j1]
    )


def write_field_csv(f: ScalarField, path) -> Path:
    """Dump ``x1,x2,value`` rows in row-major node order, 17 significant digits."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    x1, x2 = f.grid.coordinates()
    with path.open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["x1", "x2", "value"])
        for a, b, c in zip(x1.ravel(), x2.ravel(), f.values.ravel()):
            w.writerow([f"{a:.17g}", f"{b:.17g}", f"{c:.17g}"])
    return path


def read_field_csv(path) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    return data[:, 0], data[:, 1], data[:, 2]
