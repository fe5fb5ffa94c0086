"""Cellular flow with stream function H = sin(pi x1) sin(pi x2) / pi.

The velocity is the skew gradient v = (-dH/dx2, dH/dx1).  Each unit square
with integer corners is a flow cell (H keeps one sign there); the velocity
itself has period 2 in each coordinate, so the period cell is [-1, 1)^2.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import TYPE_CHECKING

import numpy as np

if TYPE_CHECKING:
    from .grid import Grid

PERIOD = 2.0
H_MAX = 1.0 / np.pi


@dataclass(frozen=True)
class Point2:
    x1: float
    x2: float

    def __post_init__(self):
        if not (np.isfinite(self.x1) and np.isfinite(self.x2)):
            raise ValueError(f"non-finite point ({self.x1}, {self.x2})")

    def __iter__(self):
        yield self.x1
        yield self.x2


@dataclass(frozen=True)
class FlowParams:
    amplitude: float = 0.0
    period: float = PERIOD

    def __post_init__(self):
        if self.amplitude < 0:
            raise ValueError("amplitude must be non-negative")
        if self.period != PERIOD:
            raise ValueError("the cellular flow has period 2")


def stream(x1, x2):
    """Stream function H; accepts scalars or arrays."""
    return np.sin(np.pi * x1) * np.sin(np.pi * x2) / np.pi


def stream_gradient(x1, x2):
    g1 = np.cos(np.pi * x1) * np.sin(np.pi * x2)
    g2 = np.sin(np.pi * x1) * np.cos(np.pi * x2)
    return g1, g2


def velocity(x1, x2):
    """Return (v1, v2) = (-sin(pi x1) cos(pi x2), cos(pi x1) sin(pi x2))."""
    v1 = -np.sin(np.pi * x1) * np.cos(np.pi * x2)
    v2 = np.cos(np.pi * x1) * np.sin(np.pi * x2)
    return v1, v2


def velocity_divergence_fd(x1, x2, h):
    """Central finite-difference divergence of v, used only as a check."""
    d1 = (velocity(x1 + h, x2)[0] - velocity(x1 - h, x2)[0]) / (2 * h)
    d2 = (velocity(x1, x2 + h)[1] - velocity(x1, x2 - h)[1]) / (2 * h)
    return d1 + d2


def separatrix_nodes(grid: Grid, tol: float) -> np.ndarray:
    """Flat indices of grid nodes with |H| < tol (the discrete set {H = 0})."""
    if tol <= 0:
        raise ValueError("tol must be positive")
    x1, x2 = grid.coordinates()
    hit = np.abs(stream(x1, x2)) < tol
    return np.flatnonzero(hit.ravel())
