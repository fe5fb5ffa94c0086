"""Preconditioned BiCGStab for the nonsymmetric advection-diffusion systems.

Preconditioners:

* ``jacobi``  point-Jacobi (inverse diagonal)
* ``ilu``     incomplete LU (SuperLU ILUTP with a tight fill cap, close to ILU(0))
* ``lu``      complete sparse LU; BiCGStab then converges in one or two steps.
              This is the finest preconditioner and the one used by the
              high-level solvers, which solve the same matrix many times.
* ``auto``    ILU when amplitude * h > 1, Jacobi otherwise

Singular periodic systems are handled by pinning one unknown when building
the preconditioner and projecting every iterate onto mean-zero vectors.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

log = logging.getLogger(__name__)

DEFAULT_TOL = 1e-9


class IncompatibleRhs(ValueError):
    """Right side of a periodic problem is not mean zero."""


class SolverError(RuntimeError):
    """Raised by callers that require convergence."""


@dataclass(frozen=True)
class SolveReport:
    iterations: int
    residual: float
    converged: bool
    method: str = "bicgstab"

    def require(self, what: str = "linear solve") -> SolveReport:
        if not self.converged:
            raise SolverError(
                f"{what} did not converge: residual {self.residual:.3e} after {self.iterations} iterations ({self.method})"
            )
        return self


def default_max_iter(n: int) -> int:
    return max(20, int(20 * np.sqrt(n)))


def _pinned(matrix: sp.spmatrix, pin: int = 0) -> sp.csc_matrix:
    """Replace row and column ``pin`` by the identity (removes the constant mode)."""
    m = sp.lil_matrix(matrix)
    m[pin, :] = 0
    m[:, pin] = 0
    m[pin, pin] = 1.0
    return m.tocsc()


def _choose(preconditioner: str, amplitude_h: float | None) -> str:
    if preconditioner != "auto":
        return preconditioner
    if amplitude_h is not None and amplitude_h > 1.0:
        return "ilu"
    return "jacobi"


class Solver:
    """BiCGStab with a preconditioner built once and reused across solves."""

    def __init__(
        self,
        matrix: sp.spmatrix,
        preconditioner: str = "auto",
        *,
        periodic: bool = False,
        amplitude_h: float | None = None,
    ):
        if matrix.shape[0] != matrix.shape[1]:
            raise ValueError("matrix must be square")
        self.matrix = sp.csr_matrix(matrix)
        self.periodic = periodic
        self.kind = _choose(preconditioner, amplitude_h)
        self._precond = self._build(self.kind)

    def _build(self, kind: str):
        M = self.matrix
        base = _pinned(M) if self.periodic else M.tocsc()
        if kind == "none":
            return lambda r: r
        if kind == "jacobi":
            d = base.diagonal()
            d = np.where(d == 0, 1.0, d)
            inv = 1.0 / d
            return lambda r: inv * r
        if kind == "ilu":
            ilu = spla.spilu(base, drop_tol=0.0, fill_factor=1.0)
            return ilu.solve
        if kind == "ilu-fine":
            ilu = spla.spilu(base, drop_tol=1e-5, fill_factor=20.0)
            return ilu.solve
        if kind == "lu":
            lu = spla.splu(base, permc_spec="COLAMD")
            if self.periodic:
                def apply_lu(r):
                    rr = r.copy()
                    rr[0] = 0.0
                    return lu.solve(rr)
                return apply_lu
            return lu.solve
        raise ValueError(f"unknown preconditioner {kind!r}")

    def _project(self, x: np.ndarray) -> np.ndarray:
        if self.periodic:
            return x - x.mean()
        return x

    def _bicgstab(self, b, x0, tol, max_iter):
        A = self.matrix
        K = self._precond
        bnorm = np.linalg.norm(b)
        x = self._project(x0.copy())
        r = b - A @ x
        r_hat = r.copy()
        rho = alpha = omega = 1.0
        v = np.zeros_like(b)
        p = np.zeros_like(b)
        tiny = np.finfo(float).tiny
        for it in range(1, max_iter + 1):
            rho_new = float(r_hat @ r)
            if abs(rho_new) <= 1e-30 * bnorm * bnorm + tiny:
                return x, it, "breakdown"
            beta = (rho_new / rho) * (alpha / omega)
            p = r + beta * (p - omega * v)
            y = K(p)
            v = A @ y
            denom = float(r_hat @ v)
            if denom == 0.0:
                return x, it, "breakdown"
            alpha = rho_new / denom
            s = r - alpha * v
            if np.linalg.norm(s) <= tol * bnorm:
                x = self._project(x + alpha * y)
                return x, it, "ok"
            z = K(s)
            t = A @ z
            tt = float(t @ t)
            if tt == 0.0:
                return x, it, "breakdown"
            omega = float(t @ s) / tt
            x = self._project(x + alpha * y + omega * z)
            r = s - omega * t
            rho = rho_new
            if np.linalg.norm(r) <= tol * bnorm:
                return x, it, "ok"
            if omega == 0.0:
                return x, it, "breakdown"
        return x, max_iter, "maxiter"

    def residual(self, x: np.ndarray, b: np.ndarray) -> float:
        bnorm = np.linalg.norm(b)
        rnorm = np.linalg.norm(b - self.matrix @ x)
        return float(rnorm / bnorm) if bnorm > 0 else float(rnorm)

    def solve(self, rhs, tol: float = DEFAULT_TOL, max_iter: int | None = None, x0=None):
        b = np.asarray(rhs, dtype=float)
        n = b.shape[0]
        if n != self.matrix.shape[0]:
            raise ValueError("dimension mismatch between matrix and right side")
        if tol <= 0:
            raise ValueError("tol must be positive")
        if max_iter is None:
            max_iter = default_max_iter(n)
        if not np.any(b):
            return np.zeros(n), SolveReport(0, 0.0, True, f"bicgstab/{self.kind}")
        x0 = np.zeros(n) if x0 is None else np.asarray(x0, dtype=float)
        x, its, status = self._bicgstab(b, x0, tol, max_iter)
        method = f"bicgstab/{self.kind}"
        if status == "breakdown":
            log.debug("BiCGStab breakdown after %d iterations; restarting", its)
            rng = np.random.default_rng(12345)
            scale = np.linalg.norm(x) / np.sqrt(n) + 1.0
            x, its2, status = self._bicgstab(b, x + 1e-8 * scale * rng.standard_normal(n), tol, max_iter)
            its += its2
        if status == "breakdown":
            x, its3, ok = self._gmres(b, x, tol, max_iter)
            its += its3
            method = f"gmres30/{self.kind}"
        x = self._project(x)
        res = self.residual(x, b)
        return x, SolveReport(its, res, bool(res <= tol), method)

    def _gmres(self, b, x0, tol, max_iter):
        count = [0]

        def cb(_):
            count[0] += 1

        P = spla.LinearOperator(self.matrix.shape, self._precond)
        x, info = spla.gmres(
            self.matrix, b, x0=x0, rtol=tol, restart=30, maxiter=max_iter, M=P,
            callback=cb, callback_type="pr_norm",
        )
        return x, count[0], info == 0


def solve(matrix, rhs, tol: float = DEFAULT_TOL, max_iter: int | None = None,
          preconditioner: str = "auto", amplitude_h: float | None = None):
    """Solve ``matrix @ x = rhs``; returns ``(x, SolveReport)``.

    Non-convergence is reported, not raised.
    """
    return Solver(matrix, preconditioner, amplitude_h=amplitude_h).solve(rhs, tol, max_iter)


def check_compatible(rhs: np.ndarray, rel: float = 1e-10) -> None:
    scale = float(np.max(np.abs(rhs))) if rhs.size else 0.0
    mean = float(np.mean(rhs))
    if abs(mean) > rel * scale and abs(mean) > 0:
        raise IncompatibleRhs(f"right side has mean {mean:.3e} (sup {scale:.3e})")


def solve_periodic_meanzero(matrix, rhs, tol: float = DEFAULT_TOL, max_iter: int | None = None,
                            preconditioner: str = "lu", solver: Solver | None = None,
                            compat_rel: float = 1e-10):
    """Unique mean-zero solution of a singular periodic system.

    Raises IncompatibleRhs when mean(rhs) is not zero to ``compat_rel`` times
    its sup norm.  The tiny admissible mean is removed before iterating.
    """
    b = np.asarray(rhs, dtype=float)
    check_compatible(b, compat_rel)
    b = b - b.mean()
    if solver is None:
        solver = Solver(matrix, preconditioner, periodic=True)
    elif not solver.periodic:
        raise ValueError("solver was not built for a periodic system")
    x, report = solver.solve(b, tol, max_iter)
    return x - x.mean(), report
