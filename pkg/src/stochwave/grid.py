"""Uniform 1D grid, finite-difference stencils and the implicit diffusion solve."""

from __future__ import annotations

import hashlib
from dataclasses import dataclass
from functools import cached_property

import numpy as np
from scipy.linalg import lapack


class GridMismatchError(ValueError):
    pass


@dataclass(frozen=True)
class SpatialGrid:
    """``n`` equispaced nodes on ``[-L, L]``; ``n`` odd so that ``x = 0`` is a node."""

    L: float
    n: int

    def __post_init__(self):
        if self.n < 3:
            raise ValueError(f"grid needs at least 3 points, got n={self.n}")
        if self.n % 2 == 0:
            raise ValueError(f"grid point count must be odd so x=0 is a node, got n={self.n}")
        if not self.L > 0:
            raise ValueError(f"half width must be positive, got L={self.L}")

    @property
    def dx(self) -> float:
        return 2.0 * self.L / (self.n - 1)

    @cached_property
    def x(self) -> np.ndarray:
        x = -self.L + self.dx * np.arange(self.n)
        x[-1] = self.L
        x[(self.n - 1) // 2] = 0.0
        x.flags.writeable = False
        return x

    @cached_property
    def weights(self) -> np.ndarray:
        """Composite trapezoid weights."""
        w = np.full(self.n, self.dx)
        w[0] = w[-1] = 0.5 * self.dx
        w.flags.writeable = False
        return w

    @property
    def mid(self) -> int:
        return (self.n - 1) // 2

    def digest(self) -> str:
        return hashlib.sha256(f"grid:{self.L!r}:{self.n}".encode()).hexdigest()[:16]

    def check_same(self, other: "SpatialGrid"):
        if other != self:
            raise GridMismatchError(f"grid mismatch: {self} vs {other}")

    def check_vector(self, h):
        if np.shape(h)[-1] != self.n:
            raise GridMismatchError(f"vector of length {np.shape(h)[-1]} on grid with n={self.n}")

    def with_spacing_halved(self) -> "SpatialGrid":
        return SpatialGrid(self.L, 2 * self.n - 1)


def d1(h: np.ndarray, dx: float) -> np.ndarray:
    """Central first difference along the last axis, one-sided second order at the ends."""
    out = np.empty_like(h)
    out[..., 1:-1] = (h[..., 2:] - h[..., :-2]) / (2 * dx)
    out[..., 0] = (-3 * h[..., 0] + 4 * h[..., 1] - h[..., 2]) / (2 * dx)
    out[..., -1] = (3 * h[..., -1] - 4 * h[..., -2] + h[..., -3]) / (2 * dx)
    return out


def d2_interior(h: np.ndarray, dx: float) -> np.ndarray:
    """Central second difference; zero at the two boundary nodes."""
    out = np.zeros_like(h)
    out[..., 1:-1] = (h[..., 2:] - 2 * h[..., 1:-1] + h[..., :-2]) / dx**2
    return out


class ImplicitDiffusion:
    """Solver for ``(I - dt*nu*D2) w = rhs`` with homogeneous Dirichlet ends.

    The matrix is symmetric positive definite and constant, so it is
    factored once (LAPACK ``pttrf``) and reused for every right-hand side.
    """

    def __init__(self, grid: SpatialGrid, dt: float, nu: float):
        self.grid = grid
        m = grid.n - 2
        r = dt * nu / grid.dx**2
        d, e, info = lapack.dpttrf(np.full(m, 1.0 + 2.0 * r), np.full(m - 1, -r))
        if info != 0:
            raise np.linalg.LinAlgError(f"pttrf failed with info={info}")
        self._d, self._e = d, e

    def solve(self, rhs: np.ndarray) -> np.ndarray:
        rhs = np.asarray(rhs, dtype=float)
        batched = rhs.ndim == 2
        b = rhs[..., 1:-1].T if batched else rhs[1:-1]
        sol, info = lapack.dpttrs(self._d, self._e, np.ascontiguousarray(b))
        if info != 0:
            raise np.linalg.LinAlgError(f"pttrs failed with info={info}")
        out = np.zeros_like(rhs)
        if batched:
            out[:, 1:-1] = sol.T
        else:
            out[1:-1] = sol
        return out


def tridiagonal_operator(grid: SpatialGrid, nu: float, potential: np.ndarray, c: float):
    """Bands of ``nu*D2 + diag(potential) - c*D1`` on interior nodes (Dirichlet).

    Returns ``(lower, diag, upper)`` of lengths ``m-1, m, m-1`` with ``m = n-2``.
    """
    dx = grid.dx
    m = grid.n - 2
    diag = -2.0 * nu / dx**2 + np.asarray(potential, dtype=float)[1:-1]
    upper = np.full(m - 1, nu / dx**2 - c / (2 * dx))
    lower = np.full(m - 1, nu / dx**2 + c / (2 * dx))
    return lower, diag, upper


def apply_tridiagonal(bands, h: np.ndarray) -> np.ndarray:
    """Apply interior bands to a full-grid vector; boundary rows return 0."""
    lower, diag, upper = bands
    out = np.zeros_like(h)
    hi = h[..., 1:-1]
    out[..., 1:-1] = diag * hi
    out[..., 1:-2] += upper * h[..., 2:-1]
    out[..., 2:-1] += lower * h[..., 1:-2]
    # couplings to the (zero-valued for Dirichlet fields) boundary nodes
    out[..., 1] += lower[0] * h[..., 0] if lower.size else 0.0
    out[..., -2] += upper[-1] * h[..., -1] if upper.size else 0.0
    return out
