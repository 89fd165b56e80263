"""Truncated spectral Q-Wiener noise with reproducible per-path streams.

The covariance is diagonal in a Dirichlet sine basis on ``[-L, L]``::

    Q e_k = q_k e_k,    q_k = sigma^2 (1 + (k pi / 2L)^2)^(-r),   k = 1..K

so an increment over ``dt`` is ``dW = sum_k sqrt(q_k dt) xi_k e_k`` with
i.i.d. standard normal ``xi_k``.  ``r >= 2`` keeps ``sqrt(Q)`` Hilbert-Schmidt
into ``H^1``.

Two bases are available.  ``basis="dx"`` uses sine modes orthonormal in
``L^2(dx)``.  ``basis="1+rho"`` divides them by ``sqrt(1 + rho)`` so they are
orthonormal in ``L^2(1 + rho)``, the space the noise is posed on; this keeps
the weighted norms of the noise of order one when ``rho`` is exponentially
large on one side of the domain.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from functools import cached_property
from typing import Optional

import numpy as np

from .grid import GridMismatchError, SpatialGrid

__all__ = [
    "NoiseModel",
    "PathSeed",
    "IncrementStream",
    "build_noise",
    "sample_increments",
    "pair_with",
    "write_increments",
    "read_increments",
]


@dataclass(frozen=True)
class NoiseModel:
    grid: SpatialGrid
    K: int
    sigma: float
    r: float
    q: np.ndarray
    modes: np.ndarray
    basis: str = "dx"
    weight: Optional[np.ndarray] = None  # 1 + rho for the weighted basis
    rho_params: Optional[tuple] = None  # (Z, c/nu) to evaluate shifted modes

    @property
    def wavenumbers(self) -> np.ndarray:
        return np.arange(1, self.K + 1) * np.pi / (2.0 * self.grid.L)

    @property
    def trace(self) -> float:
        return float(np.sum(self.q))

    @property
    def hs_h1(self) -> float:
        """``sum_k q_k (1 + (k pi / 2L)^2)``, the squared HS norm of ``sqrt(Q)`` into ``H^1``."""
        return float(np.sum(self.q * (1.0 + self.wavenumbers**2)))

    @cached_property
    def sqrt_q(self) -> np.ndarray:
        return np.sqrt(self.q)

    def projections(self, phi: np.ndarray) -> np.ndarray:
        """``<phi, e_k>`` in ``L^2(dx)`` (trapezoid), shape ``(..., K)``."""
        self.grid.check_vector(phi)
        return (np.asarray(phi) * self.grid.weights) @ self.modes.T

    def quad_form(self, phi: np.ndarray) -> np.ndarray:
        """``<phi, Q phi> = sum_k q_k <phi, e_k>^2``, the variance rate of ``<phi, W(t)>``."""
        p = self.projections(phi)
        return np.sum(self.q * p * p, axis=-1)

    def hs_weighted(self, w: np.ndarray) -> float:
        """``sum_k q_k ||e_k||^2_w``: squared HS norm of ``sqrt(Q)`` into ``L^2(w)``."""
        norms = (self.modes**2 * (self.grid.weights * w)).sum(axis=1)
        return float(np.sum(self.q * norms))

    def mode_values(self, x) -> np.ndarray:
        """Modes evaluated at arbitrary points (zero outside ``[-L, L]``), shape ``(K, len(x))``."""
        x = np.asarray(x, dtype=float)
        L = self.grid.L
        kk = np.arange(1, self.K + 1)[:, None]
        vals = np.sin(kk * np.pi * (x[None, :] + L) / (2.0 * L)) / np.sqrt(L)
        vals[:, (x < -L) | (x > L)] = 0.0
        if self.basis == "1+rho":
            Z, al = self.rho_params
            vals = vals / np.sqrt(1.0 + Z * np.exp(-al * x))[None, :]
        return vals

    def synthesize(self, coeffs: np.ndarray) -> np.ndarray:
        """Grid field(s) ``sum_k coeffs[..., k] e_k``."""
        return np.asarray(coeffs) @ self.modes

    def digest(self) -> str:
        import hashlib

        h = hashlib.sha256()
        h.update(self.grid.digest().encode())
        h.update(f"{self.K}:{self.sigma!r}:{self.r!r}:{self.basis}".encode())
        if self.rho_params is not None:
            h.update(repr(tuple(float(v) for v in self.rho_params)).encode())
        return h.hexdigest()[:16]


def build_noise(grid: SpatialGrid, K: int, sigma: float, r: float = 2.0, *,
                basis: str = "dx", profile=None) -> NoiseModel:
    """Spectral noise model with ``K`` sine modes and eigenvalue decay exponent ``r``.

    ``basis="1+rho"`` requires the wave ``profile`` providing the weight.
    """
    if r < 2:
        raise ValueError(f"decay exponent r={r} < 2: sqrt(Q) would not be Hilbert-Schmidt into H^1")
    if not 1 <= K <= grid.n - 2:
        raise ValueError(f"mode count K={K} must lie in [1, n-2={grid.n - 2}]")
    if sigma < 0:
        raise ValueError(f"sigma must be non-negative, got {sigma}")
    k = np.arange(1, K + 1)
    q = sigma**2 * (1.0 + (k * np.pi / (2.0 * grid.L)) ** 2) ** (-float(r))
    x = grid.x
    modes = np.sin(k[:, None] * np.pi * (x[None, :] + grid.L) / (2.0 * grid.L)) / np.sqrt(grid.L)
    modes[:, 0] = modes[:, -1] = 0.0
    weight = rho_params = None
    if basis == "1+rho":
        if profile is None:
            raise ValueError("basis '1+rho' needs the wave profile for the weight")
        grid.check_same(profile.grid)
        weight = 1.0 + profile.rho
        rho_params = (float(profile.Z), float(profile.speed_ratio))
        modes = modes / np.sqrt(weight)[None, :]
    elif basis != "dx":
        raise ValueError(f"unknown noise basis {basis!r}")
    modes.flags.writeable = False
    q.flags.writeable = False
    return NoiseModel(grid=grid, K=int(K), sigma=float(sigma), r=float(r), q=q, modes=modes,
                      basis=basis, weight=weight, rho_params=rho_params)


@dataclass(frozen=True)
class PathSeed:
    master_seed: int
    path_index: int

    def generator(self) -> np.random.Generator:
        # Philox is counter-based; the key is derived from (master_seed, path_index)
        ss = np.random.SeedSequence(entropy=int(self.master_seed) & (2**64 - 1),
                                    spawn_key=(int(self.path_index),))
        return np.random.Generator(np.random.Philox(ss))


class IncrementStream:
    """Brownian increments of one path.

    ``refine`` > 1 draws the normals on a grid ``refine`` times finer and sums
    consecutive blocks, so a run at ``dt`` and one at ``dt/refine`` (with
    ``refine=1``) see the same Brownian path.
    """

    def __init__(self, model: NoiseModel, n_steps: int, dt: float, seed: PathSeed, refine: int = 1):
        if not dt > 0:
            raise ValueError(f"dt must be positive, got {dt}")
        self.model = model
        self.n_steps = int(n_steps)
        self.dt = float(dt)
        self.seed = seed
        self.refine = int(refine)
        xi = seed.generator().standard_normal((self.n_steps * self.refine, model.K))
        if self.refine > 1:
            xi = xi.reshape(self.n_steps, self.refine, model.K).sum(axis=1) / np.sqrt(self.refine)
        self.xi = xi
        self.coeffs = xi * (model.sqrt_q * np.sqrt(self.dt))

    def __len__(self) -> int:
        return self.n_steps

    def __getitem__(self, step: int) -> np.ndarray:
        return self.model.synthesize(self.coeffs[step])

    def __iter__(self):
        for n in range(self.n_steps):
            yield self[n]

    def fields(self) -> np.ndarray:
        return self.model.synthesize(self.coeffs)


def sample_increments(model: NoiseModel, n_steps: int, dt: float, seed: PathSeed, refine: int = 1) -> IncrementStream:
    return IncrementStream(model, n_steps, dt, seed, refine)


def pair_with(stream: IncrementStream, phi: np.ndarray, weight: str = "dx", rho: Optional[np.ndarray] = None) -> np.ndarray:
    """``<phi, dW_n>`` for every step under the ``dx``, ``rho`` or ``1+rho`` weight."""
    grid = stream.model.grid
    phi = np.asarray(phi, dtype=float)
    if phi.shape[-1] != grid.n:
        raise GridMismatchError(f"phi has {phi.shape[-1]} points, grid has {grid.n}")
    if weight == "dx":
        w = 1.0
    elif weight in ("rho", "1+rho"):
        if rho is None:
            raise ValueError(f"weight {weight!r} requires rho")
        w = rho if weight == "rho" else 1.0 + rho
    else:
        raise ValueError(f"unknown weight {weight!r}")
    return stream.coeffs @ stream.model.projections(phi * w)


_MAGIC = b"SWINC\x00"
_VERSION = 1
_HEADER = struct.Struct("<6sH16sIdIQQ")


def write_increments(path, stream: IncrementStream) -> None:
    """Dump the standard-normal coefficients with a versioned header."""
    m = stream.model
    header = _HEADER.pack(_MAGIC, _VERSION, m.digest().encode()[:16], m.K, stream.dt,
                          stream.n_steps, stream.seed.master_seed & (2**64 - 1), stream.seed.path_index)
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(np.ascontiguousarray(stream.xi, dtype="<f8").tobytes())


def read_increments(path, model: NoiseModel) -> IncrementStream:
    with open(path, "rb") as fh:
        raw = fh.read()
    magic, version, digest, K, dt, n_steps, master, index = _HEADER.unpack_from(raw)
    if magic != _MAGIC or version != _VERSION:
        raise ValueError(f"{path}: not an increment dump (magic={magic!r}, version={version})")
    if digest.decode() != model.digest() or K != model.K:
        raise GridMismatchError(f"{path}: dump was written for a different noise model")
    xi = np.frombuffer(raw, dtype="<f8", offset=_HEADER.size).reshape(n_steps, K)
    stream = IncrementStream.__new__(IncrementStream)
    stream.model, stream.n_steps, stream.dt = model, n_steps, dt
    stream.seed, stream.refine = PathSeed(master, index), 1
    stream.xi = xi.copy()
    stream.coeffs = stream.xi * (model.sqrt_q * np.sqrt(dt))
    return stream
