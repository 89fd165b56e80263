"""Weighted ``L^2`` / ``H^1`` norms with the travelling weight ``rho_t(x) = rho(x + ct)``."""

from __future__ import annotations

import numpy as np

from .grid import d1


class WeightedNormKit:
    """Trapezoid quadrature for ``L^2(dx)``, ``L^2(rho_t)``, ``L^2(1+rho_t)`` and ``H^1(1+rho_t)``.

    All methods accept batched vectors (leading axes) and reduce over the last.
    """

    KINDS = ("dx", "rho", "1+rho")

    def __init__(self, profile):
        self.profile = profile
        self.grid = profile.grid
        self.c = profile.c

    def rho_t(self, t: float = 0.0) -> np.ndarray:
        return self.profile.rho_at(self.grid.x + self.c * t)

    def weights(self, kind: str = "dx", t: float = 0.0) -> np.ndarray:
        w = self.grid.weights
        if kind == "dx":
            return w
        if kind == "rho":
            return w * self.rho_t(t)
        if kind == "1+rho":
            return w * (1.0 + self.rho_t(t))
        raise ValueError(f"unknown weight kind {kind!r}")

    def inner(self, h, g, kind: str = "dx", t: float = 0.0, *, w=None):
        w = self.weights(kind, t) if w is None else w
        return np.sum(np.asarray(h) * np.asarray(g) * w, axis=-1)

    def norm_sq(self, h, kind: str = "dx", t: float = 0.0, *, w=None):
        h = np.asarray(h)
        return self.inner(h, h, kind, t, w=w)

    def norm(self, h, kind: str = "dx", t: float = 0.0, *, w=None):
        return np.sqrt(self.norm_sq(h, kind, t, w=w))

    def h1_norm_sq(self, h, t: float = 0.0, *, w=None):
        """``||h||^2_{1+rho_t} + ||D1 h||^2_{1+rho_t}``."""
        w = self.weights("1+rho", t) if w is None else w
        h = np.asarray(h)
        hx = d1(h, self.grid.dx)
        return np.sum((h * h + hx * hx) * w, axis=-1)

    def h1_norm(self, h, t: float = 0.0, *, w=None):
        return np.sqrt(self.h1_norm_sq(h, t, w=w))
