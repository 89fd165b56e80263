"""Deterministic travelling wave, adjoint zero-eigenfunction and weight.

The wave ``vhat`` solves ``c vhat' = nu vhat'' + b f(vhat)`` with
``vhat(-inf) = 0`` and ``vhat(+inf) = 1``.  For the Nagumo cubic it is the
logistic ``(1 + exp(-k x))^-1`` with ``k = sqrt(b / (2 nu))``; for other
reaction terms it is computed by Newton's method on the collocation system.

The adjoint zero-eigenfunction is ``Psi = Z exp(-(c/nu) x) vhat_x`` and the
weight is ``rho = Z exp(-(c/nu) x)``, with ``Z`` fixed by
``<Psi, vhat_x> = 1`` (trapezoid quadrature on the grid).
"""

from __future__ import annotations

import csv
import dataclasses
from dataclasses import dataclass
from typing import Optional

import numpy as np
import scipy.sparse as sp
from scipy.integrate import trapezoid
from scipy.interpolate import CubicHermiteSpline
from scipy.sparse.linalg import spsolve
from scipy.special import expit

from .grid import SpatialGrid, d1
from .reaction import ReactionFunction, nagumo

__all__ = [
    "SpatialGrid",
    "WaveProfile",
    "nagumo_profile",
    "solve_profile_bvp",
    "adjoint_eigenfunction",
    "decay_rates",
    "shift_profile",
    "sampled_copy",
    "level_crossing",
    "BVPError",
    "DomainTooSmallError",
    "WindowError",
]

FIELDS = ("vhat", "vhat_x", "vhat_xx", "vhat_xxx", "vhat_xxxx", "Psi", "Psi_x", "Psi_xx", "rho")


class BVPError(RuntimeError):
    def __init__(self, msg, residual):
        super().__init__(f"{msg} (last max residual {residual:.3e})")
        self.residual = residual


class DomainTooSmallError(ValueError):
    pass


class WindowError(ValueError):
    """A shift moved the front out of the trusted interior of the grid."""


@dataclass(frozen=True)
class WaveProfile:
    grid: SpatialGrid
    vhat: np.ndarray
    vhat_x: np.ndarray
    vhat_xx: np.ndarray
    vhat_xxx: np.ndarray
    vhat_xxxx: np.ndarray
    c: float
    nu: float
    b: float
    reaction: ReactionFunction
    closed_form: bool
    Psi: Optional[np.ndarray] = None
    rho: Optional[np.ndarray] = None
    Z: Optional[float] = None
    gamma_minus: Optional[float] = None
    gamma_plus: Optional[float] = None

    @property
    def speed_ratio(self) -> float:
        """``c / nu``, the exponent of the weight."""
        return self.c / self.nu

    def rho_at(self, x) -> np.ndarray:
        return self.Z * np.exp(-self.speed_ratio * np.asarray(x, dtype=float))

    def evaluate(self, which: str, x) -> np.ndarray:
        """Evaluate ``which`` (one of ``FIELDS``) at arbitrary points."""
        if which not in FIELDS:
            raise KeyError(f"unknown profile field {which!r}")
        x = np.asarray(x, dtype=float)
        if which == "rho":
            return self.rho_at(x)
        if self.closed_form:
            return _nagumo_eval(self, which, x)
        return _interpolated(self)(which, x)

    def shift(self, gamma: float, which: str = "vhat") -> np.ndarray:
        return shift_profile(self, gamma, which)

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["x", "vhat", "vhat_x", "Psi", "rho"])
            for row in zip(self.grid.x, self.vhat, self.vhat_x, self.Psi, self.rho):
                w.writerow([repr(float(v)) for v in row])


# ---------------------------------------------------------------- closed form

def _log_s1(kx):
    # log(sigma(kx) * (1 - sigma(kx))) without overflow
    return -np.logaddexp(0.0, -kx) - np.logaddexp(0.0, kx)


def _nagumo_eval(p: WaveProfile, which: str, x: np.ndarray) -> np.ndarray:
    k = np.sqrt(p.b / (2.0 * p.nu))
    kx = k * x
    if which == "vhat":
        return expit(kx)
    s1 = np.exp(_log_s1(kx))
    t = -np.tanh(0.5 * kx)  # 1 - 2 sigma
    if which == "vhat_x":
        return k * s1
    if which == "vhat_xx":
        return k**2 * s1 * t
    if which == "vhat_xxx":
        return k**3 * s1 * (1.0 - 6.0 * s1)
    if which == "vhat_xxxx":
        return k**4 * s1 * t * (1.0 - 12.0 * s1)
    # Psi = Z exp(-(c/nu)x) k s1, computed in log space
    al = p.speed_ratio
    psi = p.Z * k * np.exp(_log_s1(kx) - al * x)
    if which == "Psi":
        return psi
    g = k * t - al  # (log Psi)'
    if which == "Psi_x":
        return psi * g
    # Psi_xx = Psi (g^2 + g'),  g' = -k^2 s1 * 2
    return psi * (g * g - 2.0 * k**2 * s1)


def nagumo_profile(nu: float, b: float, a: float, grid: SpatialGrid) -> WaveProfile:
    """Closed-form Nagumo wave with speed ``c = sqrt(2 nu b) (1/2 - a)``."""
    if not nu > 0 or not b > 0:
        raise ValueError(f"nu and b must be positive, got nu={nu}, b={b}")
    rf = nagumo(a)
    c = float(np.sqrt(2.0 * nu * b) * (0.5 - a))
    base = WaveProfile(
        grid=grid, vhat=None, vhat_x=None, vhat_xx=None, vhat_xxx=None, vhat_xxxx=None,
        c=c, nu=float(nu), b=float(b), reaction=rf, closed_form=True,
    )
    arrays = {w: _nagumo_eval(base, w, grid.x) for w in ("vhat", "vhat_x", "vhat_xx", "vhat_xxx", "vhat_xxxx")}
    prof = dataclasses.replace(base, **arrays)
    gm, gp = decay_rates(prof, rf)
    return adjoint_eigenfunction(dataclasses.replace(prof, gamma_minus=gm, gamma_plus=gp))


# ------------------------------------------------------------------ BVP solve

def solve_profile_bvp(
    f: ReactionFunction,
    nu: float,
    b: float,
    grid: SpatialGrid,
    *,
    tol: float = 1e-10,
    max_iter: int = 60,
) -> WaveProfile:
    """Solve the travelling-wave BVP for ``(vhat, c)`` by Newton's method.

    Second-order central differences on the interior nodes, Dirichlet data
    ``vhat(-L) = 0``, ``vhat(L) = 1`` and the phase pinned by ``vhat(0) = a``.
    The speed ``c`` is an unknown of the bordered Newton system.
    """
    if not nu > 0 or not b > 0:
        raise ValueError(f"nu and b must be positive, got nu={nu}, b={b}")
    x, dx, n = grid.x, grid.dx, grid.n
    a = f.a
    m = n - 2
    mid = grid.mid - 1  # index of x=0 among interior unknowns

    k0 = np.sqrt(b / (2.0 * nu))
    x0 = np.log((1.0 - a) / a) / k0
    v = expit(k0 * (x + x0))
    v[0], v[-1] = 0.0, 1.0
    vx = d1(v, dx)
    # energy identity c * int vhat_x^2 = b * int f(vhat) vhat_x
    c = float(b * trapezoid(f.f(v) * vx, x) / trapezoid(vx**2, x))

    def residual(v, c):
        r = np.empty(m + 1)
        r[:m] = (
            nu * (v[2:] - 2 * v[1:-1] + v[:-2]) / dx**2
            + b * f.f(v[1:-1])
            - c * (v[2:] - v[:-2]) / (2 * dx)
        )
        r[m] = v[grid.mid] - a
        return r

    r = residual(v, c)
    res = np.abs(r).max()
    for _ in range(max_iter):
        if res <= tol:
            break
        main = -2 * nu / dx**2 + b * f.f1(v[1:-1])
        up = np.full(m - 1, nu / dx**2 - c / (2 * dx))
        lo = np.full(m - 1, nu / dx**2 + c / (2 * dx))
        J = sp.diags([lo, main, up], [-1, 0, 1], shape=(m, m), format="lil")
        J.resize((m + 1, m + 1))
        J[:m, m] = (-(v[2:] - v[:-2]) / (2 * dx))[:, None]
        J[m, mid] = 1.0
        step = spsolve(J.tocsc(), -r)
        lam = 1.0
        while lam > 1e-4:
            v_new = v.copy()
            v_new[1:-1] += lam * step[:m]
            c_new = c + lam * step[m]
            r_new = residual(v_new, c_new)
            res_new = np.abs(r_new).max()
            if res_new < res or res_new <= tol:
                break
            lam *= 0.5
        v, c, r, res = v_new, c_new, r_new, res_new
    if not res <= tol or not np.isfinite(res):
        raise BVPError("travelling-wave Newton iteration did not converge", float(res))

    vx = d1(v, dx)
    fv, f1v, f2v = f.f(v), f.f1(v), f.f2(v)
    vxx = (c * vx - b * fv) / nu
    vxxx = (c * vxx - b * f1v * vx) / nu
    vxxxx = (c * vxxx - b * f2v * vx**2 - b * f1v * vxx) / nu
    prof = WaveProfile(
        grid=grid, vhat=v, vhat_x=vx, vhat_xx=vxx, vhat_xxx=vxxx, vhat_xxxx=vxxxx,
        c=float(c), nu=float(nu), b=float(b), reaction=f, closed_form=False,
    )
    gm, gp = decay_rates(prof, f)
    return adjoint_eigenfunction(dataclasses.replace(prof, gamma_minus=gm, gamma_plus=gp))


# ------------------------------------------------------- adjoint, decay rates

def adjoint_eigenfunction(profile: WaveProfile) -> WaveProfile:
    """Attach ``Psi``, ``rho`` and ``Z`` normalised so that ``<Psi, vhat_x> = 1``."""
    g = profile.grid
    al = profile.speed_ratio
    integrand = np.exp(-al * g.x) * profile.vhat_x**2
    total = float(np.dot(g.weights, integrand))
    if not np.isfinite(total) or total <= 0:
        raise DomainTooSmallError(
            f"weighted integral of vhat_x^2 is {total}; enlarge L or check the profile"
        )
    edge = max(integrand[0], integrand[-1]) / integrand.max()
    if edge > 1e-6:
        raise DomainTooSmallError(
            f"profile tails not resolved: edge/peak ratio {edge:.2e} of exp(-(c/nu)x) vhat_x^2"
        )
    Z = 1.0 / total
    rho = Z * np.exp(-al * g.x)
    prof = dataclasses.replace(profile, Z=Z, rho=rho)
    psi = prof.evaluate("Psi", g.x) if prof.closed_form else rho * prof.vhat_x
    return dataclasses.replace(prof, Psi=psi)


def decay_rates(profile: WaveProfile, f: ReactionFunction) -> tuple[float, float]:
    """Limits of ``(b/nu) f(vhat)/vhat_x`` at minus and plus infinity."""
    c, nu, b = profile.c, profile.nu, profile.b
    h = c / (2.0 * nu)
    f0 = float(f.f1(np.array(0.0)))
    f1 = float(f.f1(np.array(1.0)))
    gm = h - np.sqrt(h * h - (b / nu) * f0)
    gp = h + np.sqrt(h * h - (b / nu) * f1)
    return float(gm), float(gp)


# ------------------------------------------------------------- interpolation

class _Interpolated:
    """Hermite interpolation of sampled profile data with exponential tails.

    Off the grid the fields continue as pure exponentials: ``vhat`` and its
    derivatives decay at ``c/nu - gamma_minus`` to the left and
    ``gamma_plus - c/nu`` to the right; ``Psi`` at ``-gamma_minus`` and
    ``gamma_plus``.
    """

    def __init__(self, p: WaveProfile):
        x = p.grid.x
        al = p.speed_ratio
        self.p = p
        self.x0, self.x1 = x[0], x[-1]
        psi = p.Psi
        psi_x = p.rho * (p.vhat_xx - al * p.vhat_x)
        psi_xx = p.rho * (p.vhat_xxx - 2 * al * p.vhat_xx + al * al * p.vhat_x)
        psi_xxx = p.rho * (p.vhat_xxxx - 3 * al * p.vhat_xxx + 3 * al**2 * p.vhat_xx - al**3 * p.vhat_x)
        data = {
            "vhat": (p.vhat, p.vhat_x),
            "vhat_x": (p.vhat_x, p.vhat_xx),
            "vhat_xx": (p.vhat_xx, p.vhat_xxx),
            "vhat_xxx": (p.vhat_xxx, p.vhat_xxxx),
            "vhat_xxxx": (p.vhat_xxxx, np.gradient(p.vhat_xxxx, x)),
            "Psi": (psi, psi_x),
            "Psi_x": (psi_x, psi_xx),
            "Psi_xx": (psi_xx, psi_xxx),
        }
        self.splines = {k: CubicHermiteSpline(x, y, dy, extrapolate=False) for k, (y, dy) in data.items()}
        self.edge = {k: (y[0], y[-1]) for k, (y, _) in data.items()}
        lam = al - p.gamma_minus
        mu = p.gamma_plus - al
        self.rates = {k: (lam, -mu) for k in data if k.startswith("vhat")}
        for k in ("Psi", "Psi_x", "Psi_xx"):
            self.rates[k] = (-p.gamma_minus, -p.gamma_plus)

    def __call__(self, which: str, x: np.ndarray) -> np.ndarray:
        out = self.splines[which](x)
        left, right = x < self.x0, x > self.x1
        lr, rr = self.rates[which]
        y0, y1 = self.edge[which]
        if np.any(left):
            out[left] = y0 * np.exp(lr * (x[left] - self.x0))
        if np.any(right):
            tail = np.exp(rr * (x[right] - self.x1))
            out[right] = 1.0 - (1.0 - y1) * tail if which == "vhat" else y1 * tail
        return out


def _interpolated(p: WaveProfile) -> _Interpolated:
    hit = p.__dict__.get("_interp")
    if hit is None:
        hit = _Interpolated(p)
        object.__setattr__(p, "_interp", hit)
    return hit


def sampled_copy(profile: WaveProfile) -> WaveProfile:
    """Same sampled data, but off-grid evaluation by interpolation."""
    return dataclasses.replace(profile, closed_form=False)


def shift_profile(profile: WaveProfile, gamma: float, which: str = "vhat") -> np.ndarray:
    """Sample ``which`` at ``x + gamma`` on the profile grid."""
    L = profile.grid.L
    gamma = np.asarray(gamma, dtype=float)
    if np.any(np.abs(gamma) > 0.5 * L):
        raise WindowError(f"shift {float(np.max(np.abs(gamma))):.4g} exceeds half the window L/2={0.5 * L:g}")
    x = profile.grid.x
    if gamma.ndim == 0:
        if gamma == 0.0 and which != "Psi_x" and which != "Psi_xx":
            arr = getattr(profile, which)
            if arr is not None:
                return np.array(arr, copy=True)
        return profile.evaluate(which, x + float(gamma))
    return profile.evaluate(which, x[None, :] + gamma[:, None])


def level_crossing(v: np.ndarray, x: np.ndarray, level: float) -> float:
    """Position of the first upward crossing of ``level``, linearly interpolated."""
    above = np.nonzero(v >= level)[0]
    if above.size == 0 or above[0] == 0:
        raise ValueError(f"profile does not cross level {level} inside the grid")
    i = above[0]
    return float(x[i - 1] + (level - v[i - 1]) * (x[i] - x[i - 1]) / (v[i] - v[i - 1]))
