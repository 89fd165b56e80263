"""Bistable reaction terms and sampled checks of their structural assumptions.

A :class:`ReactionFunction` bundles ``f`` with its first three derivatives and
the growth constants used by the well-posedness theory (upper bound of
``f'``, cubic-growth Lipschitz constant, Taylor-remainder constant and the
derivative-growth constant).  For the Nagumo cubic all constants are known in
closed form; for any other ``f`` they are grid estimates and flagged as such.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from numpy.polynomial import Polynomial
from scipy.integrate import trapezoid

ScalarMap = Callable[[np.ndarray], np.ndarray]

# far-field probes used to detect unbounded growth of f'
_GROWTH_PROBES = np.array([-1e3, -1e2, -1e1, 1e1, 1e2, 1e3])


@dataclass(frozen=True)
class ReactionFunction:
    """Reaction term ``f`` with derivatives and growth constants."""

    f: ScalarMap
    f1: ScalarMap
    f2: ScalarMap
    f3: ScalarMap
    a: float
    eta1: float
    L_lip: float
    eta2: float
    eta3: float
    estimated: bool = False
    name: str = "custom"

    def __call__(self, v):
        return self.f(v)


def nagumo(a: float) -> ReactionFunction:
    """The cubic ``f(v) = v (1 - v) (v - a)`` with exact derivatives.

    The constants are closed-form upper bounds, e.g. ``eta1 = (1 - a + a^2)/3``
    is the maximum of ``f'`` attained at ``v = (1 + a)/3``.
    """
    a = float(a)
    if not 0.0 < a < 1.0:
        raise ValueError(f"Nagumo threshold a must lie in (0, 1), got {a}")

    def f(v):
        v = np.asarray(v, dtype=float)
        return v * (1.0 - v) * (v - a)

    def f1(v):
        v = np.asarray(v, dtype=float)
        return -3.0 * v**2 + 2.0 * (1.0 + a) * v - a

    def f2(v):
        v = np.asarray(v, dtype=float)
        return -6.0 * v + 2.0 * (1.0 + a)

    def f3(v):
        return np.full_like(np.asarray(v, dtype=float), -6.0)

    return ReactionFunction(
        f=f,
        f1=f1,
        f2=f2,
        f3=f3,
        a=a,
        eta1=(1.0 - a + a * a) / 3.0,
        L_lip=1.5 + (1.0 + a) / np.sqrt(2.0) + a,
        eta2=max(1.0 + a, 2.0 - a),
        eta3=9.0 + 4.0 * a,
        estimated=False,
        name=f"nagumo(a={a:g})",
    )


def _estimate_constants(f, f1, u, v):
    """Grid suprema standing in for the B1-B4 constants of a black-box f."""
    x = np.concatenate([u, v])
    eta1 = float(np.max(f1(x)))
    x1, x2 = np.meshgrid(u, u, indexing="ij")
    off = x1 != x2
    ratio = np.abs(f(x1[off]) - f(x2[off])) / (
        np.abs(x1[off] - x2[off]) * (1.0 + x1[off] ** 2 + x2[off] ** 2)
    )
    L_lip = float(ratio.max())
    U, V = np.meshgrid(u, v, indexing="ij")
    nz = U != 0
    Un, Vn = U[nz], V[nz]
    rem = np.abs(f(Un + Vn) - f(Vn) - f1(Vn) * Un) / ((1.0 + np.abs(Un)) * Un**2)
    eta2 = float(rem.max())
    g1 = np.abs(f1(U + V)) / (1.0 + U**2)
    g2 = np.abs(f1(Un + Vn) - f1(Vn)) / (np.abs(Un) + Un**2)
    eta3 = float(max(g1.max(), g2.max()))
    return eta1, L_lip, eta2, eta3


def from_polynomial(coeffs, a: float, *, name: str = "polynomial") -> ReactionFunction:
    """Reaction term given by polynomial coefficients (lowest degree first).

    Derivatives are exact; growth constants are estimated on the default
    assumption-check grid.
    """
    p = Polynomial(np.asarray(coeffs, dtype=float))
    d1, d2, d3 = p.deriv(1), p.deriv(2), p.deriv(3)
    u, v = default_test_points()
    eta1, L_lip, eta2, eta3 = _estimate_constants(p, d1, u, v)
    return ReactionFunction(
        f=p, f1=d1, f2=d2, f3=d3, a=float(a),
        eta1=eta1, L_lip=L_lip, eta2=eta2, eta3=eta3,
        estimated=True, name=name,
    )


def from_callables(f, f1, f2, f3=None, *, a: float, name: str = "custom") -> ReactionFunction:
    """Wrap user-supplied ``f`` and derivatives; constants are grid estimates.

    A missing third derivative is replaced by a central difference of ``f2``.
    """
    if f3 is None:
        h = 1e-4

        def f3(v):
            v = np.asarray(v, dtype=float)
            return (f2(v + h) - f2(v - h)) / (2 * h)

    u, v = default_test_points()
    eta1, L_lip, eta2, eta3 = _estimate_constants(f, f1, u, v)
    return ReactionFunction(
        f=f, f1=f1, f2=f2, f3=f3, a=float(a),
        eta1=eta1, L_lip=L_lip, eta2=eta2, eta3=eta3,
        estimated=True, name=name,
    )


def default_test_points(spacing: float = 1e-2):
    """Sample points ``u`` in [-3, 3] and ``v`` in [0, 1] at the given spacing."""
    nu = int(round(6.0 / spacing)) + 1
    nv = int(round(1.0 / spacing)) + 1
    return np.linspace(-3.0, 3.0, nu), np.linspace(0.0, 1.0, nv)


@dataclass
class CheckResult:
    passed: bool
    value: float
    worst_point: tuple = ()
    detail: str = ""


@dataclass
class AssumptionReport:
    checks: dict = field(default_factory=dict)

    @property
    def all_passed(self) -> bool:
        return all(c.passed for c in self.checks.values())

    def __getitem__(self, key) -> CheckResult:
        return self.checks[key]

    def as_dict(self) -> dict:
        return {
            k: {"passed": c.passed, "value": c.value,
                "worst_point": list(c.worst_point), "detail": c.detail}
            for k, c in self.checks.items()
        }


def check_assumptions(rf: ReactionFunction, test_points=None, *, tol: float = 1e-10) -> AssumptionReport:
    """Sample the bistability (A1, A2) and growth (B1-B4) conditions.

    ``test_points`` is a pair ``(u, v)`` of 1D arrays covering [-3, 3] and
    [0, 1].  Violations are reported with the worst sampled point; nothing is
    raised.
    """
    u, v = default_test_points() if test_points is None else map(np.asarray, test_points)
    a = rf.a
    rep = AssumptionReport()

    # A1: zeros, signs, derivative signs
    zeros = np.abs(rf.f(np.array([0.0, a, 1.0])))
    inner_lo = v[(v > 0) & (v < a)]
    inner_hi = v[(v > a) & (v < 1)]
    d = rf.f1(np.array([0.0, a, 1.0]))
    sign_bad = []
    if inner_lo.size and np.any(rf.f(inner_lo) >= 0):
        sign_bad.append(float(inner_lo[np.argmax(rf.f(inner_lo))]))
    if inner_hi.size and np.any(rf.f(inner_hi) <= 0):
        sign_bad.append(float(inner_hi[np.argmin(rf.f(inner_hi))]))
    ok = bool(zeros.max() <= tol and not sign_bad and d[0] < 0 < d[1] and d[2] < 0 and 0 < a < 1)
    rep.checks["A1"] = CheckResult(
        ok, float(zeros.max()), tuple(sign_bad),
        f"f'(0)={d[0]:.6g}, f'(a)={d[1]:.6g}, f'(1)={d[2]:.6g}",
    )

    # A1 integral: trapezoid on a fine grid
    vv = np.linspace(0.0, 1.0, 20001)
    integral = float(trapezoid(rf.f(vv), vv))
    rep.checks["A1_integral"] = CheckResult(integral >= -tol, integral, (), "int_0^1 f dv")

    f2_0, f2_1 = float(rf.f2(np.array(0.0))), float(rf.f2(np.array(1.0)))
    rep.checks["A2"] = CheckResult(f2_0 > 0 and f2_1 < 0, min(f2_0, -f2_1), (), f"f''(0)={f2_0:.6g}, f''(1)={f2_1:.6g}")

    # B1: f' bounded above; far probes must not exceed the sampled supremum
    x = np.concatenate([u, v])
    f1x = rf.f1(x)
    sup_grid = float(f1x.max())
    far = rf.f1(_GROWTH_PROBES)
    b1_ok = bool(np.all(np.isfinite(far)) and far.max() <= max(sup_grid, rf.eta1) + tol)
    b1_ok = b1_ok and sup_grid <= rf.eta1 + tol
    worst = (float(_GROWTH_PROBES[np.argmax(far)]),) if not b1_ok else (float(x[np.argmax(f1x)]),)
    rep.checks["B1"] = CheckResult(b1_ok, float(max(sup_grid, far.max())), worst, f"eta1={rf.eta1:.6g}")

    # B2 on pairs from u
    x1, x2 = np.meshgrid(u, u, indexing="ij")
    off = x1 != x2
    lhs = np.abs(rf.f(x1[off]) - rf.f(x2[off]))
    rhs = rf.L_lip * np.abs(x1[off] - x2[off]) * (1.0 + x1[off] ** 2 + x2[off] ** 2)
    excess = lhs - rhs
    i = int(np.argmax(excess))
    rep.checks["B2"] = CheckResult(
        bool(excess[i] <= tol * (1 + rhs[i])), float(excess[i]),
        (float(x1[off][i]), float(x2[off][i])), f"L={rf.L_lip:.6g}",
    )

    U, V = np.meshgrid(u, v, indexing="ij")
    lhs = np.abs(rf.f(U + V) - rf.f(V) - rf.f1(V) * U)
    rhs = rf.eta2 * (1.0 + np.abs(U)) * U**2
    excess = lhs - rhs
    i = np.unravel_index(int(np.argmax(excess)), excess.shape)
    rep.checks["B3"] = CheckResult(
        bool(excess[i] <= tol * (1 + rhs[i])), float(excess[i]),
        (float(U[i]), float(V[i])), f"eta2={rf.eta2:.6g}",
    )

    e1 = np.abs(rf.f1(U + V)) - rf.eta3 * (1.0 + U**2)
    e2 = np.abs(rf.f1(U + V) - rf.f1(V)) - rf.eta3 * (np.abs(U) + U**2)
    excess = np.maximum(e1, e2)
    i = np.unravel_index(int(np.argmax(excess)), excess.shape)
    rep.checks["B4"] = CheckResult(
        bool(excess[i] <= tol * (1 + rf.eta3)), float(excess[i]),
        (float(U[i]), float(V[i])), f"eta3={rf.eta3:.6g}",
    )
    return rep
