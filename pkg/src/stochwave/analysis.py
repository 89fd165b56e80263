"""Verification layer: residuals, scaling fits, spectral gap, statistical laws.

Inner products written ``<h, g>_rho`` are trapezoid sums with weights
``rho(x + ct)``; the spectral problems use the exact symmetriser of the
discrete frozen-wave operator, which agrees with ``rho`` to ``O(dx^2)``.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field
from typing import Optional, Sequence

import numpy as np
from scipy.linalg import eigh, lapack

from .dynamics import Frame, ModelParams, PathTrajectory, project, run_paths
from .grid import SpatialGrid, apply_tridiagonal, d1, tridiagonal_operator
from .noise import IncrementStream, NoiseModel, PathSeed
from .norms import WeightedNormKit
from .wave_profile import WaveProfile, nagumo_profile, shift_profile

__all__ = [
    "WeightedNormKit",
    "ScalingReport",
    "GapReport",
    "residual_finite_m",
    "residual_immediate",
    "residual_field",
    "scaling_study",
    "fit_slopes",
    "kernel_residuals",
    "kernel_convergence",
    "frozen_operator",
    "symmetriser",
    "spectral_gap",
    "certify_gap",
    "contraction_check",
    "variance_law",
    "exact_phase_variance",
    "frozen_frame_u0",
    "second_moment_bound",
    "orthogonality_check",
    "minimisation_check",
    "relaxation_gap",
]


# ----------------------------------------------------------------- residuals

def residual_field(u, C, fluct, t, eps, profile):
    """``eps * r = u + vhat(. + ct) - vhat(. + ct + eps C) - eps * fluct``."""
    if not eps > 0:
        raise ValueError("residuals are defined for epsilon > 0 only")
    ct = profile.c * t
    C = np.asarray(C, dtype=float)
    return (np.asarray(u) + shift_profile(profile, ct, "vhat")
            - shift_profile(profile, ct + eps * C, "vhat") - eps * np.asarray(fluct))


def _residual_series(traj: PathTrajectory, profile, params, C, fluct):
    if traj.u is None:
        raise ValueError("trajectory has no stored fields (run with keep_fields=True)")
    eps = params.epsilon
    kit = WeightedNormKit(profile)
    out = np.empty(C.shape)
    for j, t in enumerate(traj.times):
        er = residual_field(traj.u[..., j, :], C[..., j], fluct[..., j, :], t, eps, profile)
        out[..., j] = kit.h1_norm(er, t) / eps
    return out


def residual_finite_m(traj: PathTrajectory, profile: WaveProfile, params: ModelParams) -> np.ndarray:
    """``||r^m(t)||_{H^1(1+rho_t)}`` at the snapshot times."""
    return _residual_series(traj, profile, params, traj.C0m, traj.u0m)


def residual_immediate(traj: PathTrajectory, profile: WaveProfile, params: ModelParams) -> np.ndarray:
    """``||r(t)||_{H^1(1+rho_t)}`` with ``(C0, u0)`` in place of ``(C0m, u0m)``."""
    return _residual_series(traj, profile, params, traj.C0, traj.u0)


def _residual_observer(profile, eps):
    kit = WeightedNormKit(profile)

    def obs(t, st, fr):
        w = kit.weights("1+rho", t)
        rm = residual_field(st.u, st.C0m, st.u0m, t, eps, profile)
        ri = residual_field(st.u, st.C0, st.u0, t, eps, profile)
        return {"eps_rm": kit.h1_norm(rm, t, w=w), "eps_r": kit.h1_norm(ri, t, w=w)}

    return obs


@dataclass
class ScalingReport:
    epsilons: np.ndarray
    residual_norms: np.ndarray  # sup_t ||eps r^m|| per (eps, path)
    slopes: np.ndarray  # per path, nan if fewer than 3 usable eps
    slope: float
    iqr: tuple
    stop_fractions: np.ndarray
    stopped: np.ndarray  # (eps, path)
    q_exp: float
    m: float
    usable: np.ndarray  # per eps: at least one unstopped path
    immediate_norms: Optional[np.ndarray] = None
    immediate_slopes: Optional[np.ndarray] = None
    immediate_slope: Optional[float] = None

    def as_dict(self) -> dict:
        d = {k: (v.tolist() if isinstance(v, np.ndarray) else v) for k, v in asdict(self).items()}
        d["iqr"] = [float(v) for v in self.iqr]
        return d


def fit_slopes(epsilons, norms, stopped) -> np.ndarray:
    """Least-squares slope of ``log norm`` vs ``log eps`` per path over its unstopped eps."""
    le = np.log(np.asarray(epsilons, dtype=float))
    out = np.full(norms.shape[1], np.nan)
    for i in range(norms.shape[1]):
        ok = ~stopped[:, i] & (norms[:, i] > 0)
        if ok.sum() >= 3:
            out[i] = np.polyfit(le[ok], np.log(norms[ok, i]), 1)[0]
    return out


def scaling_study(config, epsilons: Optional[Sequence[float]] = None, n_paths: Optional[int] = None,
                  *, m: Optional[float] = None, phase: bool = True, **run_over) -> ScalingReport:
    """Seed-coupled eps-sweep of ``sup_t ||eps r^m||`` and ``sup_t ||eps r||``.

    Every eps reuses the same ``PathSeed`` list, so the Brownian paths are
    identical across the sweep.  Residuals are evaluated at the output
    cadence by an observer, so no fields are stored.
    """
    eps_list = np.array(sorted(epsilons or config.data["sweep"]["epsilons"], reverse=True), dtype=float)
    if eps_list.size < 3:
        raise ValueError("a scaling fit needs at least 3 epsilon values")
    profile = config.profile()
    noise = config.noise(profile)
    seeds = config.seeds(n_paths)
    over = dict(run_over)
    if m is not None:
        over["m"] = m
    cadence = int(config.data["outputs"]["cadence"])
    R, RI, S = [], [], []
    for eps in eps_list:
        params = config.params(epsilon=float(eps), **over)
        tr = run_paths(params, profile, noise, seeds, n_out=cadence, keep_fields=False,
                       observer=_residual_observer(profile, eps), phase=phase)
        R.append(tr.observed["eps_rm"].max(axis=1))
        RI.append(tr.observed["eps_r"].max(axis=1))
        S.append(tr.stopped_q | tr.stopped_m)
    R, RI, S = np.array(R), np.array(RI), np.array(S)
    slopes = fit_slopes(eps_list, R, S)
    islopes = fit_slopes(eps_list, RI, S)
    good = slopes[np.isfinite(slopes)]
    igood = islopes[np.isfinite(islopes)]
    return ScalingReport(
        epsilons=eps_list, residual_norms=R, slopes=slopes,
        slope=float(np.median(good)) if good.size else float("nan"),
        iqr=tuple(np.percentile(good, [25, 75])) if good.size else (float("nan"),) * 2,
        stop_fractions=S.mean(axis=1), stopped=S, q_exp=config.params(**over).q_exp,
        m=config.params(**over).m, usable=~S.all(axis=1),
        immediate_norms=RI, immediate_slopes=islopes,
        immediate_slope=float(np.median(igood)) if igood.size else float("nan"),
    )


# ------------------------------------------------------------ frozen operator

def frozen_operator(profile: WaveProfile):
    """Interior bands of ``nu D2 + b f'(vhat) - c D1``."""
    pot = profile.b * profile.reaction.f1(profile.vhat)
    return tridiagonal_operator(profile.grid, profile.nu, pot, profile.c)


def kernel_residuals(profile: WaveProfile) -> tuple[float, float]:
    """``||L_h vhat_x||_{L^2(rho)}`` and ``||L_h^T Psi||_{L^2(dx)}`` over interior nodes."""
    bands = frozen_operator(profile)
    w = profile.grid.weights
    r1 = apply_tridiagonal(bands, profile.vhat_x)
    lo, di, up = bands
    r2 = apply_tridiagonal((up, di, lo), profile.Psi)  # transpose swaps the off-diagonals
    return (float(np.sqrt(np.sum(r1 * r1 * profile.rho * w))), float(np.sqrt(np.sum(r2 * r2 * w))))


def kernel_convergence(nu: float, b: float, a: float, L: float = 40.0, n: int = 1601) -> dict:
    """Kernel residuals at ``dx`` and ``dx/2`` and their ratios."""
    g = SpatialGrid(L, n)
    coarse = kernel_residuals(nagumo_profile(nu, b, a, g))
    fine = kernel_residuals(nagumo_profile(nu, b, a, g.with_spacing_halved()))
    return {"dx": g.dx, "coarse": coarse, "fine": fine,
            "ratio_vx": coarse[0] / fine[0], "ratio_psi": coarse[1] / fine[1]}


def symmetriser(profile: WaveProfile) -> np.ndarray:
    """Discrete weight ``rho_h`` with ``rho_h[i] A[i,i+1] = rho_h[i+1] A[i+1,i]``.

    Its node-to-node ratio is ``(1 - h)/(1 + h)`` with ``h = c dx / 2 nu``,
    which is ``exp(-c dx / nu)`` up to ``O(dx^3)``; normalised to ``rho``
    at ``x = 0``.
    """
    g = profile.grid
    h = profile.c * g.dx / (2 * profile.nu)
    if abs(h) >= 1:
        raise ValueError("cell Peclet number >= 1: the frozen operator is not symmetrisable")
    step = math.log((1 - h) / (1 + h))
    logr = step * (np.arange(g.n) - g.mid)
    return profile.rho[g.mid] * np.exp(logr)


@dataclass
class GapReport:
    kappa_hat: float
    C_star_hat: float
    top_eigenvalues: np.ndarray
    second_vector: np.ndarray  # leading eigenvector on the complement, full grid
    kernel_rayleigh: float
    rho_h: np.ndarray

    def as_dict(self) -> dict:
        return {"kappa_hat": self.kappa_hat, "C_star_hat": self.C_star_hat,
                "top_eigenvalues": self.top_eigenvalues.tolist(), "kernel_rayleigh": self.kernel_rayleigh}


def _symmetric_matrix(profile):
    lo, di, up = frozen_operator(profile)
    off = np.sqrt(lo * up)
    m = di.size
    S = np.diag(di)
    S[np.arange(m - 1), np.arange(1, m)] = off
    S[np.arange(1, m), np.arange(m - 1)] = off
    return S


def _random_fields(profile, n_vec, seed, rho_h):
    """Smooth random interior fields scaled by ``rho_h^{-1/2}`` (order-one ``rho``-norm)."""
    g = profile.grid
    rng = np.random.Generator(np.random.Philox(np.random.SeedSequence(seed)))
    K = 40
    k = np.arange(1, K + 1)
    modes = np.sin(k[:, None] * np.pi * (g.x[None, :] + g.L) / (2 * g.L))
    coef = rng.standard_normal((n_vec, K)) / k
    y = coef @ modes
    y[:, 0] = y[:, -1] = 0.0
    return y / np.sqrt(rho_h)


def _quad_terms(profile, U, rho_h):
    """``<L_h u, u>_rho_h``, ``||u||^2_rho_h`` and ``<vhat_x, u>_rho_h`` per row of ``U``."""
    w = profile.grid.dx
    LU = apply_tridiagonal(frozen_operator(profile), U)
    q = np.sum(LU * U * rho_h, axis=-1) * w
    n2 = np.sum(U * U * rho_h, axis=-1) * w
    p = np.sum(profile.vhat_x * U * rho_h, axis=-1) * w
    return q, n2, p


def spectral_gap(profile: WaveProfile, f=None, params=None, *, n_test: int = 1000, seed: int = 7) -> GapReport:
    """Deflated symmetric eigenproblem for the frozen-wave operator.

    With ``S = R^{1/2} A R^{-1/2}`` (``R = diag(rho_h)``) symmetric and
    ``k = R^{1/2} vhat_x / |.|``, ``kappa_hat = -lambda_max`` of ``S``
    restricted to ``k``'s orthogonal complement.  ``C_star_hat`` is the
    smallest constant satisfying the gap inequality on ``n_test`` random
    fields (never below its continuum value ``kappa_hat``).
    """
    S = _symmetric_matrix(profile)
    rho_h = symmetriser(profile)
    sq = np.sqrt(rho_h[1:-1])
    k = sq * profile.vhat_x[1:-1]
    k /= np.linalg.norm(k)
    Sk = S @ k
    lam_k = float(k @ Sk)
    P = np.eye(k.size) - np.outer(k, k)
    Sd = P @ S @ P
    shift = 10.0 * (abs(np.diag(S)).max() + 1.0)
    Sd -= shift * np.outer(k, k)
    m = k.size
    vals, vecs = eigh(Sd, subset_by_index=[m - 3, m - 1])
    vals, vecs = vals[::-1], vecs[:, ::-1]
    kappa = -float(vals[0])
    second = np.zeros(profile.grid.n)
    second[1:-1] = vecs[:, 0] / sq
    # kernel direction Rayleigh quotient in rho_h
    U = profile.vhat_x.copy()
    U[0] = U[-1] = 0.0
    q, n2, _ = _quad_terms(profile, U[None, :], rho_h)
    U = _random_fields(profile, n_test, seed, rho_h)
    qs, ns, ps = _quad_terms(profile, U, rho_h)
    ratios = (qs + kappa * ns) / (ps**2)
    c_star = max(float(np.max(ratios)), kappa + lam_k, 0.0)
    return GapReport(kappa_hat=kappa, C_star_hat=c_star, top_eigenvalues=vals,
                     second_vector=second, kernel_rayleigh=float(q[0] / n2[0]), rho_h=rho_h)


def certify_gap(profile: WaveProfile, gap: GapReport, n_test: int = 1000, seed: int = 11) -> int:
    """Number of fresh random fields violating the gap inequality (expected 0)."""
    U = _random_fields(profile, n_test, seed, gap.rho_h)
    q, n2, p = _quad_terms(profile, U, gap.rho_h)
    lhs = q
    rhs = -gap.kappa_hat * n2 + gap.C_star_hat * p**2
    return int(np.sum(lhs > rhs + 1e-12 * np.abs(rhs)))


# --------------------------------------------------------------- contraction

class _BandSolver:
    """LU of the constant tridiagonal ``I - dt A`` on interior nodes (LAPACK gttrf)."""

    def __init__(self, bands, dt):
        lo, di, up = bands
        out = lapack.dgttrf(-dt * lo, 1.0 - dt * di, -dt * up)
        self._lu = out[:-1]
        if out[-1] != 0:
            raise np.linalg.LinAlgError(f"gttrf failed with info={out[-1]}")

    def solve(self, rhs):
        rhs = np.asarray(rhs, dtype=float)
        b = rhs[..., 1:-1].T
        sol, info = lapack.dgttrs(*self._lu, np.ascontiguousarray(b))
        if info != 0:
            raise np.linalg.LinAlgError(f"gttrs failed with info={info}")
        out = np.zeros_like(rhs)
        out[..., 1:-1] = sol.T
        return out


def _static_frame(profile):
    return Frame(t=0.0, V=profile.vhat, Vx=profile.vhat_x, f1V=profile.reaction.f1(profile.vhat), Psi=profile.Psi)


def contraction_check(profile: WaveProfile, params, kappa_hat: float, u_init: np.ndarray,
                      *, T: float = 10.0, dt: float = 0.01, n_out: int = 100, slack: float = 0.05) -> dict:
    """Backward-Euler evolution ``(I - dt L_h) u' = u`` with re-projection each step.

    ``u_init`` rows must be ``rho``-orthogonal to ``vhat_x`` (they are
    projected once more before the run).  Returns the worst ratio
    ``||u(t)||_rho / (e^{-kappa t} ||u(0)||_rho)``, the first violating
    output time (or ``None``) and fitted late-time decay rates.
    """
    U = np.atleast_2d(np.asarray(u_init, dtype=float)).copy()
    U[:, 0] = U[:, -1] = 0.0
    fr = _static_frame(profile)
    w = profile.grid.weights
    U = project(U, fr, w)
    solver = _BandSolver(frozen_operator(profile), dt)
    N = int(round(T / dt))
    outs = set(np.unique(np.round(np.linspace(0, N, n_out + 1)).astype(int)).tolist())
    wr = w * profile.rho
    n0 = np.sqrt(np.sum(U * U * wr, axis=-1))
    times, norms = [0.0], [n0]
    for n in range(1, N + 1):
        U = project(solver.solve(U), fr, w)
        if n in outs:
            times.append(n * dt)
            norms.append(np.sqrt(np.sum(U * U * wr, axis=-1)))
    times = np.array(times)
    norms = np.array(norms).T  # (vec, time)
    ratio = norms / (np.exp(-kappa_hat * times)[None, :] * n0[:, None])
    bad = np.nonzero(np.any(ratio > 1.0 + slack, axis=0))[0]
    late = times >= 0.5 * T
    rates = np.array([-np.polyfit(times[late], np.log(nr[late]), 1)[0] for nr in norms])
    return {"times": times, "norms": norms, "max_ratio": float(ratio.max()),
            "first_violation": float(times[bad[0]]) if bad.size else None,
            "fitted_rates": rates, "passed": bad.size == 0}


# --------------------------------------------------------------- variance law

def exact_phase_variance(profile: WaveProfile, noise: NoiseModel, times: np.ndarray, dt: float) -> np.ndarray:
    """``sum_{t_n < t} dt <Psi(. + ct_n), Q Psi(. + ct_n)>``, the variance of the discrete ``C0``."""
    N = int(round(np.max(times) / dt))
    rates = np.array([noise.quad_form(shift_profile(profile, profile.c * n * dt, "Psi")) for n in range(N)])
    cum = np.concatenate([[0.0], np.cumsum(rates) * dt])
    idx = np.round(np.asarray(times) / dt).astype(int)
    return cum[idx]


def variance_law(C0: np.ndarray, times: np.ndarray, profile: WaveProfile, noise: NoiseModel,
                 dt: float, *, min_paths: int = 100) -> dict:
    """Regression through the origin of ``Var C0(t)`` on ``t`` with a jackknife SE.

    Compared against the slope of the exact discrete prediction (fitted the
    same way) and against the static rate ``<Psi, Q Psi>``.
    """
    C0 = np.asarray(C0, dtype=float)
    P = C0.shape[0]
    t = np.asarray(times, dtype=float)
    sel = t > 0
    t, X = t[sel], C0[:, sel]
    tt = float(np.dot(t, t))

    def slope_of(var):
        return float(np.dot(var, t) / tt)

    var = X.var(axis=0, ddof=1)
    slope = slope_of(var)
    # leave-one-out variances in closed form
    s1, s2 = X.sum(axis=0), (X * X).sum(axis=0)
    loo_mean = (s1[None, :] - X) / (P - 1)
    loo_var = ((s2[None, :] - X * X) - (P - 1) * loo_mean**2) / (P - 2)
    jk = loo_var @ t / tt
    se = float(math.sqrt((P - 1) / P * np.sum((jk - jk.mean()) ** 2)))
    exact = exact_phase_variance(profile, noise, t, dt)
    exact_slope = slope_of(exact)
    static = float(noise.quad_form(profile.Psi))
    powered = P >= min_paths
    z = abs(slope - exact_slope) / se if se > 0 else float("inf")
    return {"n_paths": P, "slope": slope, "se": se, "exact_slope": exact_slope, "static_rate": static,
            "gap_exact": slope - exact_slope, "gap_static": slope - static,
            "exact_vs_static": exact_slope - static, "z": z,
            "verdict": ("insufficient_power" if not powered else ("pass" if z <= 3.0 else "fail")),
            "times": t, "variance": var, "exact_variance": exact}


# ------------------------------------------------------ second-moment bound

def frozen_frame_u0(profile: WaveProfile, noise: NoiseModel, eta: np.ndarray, seeds: Sequence[PathSeed],
                    *, T: float, dt: float, n_out: int = 100, batch: int = 100) -> tuple[np.ndarray, np.ndarray]:
    """``||u0^#(t)||^2_rho`` for each path, integrated in the co-moving frame.

    ``du = L_h u dt + Pi dW(. - ct)`` with the static projection ``Pi``;
    backward Euler in the constant frozen operator, noise modes translated
    by ``-ct`` each step.  Returns ``(times, norms_sq)`` with shape ``(P, n_t)``.
    """
    g = profile.grid
    fr = _static_frame(profile)
    w = g.weights
    wr = w * profile.rho
    solver = _BandSolver(frozen_operator(profile), dt)
    N = int(round(T / dt))
    outs = np.unique(np.round(np.linspace(0, N, n_out + 1)).astype(int))
    out_idx = {int(k): j for j, k in enumerate(outs)}
    res = np.zeros((len(seeds), outs.size))
    u_init = project(np.asarray(eta, dtype=float), fr, w)
    for b0 in range(0, len(seeds), batch):
        chunk = seeds[b0:b0 + batch]
        coeffs = np.stack([IncrementStream(noise, N, dt, s).coeffs for s in chunk], axis=1)
        U = np.tile(u_init, (len(chunk), 1))
        res[b0:b0 + len(chunk), 0] = np.sum(U * U * wr, axis=-1)
        for n in range(N):
            modes = noise.mode_values(g.x - profile.c * n * dt)
            dW = coeffs[n] @ modes
            U = project(solver.solve(U + project(dW, fr, w)), fr, w)
            j = out_idx.get(n + 1)
            if j is not None:
                res[b0:b0 + len(chunk), j] = np.sum(U * U * wr, axis=-1)
    return outs * dt, res


def frozen_hs_rho(profile: WaveProfile, noise: NoiseModel, T: float, n_t: int = 51) -> float:
    """``sup_t sum_k q_k ||e_k(. - ct)||^2_rho``: HS norm of ``sqrt Q`` into ``L^2(rho)`` in the frozen frame."""
    g = profile.grid
    wr = g.weights * profile.rho
    best = 0.0
    for t in np.linspace(0.0, T, n_t):
        modes = noise.mode_values(g.x - profile.c * t)
        best = max(best, float(np.sum(noise.q * (modes**2 @ wr))))
    return best


def second_moment_bound(times: np.ndarray, norms_sq: np.ndarray, kappa_hat: float, eta_norm_rho: float,
                        hs: float) -> dict:
    """``E||u0^#(t)||^2_rho <= 2 e^{-2 kappa t} ||eta||_rho + hs/kappa (1 - e^{-2 kappa t}) + 3 SE``."""
    P = norms_sq.shape[0]
    mean = norms_sq.mean(axis=0)
    se = norms_sq.std(axis=0, ddof=1) / math.sqrt(P) if P > 1 else np.zeros_like(mean)
    decay = np.exp(-2 * kappa_hat * np.asarray(times))
    bound = 2 * decay * eta_norm_rho + hs / kappa_hat * (1 - decay)
    margin = bound + 3 * se - mean
    viol = np.nonzero(margin < 0)[0]
    return {"times": np.asarray(times), "mean": mean, "se": se, "bound": bound,
            "min_margin": float(margin.min()), "plateau": float(hs / kappa_hat),
            "first_violation": float(times[viol[0]]) if viol.size else None, "passed": viol.size == 0}


# -------------------------------------------------------------- orthogonality

def orthogonality_check(traj: PathTrajectory, profile: WaveProfile) -> float:
    """``max_t |<u0(t), vhat_x(. + ct)>_{rho_t}| / ||u0(t)||_{rho_t}`` over snapshots with ``t > 0``.

    ``u0(0) = eta`` is stored unprojected (the projection acts from the first
    step on), so the initial snapshot is excluded.
    """
    if traj.u0 is None:
        raise ValueError("trajectory has no stored u0 snapshots")
    kit = WeightedNormKit(profile)
    w = profile.grid.weights
    worst = 0.0
    for j, t in enumerate(traj.times):
        if t <= 0:
            continue
        u0 = traj.u0[..., j, :]
        # <h, vhat_x(.+ct)>_{rho_t} = <h, Psi(.+ct)> in L^2(dx)
        pair = np.abs(np.sum(u0 * shift_profile(profile, profile.c * t, "Psi") * w, axis=-1))
        nrm = kit.norm(u0, "rho", t)
        rel = np.where(nrm > 0, pair / np.where(nrm > 0, nrm, 1.0), 0.0)
        worst = max(worst, float(np.max(rel)))
    return worst


# ----------------------------------------------------------------- minimiser

def minimisation_check(v: np.ndarray, C0: float, t: float, eps: float, profile: WaveProfile,
                       *, h: float = 1e-3) -> tuple[float, float, float]:
    """Central differences of ``a -> ||v - vhat(. + ct + eps a)||^2_{rho_t}`` at ``a = C0``.

    Returns ``(first / eps^2, second / eps^2, 2 ||vhat_x(. + ct)||^2_{rho_t})``.
    """
    kit = WeightedNormKit(profile)
    w = kit.weights("rho", t)
    ct = profile.c * t
    g = [float(np.sum((v - shift_profile(profile, ct + eps * (C0 + s * h), "vhat")) ** 2 * w))
         for s in (-1.0, 0.0, 1.0)]
    first = (g[2] - g[0]) / (2 * h)
    second = (g[2] - 2 * g[1] + g[0]) / h**2
    ref = 2.0 * float(np.sum(shift_profile(profile, ct, "vhat_x") ** 2 * w))
    return first / eps**2, second / eps**2, ref


# -------------------------------------------------------------- relaxation

def relaxation_gap(traj: PathTrajectory, delta: float) -> tuple[np.ndarray, np.ndarray]:
    """``sup_{delta <= t <= T} |C0m - C0|`` and ``sup_t |C0|`` per path."""
    sel = traj.times >= delta - 1e-12
    gap = np.max(np.abs(traj.C0m[..., sel] - traj.C0[..., sel]), axis=-1)
    return gap, np.max(np.abs(traj.C0), axis=-1)
