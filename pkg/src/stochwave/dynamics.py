"""Coupled time stepping of the stochastic wave and its first-order processes.

On one Brownian path the following are advanced with the same increments:

* ``u = v - vhat(. + ct)``: the full perturbation, semi-implicit
  Euler-Maruyama with implicit diffusion and noise amplitude ``epsilon``;
* ``Cm``: the phase adaptation ``dC/dt = m B(t, C)``, explicit Euler
  sub-steps with ``v`` frozen over the step;
* ``c0m``, ``C0m``: the OU wave speed and its integral (exponential
  integrator, ``C0m`` integrated exactly over each step);
* ``C0``: the immediate-relaxation phase;
* ``u0m``, ``u0``: the linearised fluctuations (unit noise amplitude), ``u0``
  driven by projected noise and kept orthogonal to the moving ``vhat_x``.

All arrays carry a leading path axis so that a batch of paths shares one
tridiagonal factorisation.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from .grid import ImplicitDiffusion
from .noise import IncrementStream, NoiseModel, PathSeed
from .norms import WeightedNormKit
from .wave_profile import WaveProfile, WindowError, level_crossing, shift_profile

__all__ = [
    "ModelParams",
    "PathState",
    "PathTrajectory",
    "Frame",
    "BlowUpError",
    "init_state",
    "step_full_spde",
    "step_phase_ode",
    "step_ou_speed",
    "step_immediate_phase",
    "step_linearized",
    "project",
    "wave_speed_diagnostic",
    "check_stopping",
    "run_path",
    "run_paths",
    "run_deterministic_front",
]


class BlowUpError(FloatingPointError):
    def __init__(self, step: int, path: Optional[int] = None, what: str = "u"):
        where = f" on path {path}" if path is not None else ""
        super().__init__(f"non-finite {what} at step {step}{where}")
        self.step = step
        self.path = path


@dataclass(frozen=True)
class ModelParams:
    nu: float
    b: float
    epsilon: float
    m: float
    T: float
    dt: float
    q_exp: float = 0.1
    eta: Optional[np.ndarray] = None
    project_u0: bool = True

    def __post_init__(self):
        for name in ("nu", "b", "dt", "T", "m"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive, got {getattr(self, name)}")
        if self.epsilon < 0:
            raise ValueError(f"epsilon must be non-negative, got {self.epsilon}")
        if not 0.0 <= self.q_exp <= 1.0:
            raise ValueError(f"stopping exponent q must lie in [0, 1], got {self.q_exp}")

    @property
    def n_steps(self) -> int:
        return int(round(self.T / self.dt))

    def eta_on(self, n: int) -> np.ndarray:
        return np.zeros(n) if self.eta is None else np.asarray(self.eta, dtype=float)


@dataclass
class Frame:
    """Profile data in the frame moving with speed ``c`` at time ``t``."""

    t: float
    V: np.ndarray
    Vx: np.ndarray
    f1V: np.ndarray
    Psi: np.ndarray

    @classmethod
    def at(cls, profile: WaveProfile, t: float) -> "Frame":
        s = profile.c * t
        V = shift_profile(profile, s, "vhat")
        return cls(t=t, V=V, Vx=shift_profile(profile, s, "vhat_x"),
                   f1V=profile.reaction.f1(V), Psi=shift_profile(profile, s, "Psi"))

    @classmethod
    def psi_only(cls, profile: WaveProfile, t: float) -> "Frame":
        return cls(t=t, V=None, Vx=None, f1V=None, Psi=shift_profile(profile, profile.c * t, "Psi"))


@dataclass
class PathState:
    t: float
    step: int
    u: np.ndarray
    Cm: np.ndarray
    c0m: np.ndarray
    C0m: np.ndarray
    C0: np.ndarray
    u0m: np.ndarray
    u0: np.ndarray
    energy_sup: np.ndarray
    energy_int: np.ndarray
    stopped_q: np.ndarray
    stopped_m: np.ndarray
    stopped_inf: np.ndarray
    tau_q: np.ndarray
    tau_m: np.ndarray
    tau_inf: np.ndarray
    u_norm: np.ndarray
    cm: np.ndarray = None
    cm0: np.ndarray = None
    speed_terms: np.ndarray = None

    @property
    def n_paths(self) -> int:
        return self.u.shape[0]


def init_state(params: ModelParams, profile: WaveProfile, n_paths: int) -> PathState:
    g = profile.grid
    eta = params.eta_on(g.n)
    g.check_vector(eta)
    P = n_paths
    eta_psi = float(np.dot(g.weights, eta * profile.Psi))
    kit = WeightedNormKit(profile)
    u = np.tile(params.epsilon * eta, (P, 1))
    unorm = kit.h1_norm(u, 0.0)
    zeros = np.zeros(P)
    return PathState(
        t=0.0, step=0, u=u, Cm=zeros.copy(), c0m=np.full(P, params.m * eta_psi),
        C0m=zeros.copy(), C0=zeros.copy(), u0m=np.tile(eta, (P, 1)), u0=np.tile(eta, (P, 1)),
        energy_sup=kit.norm_sq(u, "1+rho"), energy_int=zeros.copy(),
        stopped_q=np.zeros(P, bool), stopped_m=np.zeros(P, bool), stopped_inf=np.zeros(P, bool),
        tau_q=np.full(P, np.nan), tau_m=np.full(P, np.nan), tau_inf=np.full(P, np.nan),
        u_norm=unorm, cm=zeros.copy(), cm0=None, speed_terms=np.zeros((P, 4)),
    )


def _solver(profile, params, solver):
    return solver if solver is not None else ImplicitDiffusion(profile.grid, params.dt, params.nu)


def step_full_spde(state: PathState, params: ModelParams, profile: WaveProfile, dW: np.ndarray,
                   *, frame: Frame = None, solver: ImplicitDiffusion = None) -> np.ndarray:
    """``(I - dt nu D2) u' = u + dt b [f(u + V) - f(V)] + eps dW`` with ``V = vhat(. + ct)``."""
    fr = frame or Frame.at(profile, state.t)
    f = profile.reaction.f
    rhs = state.u + params.dt * params.b * (f(state.u + fr.V) - f(fr.V)) + params.epsilon * dW
    return _solver(profile, params, solver).solve(rhs)


def _phase_B(profile, v, s, w):
    """``B = <v - vhat(. + s), Psi(. + s)>`` for per-path shifts ``s``."""
    Vs = shift_profile(profile, s, "vhat")
    Ps = shift_profile(profile, s, "Psi")
    return np.sum((v - Vs) * Ps * w, axis=-1), Vs, Ps


def step_phase_ode(state: PathState, params: ModelParams, profile: WaveProfile,
                   *, frame: Frame = None) -> np.ndarray:
    """Advance ``C^m`` by ``ceil(10 m dt)`` explicit Euler sub-steps (``m dt_sub <= 0.1``)."""
    fr = frame or Frame.at(profile, state.t)
    w = profile.grid.weights
    v = state.u + fr.V
    n_sub = max(1, math.ceil(10.0 * params.m * params.dt - 1e-12))
    h = params.dt / n_sub
    C = state.Cm.copy()
    ct = profile.c * state.t
    for _ in range(n_sub):
        B, _, _ = _phase_B(profile, v, ct + C, w)
        C = C + h * params.m * B
    return C


def step_ou_speed(state: PathState, params: ModelParams, profile: WaveProfile, dW_pair: np.ndarray):
    """Exponential-integrator step of ``dc = -m c dt + m <Psi(. + ct), dW>``.

    ``dW_pair`` is ``<Psi(. + ct_n), dW_n>`` per path.  Returns the new
    ``c0m``, the new ``C0m`` and the increment ``dC0m``, which is the exact
    integral of the piecewise solution over the step.
    """
    m, dt = params.m, params.dt
    E = math.exp(-m * dt)
    phi = -math.expm1(-m * dt) / m
    c_new = E * state.c0m + (1.0 - E) * dW_pair / dt
    dC = state.c0m * phi + dW_pair * (1.0 - phi / dt)
    return c_new, state.C0m + dC, dC


def step_immediate_phase(state: PathState, profile: WaveProfile, dW_pair: np.ndarray,
                         eta_psi: float = 0.0) -> np.ndarray:
    """``C0 += <Psi(. + ct_n), dW_n>``; the first step also adds ``<eta, Psi>``."""
    jump = eta_psi if state.step == 0 else 0.0
    return state.C0 + dW_pair + jump


def project(h: np.ndarray, frame: Frame, weights: np.ndarray) -> np.ndarray:
    """``h - <h, Psi_t> / <vhat_x(. + ct), Psi_t> vhat_x(. + ct)``.

    Dividing by the discrete pairing makes the projector idempotent and the
    result orthogonal to ``vhat_x(. + ct)`` in ``L^2(rho_t)`` to rounding.
    """
    num = np.sum(h * frame.Psi * weights, axis=-1)
    den = np.dot(frame.Vx * frame.Psi, weights)
    return h - (num / den)[..., None] * frame.Vx


def step_linearized(state: PathState, params: ModelParams, profile: WaveProfile, dW: np.ndarray,
                    which: str, *, frame: Frame = None, next_frame: Frame = None,
                    dC0m: np.ndarray = None, solver: ImplicitDiffusion = None) -> np.ndarray:
    """One semi-implicit step of ``u0m`` or ``u0`` (unit noise amplitude).

    ``u0m``: forcing ``-dC0m * vhat_x(. + ct_n)`` where ``dC0m`` is the
    increment of ``C0m`` over the step (defaults to ``dt * c0m``).
    ``u0``: projected noise ``Pi_t dW``; the state is projected at the first
    step and, with ``params.project_u0``, re-projected after every step.
    """
    fr = frame or Frame.at(profile, state.t)
    w = profile.grid.weights
    sol = _solver(profile, params, solver)
    lin = params.dt * params.b * fr.f1V
    if which == "u0m":
        if dC0m is None:
            dC0m = params.dt * state.c0m
        rhs = state.u0m + lin * state.u0m - dC0m[..., None] * fr.Vx + dW
        return sol.solve(rhs)
    if which == "u0":
        u0 = project(state.u0, fr, w) if state.step == 0 else state.u0
        rhs = u0 + lin * u0 + project(dW, fr, w)
        out = sol.solve(rhs)
        if params.project_u0:
            nf = next_frame or Frame.at(profile, state.t + params.dt)
            out = project(out, nf, w)
        return out
    raise ValueError(f"unknown linearised field {which!r}")


def wave_speed_diagnostic(state: PathState, profile: WaveProfile, params: ModelParams):
    """Adapted speed ``c^m = m <u^m, Psi(. + gamma^m)>`` and the discrepancy of its SDE.

    The discrepancy is ``c^m(t) - c^m(0)`` minus the accumulated drift and
    noise integrals (left-endpoint quadrature), recorded during the run.
    """
    fr = Frame.at(profile, state.t)
    w = profile.grid.weights
    B, _, _ = _phase_B(profile, state.u + fr.V, profile.c * state.t + state.Cm, w)
    cm = params.m * B
    cm0 = state.cm0 if state.cm0 is not None else cm
    disc = cm - cm0 - state.speed_terms.sum(axis=-1)
    return cm, disc


def _speed_terms(state, profile, params, fr, dW, w):
    """Left-endpoint increments of the four terms of the adapted-speed SDE."""
    gam = profile.c * state.t + state.Cm
    Vg = shift_profile(profile, gam, "vhat")
    Pg = shift_profile(profile, gam, "Psi")
    Pgx = shift_profile(profile, gam, "Psi_x")
    um = state.u + fr.V - Vg
    cm = params.m * np.sum(um * Pg * w, axis=-1)
    rf = profile.reaction
    R = params.b * (rf.f(um + Vg) - rf.f(Vg) - rf.f1(Vg) * um)
    dt, m = params.dt, params.m
    terms = np.stack([
        -m * cm * dt,
        m * cm * np.sum(um * Pgx * w, axis=-1) * dt,
        m * np.sum(R * Pg * w, axis=-1) * dt,
        params.epsilon * m * np.sum(Pg * dW * w, axis=-1),
    ], axis=-1)
    return cm, terms


def check_stopping(state: PathState, params: ModelParams) -> None:
    """Flag first passages of the three stopping rules (integration continues)."""
    eps = params.epsilon
    if eps <= 0:
        return
    q = params.q_exp
    t = state.t
    hit = ~state.stopped_q & (state.u_norm >= eps ** (1.0 - q))
    state.tau_q[hit] = t
    state.stopped_q |= hit
    thr = eps ** (-q)
    hit = ~state.stopped_m & (np.abs(state.C0m) >= thr)
    state.tau_m[hit] = t
    state.stopped_m |= hit
    hit = ~state.stopped_inf & (np.abs(state.C0) >= thr)
    state.tau_inf[hit] = t
    state.stopped_inf |= hit


@dataclass
class PathTrajectory:
    """Snapshots of a batch of paths at the output times."""

    params: ModelParams
    seeds: list
    times: np.ndarray
    Cm: np.ndarray
    c0m: np.ndarray
    C0m: np.ndarray
    C0: np.ndarray
    cm: np.ndarray
    u_norm: np.ndarray
    u: Optional[np.ndarray] = None
    u0m: Optional[np.ndarray] = None
    u0: Optional[np.ndarray] = None
    speed_discrepancy: Optional[np.ndarray] = None
    energy_sup: Optional[np.ndarray] = None
    energy_int: Optional[np.ndarray] = None
    stopped_q: Optional[np.ndarray] = None
    stopped_m: Optional[np.ndarray] = None
    stopped_inf: Optional[np.ndarray] = None
    tau_q: Optional[np.ndarray] = None
    tau_m: Optional[np.ndarray] = None
    tau_inf: Optional[np.ndarray] = None
    observed: dict = field(default_factory=dict)

    @property
    def n_paths(self) -> int:
        return self.C0.shape[0]

    def path(self, i: int) -> "PathTrajectory":
        """Single path view with the leading axis removed."""
        kw = {}
        for name in self.__dataclass_fields__:
            val = getattr(self, name)
            if name in ("params", "times"):
                kw[name] = val
            elif name == "seeds":
                kw[name] = [val[i]]
            elif name == "observed":
                kw[name] = {k: v[i] for k, v in val.items()}
            else:
                kw[name] = None if val is None else val[i]
        return PathTrajectory(**kw)


def output_steps(n_steps: int, n_out: int) -> np.ndarray:
    return np.unique(np.round(np.linspace(0, n_steps, n_out + 1)).astype(int))


def run_paths(
    params: ModelParams,
    profile: WaveProfile,
    noise: NoiseModel,
    seeds: Sequence[PathSeed],
    *,
    n_out: int = 100,
    keep_fields: bool = True,
    fields: bool = True,
    diagnostics: bool = False,
    observer: Callable = None,
    refine: int = 1,
    phase: bool = True,
) -> PathTrajectory:
    """Advance a batch of paths with shared profile and noise model.

    Per step: sample ``dW`` -> full SPDE -> phase ODE -> OU speed ->
    immediate phase -> linearised fields -> diagnostics -> stopping.
    ``fields=False`` skips all grid fields and advances only the scalar
    processes ``c0m``, ``C0m`` and ``C0``; ``phase=False`` skips the phase
    ODE (``Cm`` stays 0), which no residual depends on.  ``observer(t, state, frame)`` is
    called at every output time and its dict result is collected in
    ``trajectory.observed``.
    """
    g = profile.grid
    g.check_same(noise.grid)
    N = params.n_steps
    if abs(profile.c) * params.T > 0.5 * g.L:
        raise WindowError(f"|c| T = {abs(profile.c) * params.T:g} exceeds L/2 = {0.5 * g.L:g}")
    streams = [IncrementStream(noise, N, params.dt, s, refine) for s in seeds]
    coeffs = np.stack([s.coeffs for s in streams], axis=1)  # (N, P, K)
    P = len(seeds)
    w = g.weights
    kit = WeightedNormKit(profile)
    solver = ImplicitDiffusion(g, params.dt, params.nu)
    eta = params.eta_on(g.n)
    eta_psi = float(np.dot(w, eta * profile.Psi))
    st = init_state(params, profile, P)
    outs = output_steps(N, n_out)
    out_set = {int(k): j for j, k in enumerate(outs)}
    n_o = len(outs)

    rec = {k: np.zeros((P, n_o)) for k in ("Cm", "c0m", "C0m", "C0", "cm", "u_norm", "disc")}
    if fields and keep_fields:
        fld = {k: np.zeros((P, n_o, g.n)) for k in ("u", "u0m", "u0")}
    observed: dict = {}

    make_frame = Frame.at if fields else Frame.psi_only
    frame = make_frame(profile, 0.0)
    if diagnostics and fields:
        cm, _ = _speed_terms(st, profile, params, frame, np.zeros((P, g.n)), w)
        st.cm, st.cm0 = cm, cm.copy()

    def record(j, fr):
        rec["Cm"][:, j] = st.Cm
        rec["c0m"][:, j] = st.c0m
        rec["C0m"][:, j] = st.C0m
        rec["C0"][:, j] = st.C0
        rec["cm"][:, j] = st.cm
        rec["u_norm"][:, j] = st.u_norm
        if diagnostics and fields:
            rec["disc"][:, j] = st.cm - st.cm0 - st.speed_terms.sum(axis=-1)
        if fields and keep_fields:
            fld["u"][:, j] = st.u
            fld["u0m"][:, j] = st.u0m
            fld["u0"][:, j] = st.u0
        if observer is not None:
            res = observer(st.t, st, fr)
            for k, v in (res or {}).items():
                observed.setdefault(k, np.zeros((P, n_o)))[:, j] = v

    record(0, frame)
    n = 0
    try:
        for n in range(N):
            a = coeffs[n]  # (P, K)
            gpair = a @ noise.projections(frame.Psi)  # <Psi(. + ct_n), dW_n>
            t_next = (n + 1) * params.dt
            next_frame = make_frame(profile, t_next)
            c_new, C0m_new, dC = step_ou_speed(st, params, profile, gpair)
            C0_new = step_immediate_phase(st, profile, gpair, eta_psi)
            if fields:
                dW = noise.synthesize(a)
                if diagnostics:
                    cm, terms = _speed_terms(st, profile, params, frame, dW, w)
                    st.cm = cm
                    st.speed_terms += terms
                u_new = step_full_spde(st, params, profile, dW, frame=frame, solver=solver)
                Cm_new = step_phase_ode(st, params, profile, frame=frame) if phase else st.Cm
                u0m_new = step_linearized(st, params, profile, dW, "u0m", frame=frame, dC0m=dC, solver=solver)
                u0_new = step_linearized(st, params, profile, dW, "u0", frame=frame,
                                         next_frame=next_frame, solver=solver)
                st.u, st.Cm, st.u0m, st.u0 = u_new, Cm_new, u0m_new, u0_new
            st.c0m, st.C0m, st.C0 = c_new, C0m_new, C0_new
            st.t, st.step = t_next, n + 1
            frame = next_frame
            if fields:
                wt = kit.weights("1+rho", st.t)
                st.u_norm = kit.h1_norm(st.u, st.t, w=wt)
                if not np.all(np.isfinite(st.u_norm)):
                    bad = int(np.nonzero(~np.isfinite(st.u_norm))[0][0])
                    raise BlowUpError(st.step, getattr(seeds[bad], "path_index", bad))
                e = kit.norm_sq(st.u, "1+rho")
                st.energy_sup = np.maximum(st.energy_sup, e)
                st.energy_int = st.energy_int + params.dt * kit.h1_norm_sq(st.u, 0.0)
                lim = 0.5 * g.L
                if np.any(np.abs(profile.c * st.t + st.Cm) > lim) or np.any(
                        np.abs(profile.c * st.t + params.epsilon * st.C0m) > lim):
                    raise WindowError(f"phase left the window at step {st.step}")
            check_stopping(st, params)
            j = out_set.get(st.step)
            if j is not None:
                if fields and not (np.all(np.isfinite(st.u0m)) and np.all(np.isfinite(st.u0))):
                    raise BlowUpError(st.step, None, "linearised field")
                if diagnostics and fields:
                    cm, _ = _speed_terms(st, profile, params, frame, np.zeros((P, g.n)), w)
                    st.cm = cm
                record(j, frame)
    except WindowError as exc:
        # shifts can run away before u does; report the step that failed
        exc.step = getattr(exc, "step", None) or n + 1
        raise

    traj = PathTrajectory(
        params=params, seeds=list(seeds), times=outs * params.dt,
        Cm=rec["Cm"], c0m=rec["c0m"], C0m=rec["C0m"], C0=rec["C0"], cm=rec["cm"],
        u_norm=rec["u_norm"], speed_discrepancy=rec["disc"] if diagnostics else None,
        energy_sup=st.energy_sup, energy_int=st.energy_int,
        stopped_q=st.stopped_q, stopped_m=st.stopped_m, stopped_inf=st.stopped_inf,
        tau_q=st.tau_q, tau_m=st.tau_m, tau_inf=st.tau_inf, observed=observed,
    )
    if fields and keep_fields:
        traj.u, traj.u0m, traj.u0 = fld["u"], fld["u0m"], fld["u0"]
    return traj


def run_deterministic_front(profile: WaveProfile, T: float, dt: float, n_out: int = 100,
                            level: Optional[float] = None) -> tuple[np.ndarray, np.ndarray]:
    """Integrate the noise-free equation for ``v`` itself from ``v(0) = vhat``.

    ``(I - dt nu D2) v' = v + dt b f(v)`` with ``v(-L) = 0``, ``v(L) = 1``
    (the boundary data are lifted by a linear function, which ``D2``
    annihilates).  Returns output times and the position of the level
    crossing (default level ``a``).
    """
    g = profile.grid
    level = profile.reaction.a if level is None else level
    lift = (g.x + g.L) / (2 * g.L)
    solver = ImplicitDiffusion(g, dt, profile.nu)
    w = profile.vhat - lift
    w[0] = w[-1] = 0.0
    N = int(round(T / dt))
    outs = output_steps(N, n_out)
    out_set = set(int(k) for k in outs)
    f = profile.reaction.f
    xs = [level_crossing(w + lift, g.x, level)]
    for n in range(1, N + 1):
        w = solver.solve(w + dt * profile.b * f(w + lift))
        if n in out_set:
            if not np.all(np.isfinite(w)):
                raise BlowUpError(n)
            xs.append(level_crossing(w + lift, g.x, level))
    return outs * dt, np.array(xs)


def run_path(params: ModelParams, profile: WaveProfile, noise: NoiseModel, seed: PathSeed,
             **kw) -> PathTrajectory:
    """Single-path convenience wrapper around :func:`run_paths`."""
    return run_paths(params, profile, noise, [seed], **kw).path(0)
