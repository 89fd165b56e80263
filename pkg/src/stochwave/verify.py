"""Claim checks: each runs one experiment and returns a JSON-ready verdict.

Every verdict has ``claim``, ``anchor`` (the statement checked), ``verdict``
(``pass``/``fail``/``insufficient_power``), ``measured`` and ``thresholds``.
Per-claim settings come from ``claims.<name>`` in the config, falling back
to the defaults in ``CLAIM_DEFAULTS``.
"""

from __future__ import annotations

import math
from typing import Callable, Optional

import numpy as np

from . import analysis as A
from .config import CLAIMS, ExperimentConfig
from .dynamics import ModelParams, run_deterministic_front, run_paths
from .noise import PathSeed
from .wave_profile import shift_profile

__all__ = ["CLAIM_DEFAULTS", "ANCHORS", "run_claim", "UnknownClaimError"]


class UnknownClaimError(KeyError):
    pass


ANCHORS = {
    "speed": "level-a front advances at speed c (within 1%)",
    "kernel": "L# vhat_x = 0 and its adjoint kernel are second-order consistent",
    "contraction": "||P# u||_rho <= exp(-kappa t) ||u||_rho on the complement of vhat_x",
    "scaling": "sup_t ||eps r^m|| = O(eps^(2-2q)); P[tau < T] -> 0; the m -> infinity residual has the same order",
    "variance": "Var C0(t) = int_0^t <Psi(.+cs), Q Psi(.+cs)> ds",
    "moment": "E||u0#(t)||^2_rho <= 2 exp(-2 kappa t)||eta||_rho + ||sqrt Q||^2_HS / kappa (1 - exp(-2 kappa t))",
    "ortho": "<u0(t), vhat_x(.+ct)>_{rho_t} = 0",
    "minimise": "a -> ||v(t) - vhat(.+ct+eps a)||^2_{rho_t} is locally minimal at C0(t) to order eps",
    "relaxation": "sup_{delta <= t <= T} |C0m - C0| -> 0 as m -> infinity",
}

CLAIM_DEFAULTS = {
    "speed": {"T": 10.0, "dt": 1e-3, "rel_tol": 0.01},
    "kernel": {"ratio_low": 3.2, "ratio_high": 4.8},
    "contraction": {"n_vectors": 10, "T": 10.0, "dt": 0.01, "slack": 0.05, "n_certify": 1000},
    "scaling": {"T": 5.0, "dt": 1e-3, "m": 100.0, "m_limit": 1000.0, "q_exp": 0.1, "n_paths": 32,
                "min_slope": 1.6, "max_stop_fraction": 0.05, "limit_tol": 0.1},
    "variance": {"a": 0.5, "T": 5.0, "dt": 0.01, "n_paths": 500, "n_out": 50, "min_paths": 100},
    "moment": {"T": 10.0, "dt": 0.01, "n_paths": 500, "n_out": 50,
               "eta": {"kind": "bump", "amplitude": 0.3, "center": 2.0, "width": 1.0}},
    "ortho": {"T": 5.0, "dt": 0.01, "n_paths": 4, "tol": 1e-8, "ratio_low": 1.6, "ratio_high": 2.4,
              "eta": {"kind": "bump", "amplitude": 0.3, "center": 2.0, "width": 1.0}},
    "minimise": {"epsilons": [0.02, 0.01, 0.005], "t": 2.5, "dt": 5e-4, "n_paths": 8, "rel_tol": 0.1},
    "relaxation": {"m_values": [1.0, 10.0, 100.0, 1000.0], "delta": 0.5, "T": 5.0, "dt": 1e-4,
                   "eta": {"kind": "vhat_x", "amplitude": 0.5}, "n_out": 500, "max_rel": 0.05},
}


def _settings(cfg: ExperimentConfig, name: str, paths: Optional[int]) -> dict:
    s = {**CLAIM_DEFAULTS[name], **cfg.claim(name)}
    if paths is not None and "n_paths" in s:
        s["n_paths"] = int(paths)
    return s


def _verdict(name, passed, measured, thresholds, settings, cfg, seeds=None, verdict=None):
    return {
        "claim": name, "anchor": ANCHORS[name],
        "verdict": verdict or ("pass" if passed else "fail"),
        "measured": measured, "thresholds": thresholds, "settings": settings,
        "master_seed": int(cfg.data["sweep"]["master_seed"]),
        "seed_range": seeds,
    }


def claim_speed(cfg, s):
    profile = cfg.profile()
    times, xs = run_deterministic_front(profile, s["T"], s["dt"])
    slope = float(np.polyfit(times, xs, 1)[0])
    speed = -slope  # vhat(x + ct) travels towards -x
    c = profile.c
    tol = s["rel_tol"] * abs(c) if c != 0 else 1e-3
    passed = abs(speed - c) <= tol
    return _verdict("speed", passed, {"speed": speed, "c": c, "rel_error": abs(speed - c) / abs(c) if c else None},
                    {"interval": [c - tol, c + tol]}, s, cfg)


def claim_kernel(cfg, s):
    m = cfg.data["model"]
    g = cfg.data["grid"]
    kc = A.kernel_convergence(m["nu"], m["b"], m["a"], g["L"], g["n"])
    lo, hi = s["ratio_low"], s["ratio_high"]
    passed = lo <= kc["ratio_vx"] <= hi and lo <= kc["ratio_psi"] <= hi
    return _verdict("kernel", passed, kc, {"ratio": [lo, hi]}, s, cfg)


def claim_contraction(cfg, s):
    profile = cfg.profile()
    gap = A.spectral_gap(profile, n_test=s["n_certify"])
    viol = A.certify_gap(profile, gap, n_test=s["n_certify"])
    U = A._random_fields(profile, s["n_vectors"], int(cfg.data["sweep"]["master_seed"]), gap.rho_h)
    cc = A.contraction_check(profile, None, gap.kappa_hat, U, T=s["T"], dt=s["dt"], slack=s["slack"])
    passed = gap.kappa_hat > 0 and cc["passed"] and viol == 0
    return _verdict("contraction", passed,
                    {"kappa_hat": gap.kappa_hat, "C_star_hat": gap.C_star_hat, "gap_violations": viol,
                     "max_ratio": cc["max_ratio"], "first_violation": cc["first_violation"],
                     "fitted_rates": cc["fitted_rates"]},
                    {"kappa_hat": "> 0", "ratio": 1.0 + s["slack"]}, s, cfg)


def claim_scaling(cfg, s):
    over = {"T": s["T"], "dt": s["dt"], "q_exp": s["q_exp"]}
    rep = A.scaling_study(cfg, None, s["n_paths"], m=s["m"], **over)
    lim = A.scaling_study(cfg, None, s["n_paths"], m=s["m_limit"], phase=False, **over)
    sf = rep.stop_fractions
    # eps is sorted decreasing, so the fraction must not increase along the array
    monotone = bool(np.all(np.diff(sf) <= 0))
    gap6 = abs(lim.immediate_slope - lim.slope)
    ok4 = rep.slope >= s["min_slope"] and monotone and sf[-1] <= s["max_stop_fraction"]
    ok6 = gap6 <= s["limit_tol"]
    return _verdict("scaling", ok4 and ok6,
                    {"epsilons": rep.epsilons, "median_slope": rep.slope, "iqr": rep.iqr,
                     "stop_fractions": sf, "stop_fraction_monotone": monotone,
                     "m_limit_finite_slope": lim.slope, "m_limit_immediate_slope": lim.immediate_slope,
                     "limit_slope_gap": gap6, "criterion_4": ok4, "criterion_6": ok6},
                    {"min_slope": s["min_slope"], "max_stop_fraction": s["max_stop_fraction"],
                     "limit_tol": s["limit_tol"]}, s, cfg, seeds=[0, s["n_paths"]])


def claim_variance(cfg, s):
    c2 = cfg.with_overrides({"model": {"a": s["a"]}})
    profile = c2.profile()
    noise = c2.noise(profile)
    seeds = c2.seeds(s["n_paths"])
    params = c2.params(T=s["T"], dt=s["dt"], eta=np.zeros(profile.grid.n))
    tr = run_paths(params, profile, noise, seeds, n_out=s["n_out"], fields=False)
    vl = A.variance_law(tr.C0, tr.times, profile, noise, s["dt"], min_paths=s["min_paths"])
    meas = {k: vl[k] for k in ("n_paths", "slope", "se", "exact_slope", "static_rate", "gap_exact",
                               "gap_static", "exact_vs_static", "z")}
    meas["c"] = profile.c
    return _verdict("variance", vl["verdict"] == "pass", meas, {"z_max": 3.0, "min_paths": s["min_paths"]},
                    s, c2, seeds=[0, s["n_paths"]], verdict=vl["verdict"])


def claim_moment(cfg, s):
    c2 = cfg.with_overrides({"run": {"eta": s["eta"]}})
    profile = c2.profile()
    noise = c2.noise(profile)
    gap = A.spectral_gap(profile)
    eta = c2.eta(profile)
    times, ns = A.frozen_frame_u0(profile, noise, eta, c2.seeds(s["n_paths"]), T=s["T"], dt=s["dt"],
                                  n_out=s["n_out"])
    hs = A.frozen_hs_rho(profile, noise, s["T"])
    eta_norm = float(np.sqrt(np.sum(eta**2 * profile.rho * profile.grid.weights)))
    mb = A.second_moment_bound(times, ns, gap.kappa_hat, eta_norm, hs)
    return _verdict("moment", mb["passed"],
                    {"kappa_hat": gap.kappa_hat, "hs_rho": hs, "eta_norm_rho": eta_norm,
                     "min_margin": mb["min_margin"], "first_violation": mb["first_violation"],
                     "plateau": mb["plateau"], "final_mean": mb["mean"][-1], "final_se": mb["se"][-1]},
                    {"se_slack": 3.0}, s, c2, seeds=[0, s["n_paths"]])


def claim_ortho(cfg, s):
    c2 = cfg.with_overrides({"run": {"eta": s["eta"]}})
    profile = c2.profile()
    noise = c2.noise(profile)
    seeds = c2.seeds(s["n_paths"])
    base = dict(T=s["T"], m=100.0)
    tr = run_paths(c2.params(dt=s["dt"], **base), profile, noise, seeds, n_out=50, phase=False)
    maintained = A.orthogonality_check(tr, profile)
    drifts = []
    for dt, refine in ((2 * s["dt"], 2), (s["dt"], 1)):
        p = c2.params(dt=dt, project_u0=False, **base)
        tr = run_paths(p, profile, noise, seeds, n_out=50, phase=False, refine=refine)
        drifts.append(A.orthogonality_check(tr, profile))
    ratio = drifts[0] / drifts[1] if drifts[1] > 0 else float("inf")
    ok = maintained <= s["tol"] and s["ratio_low"] <= ratio <= s["ratio_high"]
    return _verdict("ortho", ok, {"max_relative_pairing": maintained, "project_u0": c2.params().project_u0,
                                  "drift_dt": drifts[0], "drift_dt_half": drifts[1], "halving_ratio": ratio},
                    {"tol": s["tol"], "ratio": [s["ratio_low"], s["ratio_high"]]}, s, c2, seeds=[0, s["n_paths"]])


def claim_minimise(cfg, s):
    profile = cfg.profile()
    noise = cfg.noise(profile)
    seeds = cfg.seeds(s["n_paths"])
    t = s["t"]
    firsts, seconds, ref = [], [], None
    for eps in s["epsilons"]:
        params = cfg.params(epsilon=float(eps), T=t, dt=s["dt"])
        tr = run_paths(params, profile, noise, seeds, n_out=1, phase=False)
        V = shift_profile(profile, profile.c * t, "vhat")
        vals = np.array([A.minimisation_check(tr.u[i, -1] + V, tr.C0[i, -1], t, eps, profile)
                         for i in range(len(seeds))])
        firsts.append(float(np.median(np.abs(vals[:, 0]))))
        seconds.append(float(np.median(vals[:, 1])))
        ref = float(vals[0, 2])
    eps_arr = np.array(s["epsilons"], dtype=float)
    order = np.argsort(-eps_arr)
    f_sorted = np.array(firsts)[order]
    monotone = bool(np.all(np.diff(f_sorted) < 0))
    i_small = int(np.argmin(eps_arr))
    rel = abs(seconds[i_small] - ref) / ref
    return _verdict("minimise", monotone and rel <= s["rel_tol"],
                    {"epsilons": eps_arr, "median_abs_first_over_eps2": firsts,
                     "median_second_over_eps2": seconds, "reference": ref, "rel_error_smallest_eps": rel,
                     "first_monotone": monotone},
                    {"rel_tol": s["rel_tol"]}, s, cfg, seeds=[0, s["n_paths"]])


def claim_relaxation(cfg, s):
    c2 = cfg.with_overrides({"run": {"eta": s["eta"]}})
    profile = c2.profile()
    noise = c2.noise(profile)
    seed = c2.seeds(1)
    gaps, sup_c0 = [], None
    for m in s["m_values"]:
        params = c2.params(m=float(m), T=s["T"], dt=s["dt"])
        tr = run_paths(params, profile, noise, seed, n_out=s["n_out"], fields=False)
        g, sc = A.relaxation_gap(tr, s["delta"])
        gaps.append(float(g[0]))
        sup_c0 = float(sc[0])
    dec = bool(np.all(np.diff(gaps) < 0))
    rel = gaps[-1] / sup_c0 if sup_c0 > 0 else float("inf")
    return _verdict("relaxation", dec and rel <= s["max_rel"],
                    {"m_values": s["m_values"], "sup_gap": gaps, "sup_abs_C0": sup_c0, "last_relative": rel,
                     "strictly_decreasing": dec},
                    {"max_rel": s["max_rel"]}, s, c2, seeds=[0, 1])


_RUNNERS: dict[str, Callable] = {
    "speed": claim_speed, "kernel": claim_kernel, "contraction": claim_contraction,
    "scaling": claim_scaling, "variance": claim_variance, "moment": claim_moment,
    "ortho": claim_ortho, "minimise": claim_minimise, "relaxation": claim_relaxation,
}
assert set(_RUNNERS) == set(CLAIMS)


def run_claim(cfg: ExperimentConfig, name: str, *, paths: Optional[int] = None) -> dict:
    if name not in _RUNNERS:
        raise UnknownClaimError(f"unknown claim {name!r}; expected one of {', '.join(CLAIMS)}")
    s = _settings(cfg, name, paths)
    out = _RUNNERS[name](cfg, s)
    out["config_hash"] = cfg.hash
    return out
