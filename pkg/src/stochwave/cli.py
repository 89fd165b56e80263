"""Command line: ``stochwave {profile,simulate,sweep,verify}``.

Exit codes: 0 pass, 1 claim failure, 2 configuration error, 3 numerical
failure (blow-up or window exit).
"""

from __future__ import annotations

import argparse
import logging
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np

from . import analysis as A
from .config import CLAIMS, ConfigError, load_config
from .dynamics import BlowUpError, run_paths
from .io import HashMismatchError, check_hash, to_jsonable, write_csv, write_frames, write_json
from .verify import run_claim
from .wave_profile import WindowError, shift_profile

log = logging.getLogger("stochwave")

EXIT_PASS, EXIT_FAIL, EXIT_CONFIG, EXIT_NUMERIC = 0, 1, 2, 3


def _config(args):
    over = {}
    if args.seed is not None:
        over["sweep"] = {"master_seed": int(args.seed)}
    if getattr(args, "paths", None) is not None:
        over.setdefault("sweep", {})["n_paths"] = int(args.paths)
    return load_config(args.config, over or None)


def _out(args, cfg) -> Path:
    return Path(args.out or cfg.data["outputs"]["directory"])


def cmd_profile(args) -> int:
    cfg = _config(args)
    out = _out(args, cfg)
    profile = cfg.profile()
    out.mkdir(parents=True, exist_ok=True)
    profile.to_csv(out / "profile.csv")
    kr = A.kernel_residuals(profile)
    gap = A.spectral_gap(profile)
    summary = {
        "c": profile.c, "Z": profile.Z, "gamma_minus": profile.gamma_minus, "gamma_plus": profile.gamma_plus,
        "kernel_residual_vhat_x_rho": kr[0], "kernel_residual_adjoint_psi": kr[1],
        "kappa_hat": gap.kappa_hat, "C_star_hat": gap.C_star_hat,
        "rho_constant": bool(abs(profile.c) < 1e-12),
        "assumptions": {k: v.passed for k, v in _assumptions(cfg).items()},
    }
    write_json(out / "profile.json", summary, config_hash=cfg.hash)
    lines = [f"config_hash={cfg.hash}", f"c={profile.c!r}", f"Z={profile.Z!r}",
             f"gamma_minus={profile.gamma_minus!r}", f"gamma_plus={profile.gamma_plus!r}",
             f"kappa_hat={gap.kappa_hat!r}"]
    if summary["rho_constant"]:
        lines.append("note=c is zero, rho is constant")
    (out / "profile.txt").write_text("\n".join(lines) + "\n")
    print("\n".join(lines))
    return EXIT_PASS


def _assumptions(cfg):
    from .reaction import check_assumptions

    return check_assumptions(cfg.reaction).checks


def _run_chunks(params, profile, noise, seeds, threads, chunk=32, **kw):
    """Fixed-size path chunks (so results do not depend on ``threads``), joined in order."""
    parts = [seeds[i:i + chunk] for i in range(0, len(seeds), chunk)]
    if threads and threads > 1 and len(parts) > 1:
        with ThreadPoolExecutor(max_workers=threads) as ex:
            trs = list(ex.map(lambda s: run_paths(params, profile, noise, s, **kw), parts))
    else:
        trs = [run_paths(params, profile, noise, s, **kw) for s in parts]
    return trs


def cmd_simulate(args) -> int:
    cfg = _config(args)
    out = _out(args, cfg)
    profile = cfg.profile()
    noise = cfg.noise(profile)
    params = cfg.params()
    seeds = cfg.seeds(1)
    cadence = int(cfg.data["outputs"]["cadence"])
    try:
        tr = run_paths(params, profile, noise, seeds, n_out=cadence, diagnostics=True).path(0)
    except (BlowUpError, WindowError) as exc:
        write_json(out / "summary.json", {"status": "numerical_failure", "error": str(exc),
                                          "blowup_step": getattr(exc, "step", None),
                                          "seed": cfg.data["sweep"]["master_seed"]}, config_hash=cfg.hash)
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    eps = params.epsilon
    rm = ri = None
    if eps > 0:
        wrap = _as_batch(tr)
        rm = A.residual_finite_m(wrap, profile, params)[0]
        ri = A.residual_immediate(wrap, profile, params)[0]
    rows = []
    for j, t in enumerate(tr.times):
        row = [t, tr.Cm[j], tr.c0m[j], tr.C0m[j], tr.C0[j], tr.cm[j], tr.u_norm[j], tr.speed_discrepancy[j]]
        row += [rm[j], ri[j]] if rm is not None else [float("nan"), float("nan")]
        rows.append(row)
    seed = cfg.data["sweep"]["master_seed"]
    write_csv(out / "trajectory.csv",
              ["t", "Cm", "c0m", "C0m", "C0", "cm", "u_norm_H1", "speed_discrepancy", "r_m_norm", "r_norm"],
              rows, config_hash=cfg.hash, seed=seed)
    if "bin" in cfg.data["outputs"].get("formats", []):
        write_frames(out / "u_frames.bin", tr.u, profile.grid)
    summary = {
        "status": "ok", "seed": seed, "epsilon": eps, "m": params.m, "T": params.T, "dt": params.dt,
        "sup_u_norm": float(np.max(tr.u_norm)), "energy_sup": tr.energy_sup, "energy_int": tr.energy_int,
        "stopped_q": tr.stopped_q, "stopped_m": tr.stopped_m, "stopped_inf": tr.stopped_inf,
        "tau_q": tr.tau_q, "tau_m": tr.tau_m, "tau_inf": tr.tau_inf,
        "sup_residual_m": None if rm is None else float(np.max(rm)),
        "sup_residual_immediate": None if ri is None else float(np.max(ri)),
        "max_speed_discrepancy": float(np.max(np.abs(tr.speed_discrepancy))),
    }
    write_json(out / "summary.json", summary, config_hash=cfg.hash)
    print(f"sup ||u||_H1(1+rho) = {summary['sup_u_norm']:.6g}")
    return EXIT_PASS


def _as_batch(tr):
    """Add back the leading path axis to a single-path trajectory."""
    import dataclasses

    kw = {}
    for f in dataclasses.fields(tr):
        v = getattr(tr, f.name)
        if isinstance(v, np.ndarray) and f.name != "times":
            v = v[None, ...]
        kw[f.name] = v
    return type(tr)(**kw)


def cmd_sweep(args) -> int:
    cfg = _config(args)
    out = _out(args, cfg)
    profile = cfg.profile()
    noise = cfg.noise(profile)
    seeds = cfg.seeds()
    cadence = int(cfg.data["outputs"]["cadence"])
    eps_list = sorted(cfg.data["sweep"]["epsilons"], reverse=True)
    if len(eps_list) < 3:
        raise ConfigError("sweep.epsilons", "a scaling fit needs at least 3 values")
    R, RI, S = [], [], []
    try:
        for eps in eps_list:
            params = cfg.params(epsilon=float(eps))
            trs = _run_chunks(params, profile, noise, seeds, args.threads, n_out=cadence, keep_fields=False,
                              observer=A._residual_observer(profile, eps), phase=False)
            R.append(np.concatenate([t.observed["eps_rm"].max(axis=1) for t in trs]))
            RI.append(np.concatenate([t.observed["eps_r"].max(axis=1) for t in trs]))
            S.append(np.concatenate([t.stopped_q | t.stopped_m for t in trs]))
    except (BlowUpError, WindowError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    R, RI, S = np.array(R), np.array(RI), np.array(S)
    slopes = A.fit_slopes(eps_list, R, S)
    islopes = A.fit_slopes(eps_list, RI, S)
    fin = slopes[np.isfinite(slopes)]
    ifin = islopes[np.isfinite(islopes)]
    report = {"epsilons": eps_list, "n_paths": len(seeds), "m": cfg.params().m,
              "median_slope": float(np.median(fin)) if fin.size else None,
              "iqr": np.percentile(fin, [25, 75]) if fin.size else None,
              "median_slope_immediate": float(np.median(ifin)) if ifin.size else None,
              "stop_fractions": S.mean(axis=1), "usable": ~S.all(axis=1),
              "seed_range": [0, len(seeds)], "master_seed": cfg.data["sweep"]["master_seed"]}
    write_json(out / "sweep.json", report, config_hash=cfg.hash)
    rows = [[eps, i, R[k, i], RI[k, i], int(S[k, i])] for k, eps in enumerate(eps_list) for i in range(len(seeds))]
    write_csv(out / "sweep.csv", ["epsilon", "path", "sup_eps_r_m", "sup_eps_r", "stopped"], rows,
              config_hash=cfg.hash, seed=cfg.data["sweep"]["master_seed"])
    print(f"median slope {report['median_slope']}, immediate {report['median_slope_immediate']}")
    return EXIT_PASS


def cmd_verify(args) -> int:
    cfg = _config(args)
    if args.claim not in CLAIMS:
        raise ConfigError("--claim", f"unknown claim {args.claim!r}; expected one of {', '.join(CLAIMS)}")
    out = _out(args, cfg)
    try:
        rep = run_claim(cfg, args.claim, paths=args.paths)
    except (BlowUpError, WindowError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    base = None
    if args.baseline:
        # checked before writing, so a mismatched baseline leaves no new artifact behind
        try:
            base = check_hash(args.baseline, cfg.hash)
        except HashMismatchError as exc:
            raise ConfigError("--baseline", str(exc)) from None
    write_json(out / f"verify_{args.claim}.json", rep, config_hash=cfg.hash)
    print(f"{args.claim}: {rep['verdict']}")
    if base is not None and base.get("measured") != to_jsonable(rep["measured"]):
        print(f"{args.claim}: measured values differ from baseline {args.baseline}", file=sys.stderr)
        return EXIT_FAIL
    return EXIT_PASS if rep["verdict"] == "pass" else EXIT_FAIL


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="stochwave", description="Stochastic travelling-wave laboratory")
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=str, default=None, help="YAML config (defaults if omitted)")
    common.add_argument("--seed", type=int, default=None, help="master seed (overrides sweep.master_seed)")
    common.add_argument("--out", type=str, default=None, help="output directory")
    common.add_argument("--paths", type=int, default=None, help="number of Monte Carlo paths")
    common.add_argument("--threads", type=int, default=1, help="worker threads for path chunks")
    common.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)
    sub.add_parser("profile", parents=[common], help="wave profile, decay rates, kernel residuals, gap")
    sub.add_parser("simulate", parents=[common], help="one path of all coupled processes")
    sub.add_parser("sweep", parents=[common], help="seed-coupled epsilon sweep of the residuals")
    v = sub.add_parser("verify", parents=[common], help="run one acceptance claim")
    v.add_argument("--claim", required=True, help=", ".join(CLAIMS))
    v.add_argument("--baseline", type=str, default=None,
                   help="earlier verify JSON; its config hash must match and its measured values must agree")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    handler = {"profile": cmd_profile, "simulate": cmd_simulate, "sweep": cmd_sweep,
               "verify": cmd_verify}[args.command]
    try:
        return handler(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except FloatingPointError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
