"""Experiment configuration: YAML file -> validated, hashable settings.

Layout (every section is a mapping)::

    model:   {nu, b, a, reaction}          reaction: "nagumo" or {polynomial: [c0, c1, ...]}
    grid:    {L, n}
    noise:   {K, sigma, r, basis}
    run:     {epsilon, m, T, dt, q_exp, eta, project_u0}
    sweep:   {epsilons, m_values, n_paths, master_seed}
    outputs: {cadence, directory, formats}
    claims:  {<claim>: {overrides}}

``eta`` is ``{kind: zero}``, ``{kind: vhat_x, amplitude}`` or
``{kind: bump, amplitude, center, width}``.
"""

from __future__ import annotations

import copy
import hashlib
import json
import math
from dataclasses import dataclass
from functools import cached_property
from typing import Any, Optional

import numpy as np
import yaml

from .dynamics import ModelParams
from .grid import SpatialGrid
from .noise import NoiseModel, PathSeed, build_noise
from .reaction import ReactionFunction, from_polynomial, nagumo
from .wave_profile import WaveProfile, nagumo_profile, solve_profile_bvp

__all__ = ["ConfigError", "ExperimentConfig", "DEFAULTS", "load_config", "CLAIMS"]

CLAIMS = ("speed", "kernel", "contraction", "scaling", "variance", "moment", "ortho",
          "minimise", "relaxation")

DEFAULTS: dict = {
    "model": {"nu": 1.0, "b": 2.0, "a": 0.25, "reaction": "nagumo"},
    "grid": {"L": 40.0, "n": 1601},
    "noise": {"K": 64, "sigma": 0.25, "r": 2.0, "basis": "1+rho"},
    "run": {"epsilon": 0.01, "m": 100.0, "T": 5.0, "dt": 1e-3, "q_exp": 0.1,
            "eta": {"kind": "zero"}, "project_u0": True},
    "sweep": {"epsilons": [0.02, 0.01, 0.005, 0.0025], "m_values": [1.0, 10.0, 100.0, 1000.0],
              "n_paths": 32, "master_seed": 2024},
    "outputs": {"cadence": 100, "directory": "out", "formats": ["csv", "json"]},
    "claims": {},
}

_REQUIRED = {
    "model": ("nu", "b", "a"),
    "grid": ("L", "n"),
    "noise": ("K", "sigma"),
    "run": ("epsilon", "m", "T", "dt"),
}


class ConfigError(ValueError):
    def __init__(self, field: str, msg: str):
        super().__init__(f"{field}: {msg}")
        self.field = field


def _merge(base: dict, over: dict) -> dict:
    out = copy.deepcopy(base)
    for k, v in over.items():
        if isinstance(v, dict) and isinstance(out.get(k), dict) and k != "claims":
            out[k] = _merge(out[k], v)
        else:
            out[k] = copy.deepcopy(v)
    return out


def _num(d: dict, section: str, key: str, *, positive=False, nonneg=False, integer=False):
    path = f"{section}.{key}"
    try:
        v = d[section][key]
    except KeyError:
        raise ConfigError(path, "missing") from None
    if isinstance(v, bool) or not isinstance(v, (int, float)):
        raise ConfigError(path, f"expected a number, got {v!r}")
    if integer and int(v) != v:
        raise ConfigError(path, f"expected an integer, got {v!r}")
    if not math.isfinite(v):
        raise ConfigError(path, "must be finite")
    if positive and not v > 0:
        raise ConfigError(path, f"must be positive, got {v}")
    if nonneg and v < 0:
        raise ConfigError(path, f"must be non-negative, got {v}")
    return int(v) if integer else float(v)


@dataclass(frozen=True)
class ExperimentConfig:
    """Validated configuration.  ``data`` is the full normalised mapping."""

    data: dict

    @classmethod
    def from_dict(cls, raw: Optional[dict], *, fill_defaults: bool = True) -> "ExperimentConfig":
        raw = raw or {}
        if not isinstance(raw, dict):
            raise ConfigError("<root>", "config must be a mapping")
        for sec in raw:
            if sec not in DEFAULTS:
                raise ConfigError(sec, "unknown section")
        # required sections must be present in the file itself
        for sec, keys in _REQUIRED.items():
            if sec not in raw:
                raise ConfigError(f"{sec}.{keys[0]}", "missing (section absent)")
            if not isinstance(raw[sec], dict):
                raise ConfigError(sec, "must be a mapping")
            for k in keys:
                if k not in raw[sec]:
                    raise ConfigError(f"{sec}.{k}", "missing")
        data = _merge(DEFAULTS, raw) if fill_defaults else copy.deepcopy(raw)
        cfg = cls(data)
        cfg.validate()
        return cfg

    @classmethod
    def default(cls, **overrides) -> "ExperimentConfig":
        return cls.from_dict(_merge(DEFAULTS, overrides))

    def with_overrides(self, overrides: dict) -> "ExperimentConfig":
        return ExperimentConfig.from_dict(_merge(self.data, overrides))

    # ------------------------------------------------------------ validation
    def validate(self) -> None:
        d = self.data
        _num(d, "model", "nu", positive=True)
        _num(d, "model", "b", positive=True)
        a = _num(d, "model", "a")
        if not 0 < a < 1:
            raise ConfigError("model.a", f"must lie in (0, 1), got {a}")
        rx = d["model"].get("reaction", "nagumo")
        if rx != "nagumo" and not (isinstance(rx, dict) and "polynomial" in rx):
            raise ConfigError("model.reaction", f"expected 'nagumo' or {{polynomial: [...]}}, got {rx!r}")
        L = _num(d, "grid", "L", positive=True)
        n = _num(d, "grid", "n", integer=True)
        if n < 3 or n % 2 == 0:
            raise ConfigError("grid.n", f"must be odd and >= 3, got {n}")
        K = _num(d, "noise", "K", integer=True)
        if not 1 <= K <= n - 2:
            raise ConfigError("noise.K", f"must lie in [1, n-2={n - 2}], got {K}")
        _num(d, "noise", "sigma", nonneg=True)
        r = _num(d, "noise", "r")
        if r < 2:
            raise ConfigError("noise.r", f"must be >= 2 for an H^1 Hilbert-Schmidt square root, got {r}")
        if d["noise"].get("basis", "dx") not in ("dx", "1+rho"):
            raise ConfigError("noise.basis", "must be 'dx' or '1+rho'")
        _num(d, "run", "epsilon", nonneg=True)
        _num(d, "run", "m", positive=True)
        T = _num(d, "run", "T", positive=True)
        _num(d, "run", "dt", positive=True)
        q = _num(d, "run", "q_exp")
        if not 0 <= q <= 1:
            raise ConfigError("run.q_exp", f"must lie in [0, 1], got {q}")
        eta = d["run"].get("eta", {"kind": "zero"})
        if not isinstance(eta, dict) or eta.get("kind") not in ("zero", "vhat_x", "bump"):
            raise ConfigError("run.eta", f"kind must be zero, vhat_x or bump, got {eta!r}")
        sw = d["sweep"]
        eps = sw.get("epsilons", [])
        if not all(isinstance(e, (int, float)) and e > 0 for e in eps):
            raise ConfigError("sweep.epsilons", "must be positive numbers")
        _num(d, "sweep", "n_paths", integer=True, positive=True)
        _num(d, "sweep", "master_seed", integer=True, nonneg=True)
        _num(d, "outputs", "cadence", integer=True, positive=True)
        for name in d.get("claims", {}):
            if name not in CLAIMS:
                raise ConfigError(f"claims.{name}", f"unknown claim; expected one of {', '.join(CLAIMS)}")
        c = self.wave_speed
        if L < abs(c) * T + 20.0:
            raise ConfigError("grid.L", f"L={L:g} < |c| T + 20 = {abs(c) * T + 20:g}")

    # -------------------------------------------------------------- builders
    @property
    def hash(self) -> str:
        blob = json.dumps(self.data, sort_keys=True, separators=(",", ":"), default=float)
        return hashlib.sha256(blob.encode()).hexdigest()[:16]

    def section(self, name: str) -> dict:
        return self.data[name]

    def claim(self, name: str) -> dict:
        return dict(self.data.get("claims", {}).get(name, {}))

    @cached_property
    def reaction(self) -> ReactionFunction:
        m = self.data["model"]
        rx = m.get("reaction", "nagumo")
        if rx == "nagumo":
            return nagumo(float(m["a"]))
        return from_polynomial(rx["polynomial"], float(m["a"]))

    @property
    def is_nagumo(self) -> bool:
        return self.data["model"].get("reaction", "nagumo") == "nagumo"

    @property
    def wave_speed(self) -> float:
        m = self.data["model"]
        if self.is_nagumo:
            return math.sqrt(2 * m["nu"] * m["b"]) * (0.5 - m["a"])
        return self.profile().c

    def grid(self, n: Optional[int] = None) -> SpatialGrid:
        g = self.data["grid"]
        return SpatialGrid(float(g["L"]), int(n if n is not None else g["n"]))

    def profile(self, grid: Optional[SpatialGrid] = None) -> WaveProfile:
        grid = grid or self.grid()
        cache = self.__dict__.setdefault("_profiles", {})
        if grid not in cache:
            m = self.data["model"]
            if self.is_nagumo:
                cache[grid] = nagumo_profile(m["nu"], m["b"], m["a"], grid)
            else:
                cache[grid] = solve_profile_bvp(self.reaction, m["nu"], m["b"], grid)
        return cache[grid]

    def noise(self, profile: Optional[WaveProfile] = None, **over) -> NoiseModel:
        nz = {**self.data["noise"], **over}
        profile = profile or self.profile()
        return build_noise(profile.grid, int(nz["K"]), float(nz["sigma"]), float(nz.get("r", 2.0)),
                           basis=nz.get("basis", "dx"), profile=profile)

    def eta(self, profile: Optional[WaveProfile] = None) -> np.ndarray:
        profile = profile or self.profile()
        eta_spec = self.data["run"].get("eta", {"kind": "zero"})
        x = profile.grid.x
        kind = eta_spec["kind"]
        if kind == "zero":
            return np.zeros_like(x)
        A = float(eta_spec.get("amplitude", 1.0))
        if kind == "vhat_x":
            return A * profile.vhat_x
        x0, w = float(eta_spec.get("center", 0.0)), float(eta_spec.get("width", 1.0))
        out = A * np.exp(-0.5 * ((x - x0) / w) ** 2)
        out[0] = out[-1] = 0.0
        return out

    def params(self, **over) -> ModelParams:
        r = {**self.data["run"], **over}
        m = self.data["model"]
        eta = over.get("eta")
        if eta is None or isinstance(eta, dict):
            eta = self.eta() if eta is None else self.with_overrides({"run": {"eta": eta}}).eta()
        return ModelParams(nu=float(m["nu"]), b=float(m["b"]), epsilon=float(r["epsilon"]),
                           m=float(r["m"]), T=float(r["T"]), dt=float(r["dt"]),
                           q_exp=float(r.get("q_exp", 0.1)), eta=eta,
                           project_u0=bool(r.get("project_u0", True)))

    def seeds(self, n: Optional[int] = None, start: int = 0, master: Optional[int] = None) -> list:
        n = int(n if n is not None else self.data["sweep"]["n_paths"])
        ms = int(master if master is not None else self.data["sweep"]["master_seed"])
        return [PathSeed(ms, start + i) for i in range(n)]


def load_config(path=None, overrides: Optional[dict] = None) -> ExperimentConfig:
    """Read a YAML config; ``None`` gives the defaults."""
    if path is None:
        raw: Any = copy.deepcopy(DEFAULTS)
    else:
        try:
            with open(path) as fh:
                raw = yaml.safe_load(fh) or {}
        except yaml.YAMLError as exc:
            raise ConfigError("<file>", f"YAML parse error: {exc}") from None
        except OSError as exc:
            raise ConfigError("<file>", str(exc)) from None
    if overrides:
        raw = _merge(raw, overrides)
    return ExperimentConfig.from_dict(raw)
