"""Acceptance criteria 1-11 on the default configuration.

Each test prints one ``[criterion N] PASS|FAIL ...`` line with the measured
values next to their thresholds.  The scaling sweep is shared by criteria 4
and 6.
"""

import json
import time

import pytest

from stochwave.cli import main
from stochwave.config import ExperimentConfig
from stochwave.verify import run_claim

pytestmark = pytest.mark.slow


@pytest.fixture(scope="module")
def cfg():
    return ExperimentConfig.default()


def _report(capsys, n, ok, detail, seconds):
    with capsys.disabled():
        print(f"\n[criterion {n:>2}] {'PASS' if ok else 'FAIL'} {detail} ({seconds:.1f}s)")


def _timed(cfg, claim):
    t0 = time.perf_counter()
    rep = run_claim(cfg, claim)
    return rep, time.perf_counter() - t0


def test_c01_wave_speed(cfg, capsys):
    rep, sec = _timed(cfg, "speed")
    s = rep["measured"]["speed"]
    ok = 0.495 <= s <= 0.505 and sec < 10
    _report(capsys, 1, ok, f"speed={s:.5f} in [0.495, 0.505]", sec)
    assert ok


def test_c02_kernel_residuals(cfg, capsys):
    rep, sec = _timed(cfg, "kernel")
    m = rep["measured"]
    ok = all(3.2 <= m[k] <= 4.8 for k in ("ratio_vx", "ratio_psi")) and sec < 5
    _report(capsys, 2, ok, f"ratios vhat_x={m['ratio_vx']:.3f} Psi={m['ratio_psi']:.3f} in [3.2, 4.8]", sec)
    assert ok


def test_c03_contraction(cfg, capsys):
    rep, sec = _timed(cfg, "contraction")
    m = rep["measured"]
    ok = m["kappa_hat"] > 0 and m["max_ratio"] <= 1.05 and m["gap_violations"] == 0 and sec < 30
    _report(capsys, 3, ok, f"kappa_hat={m['kappa_hat']:.4f}, max ratio={m['max_ratio']:.4f} <= 1.05, "
                           f"gap violations={m['gap_violations']}", sec)
    assert ok


@pytest.fixture(scope="module")
def scaling(cfg):
    return _timed(cfg, "scaling")


def test_c04_residual_scaling(scaling, capsys):
    rep, sec = scaling
    m = rep["measured"]
    sf = m["stop_fractions"]
    ok = (m["median_slope"] >= 1.6 and m["stop_fraction_monotone"] and sf[-1] <= 0.05 and sec < 15 * 60)
    _report(capsys, 4, ok, f"median slope={m['median_slope']:.3f} >= 1.6 (IQR {m['iqr'][0]:.3f}..{m['iqr'][1]:.3f}), "
                           f"stop fractions={sf}", sec)
    assert ok


def test_c05_relaxation(cfg, capsys):
    rep, sec = _timed(cfg, "relaxation")
    m = rep["measured"]
    ok = m["strictly_decreasing"] and m["last_relative"] <= 0.05 and sec < 120
    gaps = ", ".join(f"{g:.4f}" for g in m["sup_gap"])
    _report(capsys, 5, ok, f"sup gaps m=1..1000: {gaps}; last/sup|C0|={m['last_relative']:.4f} <= 0.05", sec)
    assert ok


def test_c06_limit_decomposition(scaling, capsys):
    rep, sec = scaling
    m = rep["measured"]
    ok = m["limit_slope_gap"] <= 0.1
    _report(capsys, 6, ok, f"m=1000 slopes finite={m['m_limit_finite_slope']:.3f} "
                           f"immediate={m['m_limit_immediate_slope']:.3f}, gap={m['limit_slope_gap']:.3f} <= 0.1", 0.0)
    assert ok


def test_c07_variance_law(cfg, capsys):
    rep, sec = _timed(cfg, "variance")
    m = rep["measured"]
    ok = rep["verdict"] == "pass" and m["z"] <= 3 and sec < 300
    _report(capsys, 7, ok, f"slope={m['slope']:.5f} +- {m['se']:.5f} vs exact {m['exact_slope']:.5f} "
                           f"(static {m['static_rate']:.5f}), z={m['z']:.2f} <= 3", sec)
    assert ok


def test_c08_second_moment(cfg, capsys):
    rep, sec = _timed(cfg, "moment")
    m = rep["measured"]
    ok = rep["verdict"] == "pass" and m["min_margin"] >= 0 and sec < 600
    _report(capsys, 8, ok, f"min margin={m['min_margin']:.4f} >= 0, plateau={m['plateau']:.4f}, "
                           f"final mean={m['final_mean']:.4f}", sec)
    assert ok


def test_c09_orthogonality(cfg, capsys):
    rep, sec = _timed(cfg, "ortho")
    m = rep["measured"]
    ok = m["max_relative_pairing"] <= 1e-8 and 1.6 <= m["halving_ratio"] <= 2.4 and sec < 60
    _report(capsys, 9, ok, f"max pairing={m['max_relative_pairing']:.2e} <= 1e-8, "
                           f"drift ratio on dt halving={m['halving_ratio']:.3f}", sec)
    assert ok


def test_c10_minimisation(cfg, capsys):
    rep, sec = _timed(cfg, "minimise")
    m = rep["measured"]
    ok = m["first_monotone"] and m["rel_error_smallest_eps"] <= 0.1 and sec < 120
    firsts = ", ".join(f"{v:.2e}" for v in m["median_abs_first_over_eps2"])
    _report(capsys, 10, ok, f"|first|/eps^2: {firsts}; second/eps^2 rel err={m['rel_error_smallest_eps']:.4f} "
                            f"<= 0.1", sec)
    assert ok


@pytest.mark.parametrize("claim", ["speed", "variance"])
def test_c11_determinism(claim, tmp_path, capsys):
    t0 = time.perf_counter()
    codes = [main(["verify", "--claim", claim, "--seed", "99", "--out", str(tmp_path / d)]) for d in ("a", "b")]
    a = (tmp_path / "a" / f"verify_{claim}.json").read_bytes()
    b = (tmp_path / "b" / f"verify_{claim}.json").read_bytes()
    ok = a == b and codes[0] == codes[1] and json.loads(a)["master_seed"] == 99
    _report(capsys, 11, ok, f"verify --claim {claim} rerun byte-identical={a == b}", time.perf_counter() - t0)
    assert ok
