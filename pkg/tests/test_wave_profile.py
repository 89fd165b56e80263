import numpy as np
import pytest
from scipy.integrate import quad

from stochwave.grid import SpatialGrid
from stochwave.reaction import nagumo
from stochwave.wave_profile import (
    DomainTooSmallError, WindowError, decay_rates, level_crossing,
    nagumo_profile, sampled_copy, shift_profile, solve_profile_bvp,
)


def test_grid_layout():
    g = SpatialGrid(40.0, 1601)
    assert g.x[0] == -40.0 and g.x[-1] == 40.0 and g.x[g.mid] == 0.0
    assert np.allclose(np.diff(g.x), g.dx, rtol=0, atol=1e-12)
    with pytest.raises(ValueError):
        SpatialGrid(40.0, 1600)
    with pytest.raises(ValueError):
        SpatialGrid(40.0, 1)


def test_closed_form_values(profile):
    assert profile.c == pytest.approx(0.5)
    mid = profile.grid.mid
    assert profile.vhat[mid] == pytest.approx(0.5)
    assert profile.vhat_x[mid] == pytest.approx(0.25)


def test_boundary_values_and_monotone(profile):
    assert abs(profile.vhat[0]) <= 1e-6
    assert abs(profile.vhat[-1] - 1) <= 1e-6
    assert np.all(np.diff(profile.vhat) >= 0)
    assert np.all(profile.vhat_x > 0)


def test_psi_normalisation(profile):
    w = profile.grid.weights
    assert np.dot(w, profile.Psi * profile.vhat_x) == pytest.approx(1.0, abs=1e-8)
    assert np.all(profile.Psi > 0)


def test_z_matches_quadrature_oracle(profile):
    k = 1.0
    integrand = lambda x: np.exp(-0.5 * x) * (k * np.exp(-k * abs(x)) / (1 + np.exp(-k * abs(x))) ** 2) ** 2
    val, _ = quad(integrand, -40, 40, points=[0.0], limit=200, epsabs=1e-13)
    assert profile.Z == pytest.approx(1.0 / val, rel=1e-5)


def test_rho_monotone_and_growth_bound(profile):
    assert np.all(np.diff(profile.rho) < 0)
    M = profile.c / profile.nu
    x = profile.grid.x[::40]
    for xi in (-3.0, -0.5, 0.7, 4.0):
        assert np.all(profile.rho_at(x - xi) <= np.exp(M * abs(xi)) * profile.rho_at(x) * (1 + 1e-12))


def test_c_zero_case(profile_c0):
    p = profile_c0
    assert p.c == 0.0
    assert np.ptp(p.rho) == 0.0
    w = p.grid.weights
    assert np.allclose(p.Psi, p.vhat_x / np.dot(w, p.vhat_x**2), rtol=1e-10)


def test_decay_rate_values(profile):
    gm, gp = decay_rates(profile, nagumo(0.25))
    assert gm == pytest.approx(-0.5)
    assert gp == pytest.approx(1.5)
    assert gm < 0 < gp


def test_decay_rate_matches_tail_quotient(profile):
    p = profile
    q = p.b / p.nu * p.reaction.f(p.vhat[0]) / p.vhat_x[0]
    assert q == pytest.approx(p.gamma_minus, abs=1e-3)


def test_shift_identities(profile):
    assert np.array_equal(shift_profile(profile, 0.0, "vhat"), profile.vhat)
    k = 1.0
    v = shift_profile(profile, 1.0, "vhat")
    assert v[profile.grid.mid] == pytest.approx(1.0 / (1.0 + np.exp(-k)))


def test_shift_window(profile):
    with pytest.raises(WindowError):
        shift_profile(profile, 20.5, "vhat")


def test_interpolated_shift_matches_closed_form():
    g = SpatialGrid(40.0, 1601)
    p = nagumo_profile(1.0, 2.0, 0.25, g)
    s = sampled_copy(p)
    for which in ("vhat", "vhat_x", "vhat_xx", "Psi"):
        diff = np.abs(shift_profile(s, 0.37, which) - shift_profile(p, 0.37, which)).max()
        assert diff <= 1e-6, which


def test_vector_shift_shape(profile):
    out = shift_profile(profile, np.array([0.0, 0.5, -1.0]), "Psi")
    assert out.shape == (3, profile.grid.n)
    assert np.allclose(out[0], profile.Psi)


def _aligned_error(n):
    g = SpatialGrid(40.0, n)
    rf = nagumo(0.25)
    bvp = solve_profile_bvp(rf, 1.0, 2.0, g)
    cf = nagumo_profile(1.0, 2.0, 0.25, g)
    x0 = level_crossing(cf.vhat, g.x, 0.25)
    ref = shift_profile(cf, x0, "vhat")
    return bvp, float(np.abs(bvp.vhat - ref).max())


def test_bvp_matches_closed_form():
    bvp, err = _aligned_error(1601)
    assert bvp.c == pytest.approx(0.5, abs=1e-4)
    assert err <= 1e-4
    w = bvp.grid.weights
    assert np.dot(w, bvp.Psi * bvp.vhat_x) == pytest.approx(1.0, abs=1e-8)


def test_bvp_second_order_convergence():
    _, e1 = _aligned_error(1601)
    _, e2 = _aligned_error(3201)
    assert 3.2 <= e1 / e2 <= 4.8


def test_bvp_symmetric_case_has_zero_speed():
    g = SpatialGrid(40.0, 801)
    bvp = solve_profile_bvp(nagumo(0.5), 1.0, 2.0, g)
    assert abs(bvp.c) <= 1e-6


def test_psi_h1_norm_stable_under_domain_doubling():
    def h1(L, n):
        p = nagumo_profile(1.0, 2.0, 0.25, SpatialGrid(L, n))
        w = p.grid.weights
        return np.dot(w, p.Psi**2) + np.dot(w, np.gradient(p.Psi, p.grid.dx) ** 2)
    assert h1(40.0, 1601) == pytest.approx(h1(80.0, 3201), rel=0.01)


def test_domain_too_small():
    with pytest.raises(DomainTooSmallError):
        nagumo_profile(1.0, 2.0, 0.25, SpatialGrid(4.0, 161))


def test_rejects_bad_coefficients(grid):
    with pytest.raises(ValueError):
        nagumo_profile(0.0, 2.0, 0.25, grid)
    with pytest.raises(ValueError):
        nagumo_profile(1.0, -1.0, 0.25, grid)


def test_csv_export(tmp_path, profile):
    path = tmp_path / "p.csv"
    profile.to_csv(path)
    rows = path.read_text().splitlines()
    assert rows[0] == "x,vhat,vhat_x,Psi,rho"
    assert len(rows) == profile.grid.n + 1
