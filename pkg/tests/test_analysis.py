import numpy as np
import pytest

from stochwave import analysis as A
from stochwave.dynamics import ModelParams, run_paths
from stochwave.noise import PathSeed
from stochwave.wave_profile import shift_profile


@pytest.fixture(scope="module")
def gap(profile):
    return A.spectral_gap(profile)


def test_kernel_residuals_small(profile):
    r1, r2 = A.kernel_residuals(profile)
    assert r1 < 1e-3 and r2 < 1e-3


def test_kernel_residuals_second_order():
    kc = A.kernel_convergence(1.0, 2.0, 0.25)
    assert 3.5 <= kc["ratio_vx"] <= 4.5
    assert 3.5 <= kc["ratio_psi"] <= 4.5


def test_symmetriser_makes_operator_symmetric(profile):
    lo, di, up = A.frozen_operator(profile)
    rh = A.symmetriser(profile)[1:-1]
    # rho_h[i] A[i, i+1] == rho_h[i+1] A[i+1, i]
    assert np.allclose(rh[:-1] * up, rh[1:] * lo, rtol=1e-10)


def test_symmetriser_close_to_rho(profile):
    rh = A.symmetriser(profile)
    mid = profile.grid.mid
    sl = slice(mid - 200, mid + 200)
    # per-node error is O(dx^3), so it accumulates linearly away from x = 0
    assert np.allclose(rh[sl], profile.rho[sl], rtol=1e-3)
    assert rh[mid] == profile.rho[mid]


def test_gap_positive_and_certified(profile, gap):
    assert gap.kappa_hat > 0.5
    assert gap.C_star_hat >= gap.kappa_hat
    assert abs(gap.kernel_rayleigh) < 1e-3
    assert A.certify_gap(profile, gap) == 0


def test_gap_bounded_by_essential_spectrum(profile, gap):
    # the continuous spectrum starts at -min(b|f'(0)|, b|f'(1)|) - c^2/(4 nu)
    ess = min(0.5, 1.5) + 0.25 ** 2 / 1.0 * 1.0
    assert gap.kappa_hat <= ess + 1e-2


def test_contraction_on_leading_mode(profile, gap):
    res = A.contraction_check(profile, None, gap.kappa_hat, gap.second_vector[None, :], T=5.0, dt=0.01)
    assert res["passed"]
    assert res["fitted_rates"][0] == pytest.approx(gap.kappa_hat, rel=0.05)


def test_exact_variance_monotone(profile, noise):
    t = np.linspace(0, 1, 11)
    v = A.exact_phase_variance(profile, noise, t, 1e-2)
    assert v[0] == 0.0
    assert np.all(np.diff(v) > 0)
    assert v[1] / 0.1 == pytest.approx(float(noise.quad_form(profile.Psi)), rel=0.02)


def test_variance_law_power_flag(profile, noise):
    rng = np.random.default_rng(0)
    t = np.linspace(0, 1, 11)
    rate = float(noise.quad_form(profile.Psi))
    C0 = np.cumsum(np.concatenate([np.zeros((20, 1)), rng.normal(0, np.sqrt(0.1 * rate), (20, 10))], axis=1), axis=1)
    rep = A.variance_law(C0, t, profile, noise, 0.1)
    assert rep["verdict"] == "insufficient_power"


def test_variance_law_on_brownian_sample(profile, noise):
    rng = np.random.default_rng(1)
    dt = 0.1
    t = np.linspace(0, 1, 11)
    exact = A.exact_phase_variance(profile, noise, t, dt)
    inc = rng.standard_normal((800, 10)) * np.sqrt(np.diff(exact))
    C0 = np.concatenate([np.zeros((800, 1)), np.cumsum(inc, axis=1)], axis=1)
    rep = A.variance_law(C0, t, profile, noise, dt)
    assert rep["verdict"] == "pass"
    assert rep["z"] < 3


def test_moment_bound_formula():
    t = np.array([0.0, 1.0])
    ns = np.array([[0.1, 0.05], [0.1, 0.07]])
    rep = A.second_moment_bound(t, ns, 0.5, 0.2, 0.1)
    assert rep["bound"][0] == pytest.approx(0.4)
    assert rep["bound"][1] == pytest.approx(2 * np.exp(-1) * 0.2 + 0.2 * (1 - np.exp(-1)))
    assert rep["passed"]
    assert rep["plateau"] == pytest.approx(0.2)


def test_moment_bound_flags_violation():
    rep = A.second_moment_bound(np.array([0.0, 1.0]), np.full((4, 2), 5.0), 0.5, 0.2, 0.1)
    assert not rep["passed"] and rep["first_violation"] == 0.0


def test_fit_slopes_recovers_power_law():
    eps = np.array([0.02, 0.01, 0.005, 0.0025])
    norms = np.stack([3.0 * eps**2, 0.5 * eps**1.5], axis=1)
    stopped = np.zeros_like(norms, bool)
    s = A.fit_slopes(eps, norms, stopped)
    assert s == pytest.approx([2.0, 1.5])
    stopped[:2, 0] = True
    assert np.isnan(A.fit_slopes(eps, norms, stopped)[0])


def test_residual_zero_on_exact_decomposition(profile):
    eps, C, t = 0.01, 0.7, 1.0
    fl = np.sin(profile.grid.x / 3.0)
    u = shift_profile(profile, 0.5 * t + eps * C, "vhat") - shift_profile(profile, 0.5 * t, "vhat") + eps * fl
    r = A.residual_field(u, C, fl, t, eps, profile)
    assert np.abs(r).max() < 1e-15


def test_residual_of_linearised_shift_is_quadratic(profile):
    t, C = 1.0, 0.7
    out = []
    for eps in (0.02, 0.01):
        u = shift_profile(profile, 0.5 * t + eps * C, "vhat") - shift_profile(profile, 0.5 * t, "vhat")
        out.append(np.abs(A.residual_field(u, 0.0, np.zeros_like(u), t, eps, profile)).max())
    # here the residual is the full translation, first order in eps
    assert out[0] / out[1] == pytest.approx(2.0, rel=0.01)


def test_residual_rejects_zero_eps(profile):
    with pytest.raises(ValueError):
        A.residual_field(np.zeros(profile.grid.n), 0.0, np.zeros(profile.grid.n), 0.0, 0.0, profile)


def test_minimiser_at_exact_translate(profile):
    eps, C0, t = 0.01, 0.4, 2.0
    v = shift_profile(profile, profile.c * t + eps * C0, "vhat")
    first, second, ref = A.minimisation_check(v, C0, t, eps, profile)
    assert abs(first) < 1e-6
    assert second == pytest.approx(ref, rel=5e-3)


def test_orthogonality_check_excludes_start(profile, noise):
    eta = 0.2 * np.exp(-0.5 * (profile.grid.x - 2) ** 2)
    eta[0] = eta[-1] = 0
    p = ModelParams(nu=1.0, b=2.0, epsilon=0.01, m=10.0, T=0.1, dt=1e-3, eta=eta)
    tr = run_paths(p, profile, noise, [PathSeed(1, 0)], n_out=4)
    assert A.orthogonality_check(tr, profile) < 1e-12


def test_relaxation_gap_window():
    class T:
        times = np.array([0.0, 0.5, 1.0])
        C0m = np.array([[0.0, 0.1, 0.2]])
        C0 = np.array([[1.0, 0.15, 0.21]])
    gap, sup = A.relaxation_gap(T, 0.5)
    assert gap[0] == pytest.approx(0.05)
    assert sup[0] == pytest.approx(1.0)
