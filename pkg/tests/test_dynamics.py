import numpy as np
import pytest

from stochwave.dynamics import BlowUpError, ModelParams, output_steps, run_deterministic_front, run_paths
from stochwave.noise import PathSeed
from stochwave.wave_profile import WindowError


def _params(**kw):
    base = dict(nu=1.0, b=2.0, epsilon=0.01, m=10.0, T=0.2, dt=1e-3)
    base.update(kw)
    return ModelParams(**base)


@pytest.mark.parametrize("field,value", [("nu", 0.0), ("dt", -1e-3), ("m", 0.0), ("epsilon", -0.1), ("q_exp", 1.5)])
def test_param_validation(field, value):
    with pytest.raises(ValueError):
        _params(**{field: value})


def test_output_steps_cover_both_ends():
    s = output_steps(1000, 7)
    assert s[0] == 0 and s[-1] == 1000
    assert np.all(np.diff(s) > 0)


def test_deterministic_front_speed(profile):
    t, xs = run_deterministic_front(profile, T=2.0, dt=1e-3, n_out=20)
    speed = -np.polyfit(t, xs, 1)[0]
    assert speed == pytest.approx(0.5, abs=2e-3)


def test_zero_noise_stays_on_wave(profile, noise):
    tr = run_paths(_params(epsilon=0.0), profile, noise, [PathSeed(1, 0)], n_out=4)
    assert np.all(tr.u == 0.0)
    assert np.all(tr.Cm == 0.0)
    # the phase limits are driven by the noise alone, independent of epsilon
    assert np.any(tr.C0[0, 1:] != 0.0)


def test_reruns_are_bitwise_identical(profile, noise):
    seeds = [PathSeed(5, i) for i in range(2)]
    a = run_paths(_params(), profile, noise, seeds, n_out=5)
    b = run_paths(_params(), profile, noise, seeds, n_out=5)
    for name in ("u", "u0m", "u0", "Cm", "C0m", "C0", "c0m"):
        assert np.array_equal(getattr(a, name), getattr(b, name)), name


def test_path_independent_of_batch(profile, noise):
    alone = run_paths(_params(), profile, noise, [PathSeed(5, 1)], n_out=5)
    batch = run_paths(_params(), profile, noise, [PathSeed(5, 0), PathSeed(5, 1)], n_out=5)
    # equal up to summation order inside batched matrix products
    assert np.allclose(alone.u[0], batch.u[1], rtol=1e-12, atol=1e-15)
    assert np.allclose(alone.C0m[0], batch.C0m[1], rtol=1e-12, atol=1e-15)


def test_scalar_mode_matches_field_mode(profile, noise):
    seeds = [PathSeed(8, i) for i in range(3)]
    full = run_paths(_params(), profile, noise, seeds, n_out=5)
    scal = run_paths(_params(), profile, noise, seeds, n_out=5, fields=False)
    assert np.allclose(full.C0m, scal.C0m, rtol=0, atol=1e-14)
    assert np.allclose(full.C0, scal.C0, rtol=0, atol=1e-14)
    assert scal.u is None


@pytest.mark.parametrize("m", [1.0, 50.0])
def test_speed_phase_identity(profile, noise, m):
    eta = 0.3 * profile.vhat_x
    tr = run_paths(_params(m=m, eta=eta), profile, noise, [PathSeed(2, i) for i in range(3)],
                   n_out=10, fields=False)
    # C0 is recorded before its initial jump, so compare from the first step on
    lhs = tr.C0m[:, 1:] - tr.C0[:, 1:]
    assert np.allclose(lhs, -tr.c0m[:, 1:] / m, rtol=0, atol=1e-12)


def test_initial_speed_from_data(profile, noise):
    eta = 0.5 * profile.vhat_x
    tr = run_paths(_params(m=20.0, eta=eta), profile, noise, [PathSeed(2, 0)], n_out=2, fields=False)
    assert tr.c0m[0, 0] == pytest.approx(20.0 * 0.5 * np.dot(profile.grid.weights, profile.vhat_x * profile.Psi))


def test_linearised_field_orthogonal_after_start(profile, noise):
    eta = np.exp(-0.5 * (profile.grid.x - 2.0) ** 2) * 0.3
    eta[0] = eta[-1] = 0
    tr = run_paths(_params(eta=eta), profile, noise, [PathSeed(4, 0)], n_out=5)
    w = profile.grid.weights
    from stochwave.dynamics import Frame
    for j, t in enumerate(tr.times[1:], start=1):
        psi = Frame.psi_only(profile, t).Psi
        assert abs(np.dot(w, tr.u0[0, j] * psi)) < 1e-12
    # without maintenance the drift is visible
    free = run_paths(ModelParams(**{**_params(eta=eta).__dict__, "project_u0": False}), profile, noise,
                     [PathSeed(4, 0)], n_out=5)
    assert abs(np.dot(w, free.u0[0, -1] * Frame.psi_only(profile, free.times[-1]).Psi)) > 1e-8


@pytest.mark.filterwarnings("ignore::RuntimeWarning")
def test_blowup_raises_with_step(profile, noise):
    # a huge bump where Psi is negligible, so the phase stays inside the window
    eta = 200.0 * np.exp(-0.5 * (profile.grid.x - 15.0) ** 2)
    eta[0] = eta[-1] = 0
    with pytest.raises(BlowUpError) as exc:
        run_paths(_params(epsilon=1.0, dt=0.05, T=2.0, eta=eta), profile, noise, [PathSeed(1, 0)],
                  n_out=2, phase=False)
    assert exc.value.step >= 1


def test_window_exit_detected(profile, noise):
    with pytest.raises(WindowError):
        run_paths(_params(T=50.0, dt=0.1), profile, noise, [PathSeed(1, 0)], n_out=2)


def test_refine_couples_brownian_paths(profile, noise):
    seeds = [PathSeed(3, 0)]
    fine = run_paths(_params(dt=5e-4), profile, noise, seeds, n_out=4, fields=False)
    coarse = run_paths(_params(dt=1e-3), profile, noise, seeds, n_out=4, fields=False, refine=2)
    # same Brownian path, so the immediate phase agrees to discretisation error
    assert np.abs(fine.C0[0, -1] - coarse.C0[0, -1]) < 5e-3
