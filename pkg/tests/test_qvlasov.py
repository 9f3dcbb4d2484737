import cmath
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from largen.numerics import ToleranceSpec
from largen.qvlasov import (
    BackgroundField,
    BackreactionSystem,
    InvalidModeState,
    ModeEnsemble,
    ModeState,
    MomentumGrid,
    QVEHistory,
    adiabatic_number,
    backreaction_step,
    bogoliubov_coefficients,
    bogoliubov_of_mode,
    density_matrix_diag,
    entropy_rate,
    evolve_mode,
    evolve_number_correlation,
    integrate_modes,
    integrate_qve_nonlocal,
    kinetic_record,
    mean_current,
    mode_entropy,
    number_correlation_trajectory,
    omega_k,
    pair_correlation,
    qve_nonlocal_rate,
    system_energy,
    vacuum_mode,
)

TIGHT = ToleranceSpec(1e-12, 1e-12)


def sudden_beta2(w1, w2):
    return (w2 - w1) ** 2 / (4 * w1 * w2)


def sech2_pulse(w0=1.0, a=0.5, tau=1.0, t0=-12.0):
    omega = lambda t: (w0 * (1 + a / math.cosh(t / tau) ** 2), -2 * w0 * a / tau * math.tanh(t / tau) / math.cosh(t / tau) ** 2)
    theta = lambda t: w0 * (t - t0) + w0 * a * tau * (math.tanh(t / tau) - math.tanh(t0 / tau))
    return omega, theta


def test_omega_examples():
    fld = BackgroundField(0.7, 0.0, e=2.0, m=1.5)
    assert omega_k(ModeState(1.4, 0.0, 1, 0), fld) == 1.5
    assert math.isclose(omega_k(ModeState(3.0, 4.0, 1, 0), BackgroundField()), math.sqrt(26))
    shifted = BackgroundField(0.7 + 0.3, 0.0, e=2.0, m=1.5)
    assert math.isclose(omega_k(ModeState(1.0 + 0.6, 0.5, 1, 0), shifted), omega_k(ModeState(1.0, 0.5, 1, 0), fld))


def test_field_and_mode_validation():
    assert BackgroundField(0.0, -0.5).E == 0.5
    with pytest.raises(ValueError):
        BackgroundField(e=0.0)
    with pytest.raises(ValueError):
        BackgroundField(m=-1.0)
    with pytest.raises(ValueError):
        ModeState(0.0, -1.0, 1, 0)


def test_static_background_creates_nothing():
    fld = BackgroundField(0.0, 0.0)
    mode = vacuum_mode(0.5, 0.3, fld)
    out = evolve_mode(mode, lambda t: 0.0, 0.0, 40.0, TIGHT)
    alpha, beta = bogoliubov_of_mode(out, fld)
    assert abs(beta) <= 1e-9 and abs(abs(alpha) - 1) <= 1e-9


def test_identity_projection():
    alpha, beta = bogoliubov_of_mode(vacuum_mode(0.2, 0.1, BackgroundField(), theta=0.4), BackgroundField())
    assert abs(alpha - 1) <= 1e-14 and abs(beta) <= 1e-14


def test_conjugate_mode_is_rejected():
    m = vacuum_mode(0.0, 0.0, BackgroundField())
    conj = ModeState(0.0, 0.0, np.conj(m.f), np.conj(m.f_dot))
    with pytest.raises(InvalidModeState, match="invalid mode state"):
        bogoliubov_of_mode(conj, BackgroundField())


@pytest.mark.parametrize("w1, w2", [(1.0, 2.0), (2.0, 0.5), (1.0, 1.3)])
def test_sudden_projection_closed_form(w1, w2):
    # mode continuous across the jump, projected on the new frequency
    f = 1 / math.sqrt(2 * w1)
    alpha, beta = bogoliubov_coefficients(f, -1j * w1 * f, w2, 0.0)
    assert abs(abs(beta) ** 2 - sudden_beta2(w1, w2)) <= 1e-14
    assert abs(abs(alpha) ** 2 - (w1 + w2) ** 2 / (4 * w1 * w2)) <= 1e-14


def test_steep_ramp_approaches_sudden_limit():
    # ramp omega from 1 to 2 with tanh(t/tau); error shrinks like tau^2
    vals = []
    for tau in (0.02, 0.01):
        w = lambda t, tau=tau: 1.5 + 0.5 * math.tanh(t / tau)
        w0 = w(-1.0)
        f0 = 1 / math.sqrt(2 * w0)
        traj = integrate_modes([f0], [-1j * w0 * f0], [0.0], lambda t: np.array([w(t) ** 2]), -1.0, 1.0, TIGHT)
        f, fd, th = traj.final
        vals.append(abs(bogoliubov_coefficients(f, fd, w(1.0), th.real)[1]) ** 2)
    assert abs(vals[1] - 0.125) < abs(vals[0] - 0.125) < 1e-3
    assert abs((4 * vals[1] - vals[0]) / 3 - 0.125) <= 1e-6


def test_time_reversal():
    tol = ToleranceSpec(1e-10, 1e-10)
    A = lambda t: -0.3 * t
    start = vacuum_mode(0.4, 0.2, BackgroundField())
    there = evolve_mode(start, A, 0.0, 8.0, tol)
    back = evolve_mode(there, A, 8.0, 0.0, tol)
    assert abs(back.f - start.f) <= 100 * tol.abs_tol
    assert abs(back.f_dot - start.f_dot) <= 100 * tol.abs_tol
    assert abs(back.theta - start.theta) <= 100 * tol.abs_tol * 10


def test_backward_trajectory_rows_in_time_order():
    traj = integrate_modes([1.0], [0.0], [0.0], lambda t: np.array([1.0]), 2.0, 0.0, TIGHT, t_eval=[1.5, 1.0, 0.5])
    np.testing.assert_allclose(traj.times, [0.0, 0.5, 1.0, 1.5])
    np.testing.assert_allclose(traj.states[:, 0].real, np.cos(traj.times - 2.0), atol=1e-10)


def test_number_and_correlation_examples():
    w1, w2 = 1.0, 2.0
    f = 1 / math.sqrt(2 * w1)
    alpha, beta = bogoliubov_coefficients(f, -1j * w1 * f, w2, 0.0)
    rec = kinetic_record(alpha, beta)
    assert abs(adiabatic_number(rec) - 0.125) <= 1e-14
    assert abs(abs(pair_correlation(rec)) - 3 / 8) <= 1e-14
    hot = kinetic_record(alpha, beta, n_init=1.0)
    assert abs(adiabatic_number(hot) - 1.375) <= 1e-14
    vac = kinetic_record(1.0, 0.0)
    assert adiabatic_number(vac) == 0 and pair_correlation(vac) == 0


@settings(max_examples=100, deadline=None)
@given(st.floats(0, 3), st.floats(-math.pi, math.pi), st.floats(-math.pi, math.pi), st.floats(0, 5))
def test_kinetic_record_invariants(r, pa, pb, n_init):
    rec = kinetic_record(math.cosh(r) * cmath.exp(1j * pa), math.sinh(r) * cmath.exp(1j * pb), n_init)
    scale = 1 + 2 * n_init
    assert abs(abs(rec.alpha) ** 2 - abs(rec.beta) ** 2 - 1) <= 1e-8 * math.cosh(r) ** 2
    assert abs(rec.n_tilde - (n_init + scale * abs(rec.beta) ** 2)) <= 1e-8 * max(1, rec.n_tilde)
    assert abs(abs(rec.corr) - scale * abs(rec.alpha) * abs(rec.beta)) <= 1e-8 * max(1, abs(rec.corr))
    n_prime = (rec.n_tilde - n_init) / scale
    assert math.isclose(abs(rec.corr) ** 2, scale**2 * n_prime * (n_prime + 1), rel_tol=1e-9, abs_tol=1e-12)
    assert math.isclose(rec.squeeze_r, r, abs_tol=1e-9)


def test_number_correlation_frozen_without_drive():
    rec = kinetic_record(math.cosh(0.3), math.sinh(0.3) * 1j)
    out = evolve_number_correlation(rec, lambda t: (1.3, 0.0), 0.0, 5.0, TIGHT)
    assert abs(out.n_tilde - rec.n_tilde) <= 1e-14
    assert abs(out.corr - rec.corr) <= 1e-14


def test_number_correlation_matches_mode_path():
    omega, theta = sech2_pulse()
    w0 = omega(-12.0)[0]
    f0 = 1 / math.sqrt(2 * w0)
    traj = integrate_modes([f0], [-1j * w0 * f0], [0.0], lambda t: np.array([omega(t)[0] ** 2]), -12.0, 12.0, TIGHT)
    f, fd, th = traj.final
    n_mode = abs(bogoliubov_coefficients(f, fd, omega(12.0)[0], th.real)[1]) ** 2
    out = evolve_number_correlation(kinetic_record(1.0, 0.0), omega, -12.0, 12.0, TIGHT, theta_path=theta)
    assert abs(out.n_tilde - n_mode) <= 1e-6
    assert abs(abs(out.alpha) ** 2 - abs(out.beta) ** 2 - 1) <= 1e-8
    # phase integrated alongside instead of supplied
    free = evolve_number_correlation(kinetic_record(1.0, 0.0), omega, -12.0, 12.0, TIGHT)
    assert abs(free.n_tilde - n_mode) <= 1e-6


def test_constant_field_creates_particles():
    # p(t) = k_z + e E t crosses zero at t = 2
    E, kz = 1.0, -2.0
    omega = lambda t: (math.sqrt((kz + E * t) ** 2 + 1), (kz + E * t) * E / math.sqrt((kz + E * t) ** 2 + 1))
    traj = number_correlation_trajectory(kinetic_record(1.0, 0.0), omega, 0.0, 6.0, TIGHT, t_eval=np.linspace(0.5, 6, 12))
    n = traj.states[:, 0].real
    assert n[-1] > 1e-3
    assert n[-1] > n[0]


def test_nonlocal_rate_trivial_cases():
    h = QVEHistory(0.0, 0.1, capacity=2)
    for _ in range(10):
        h.append(1.0, 0.0, 0.0, 0.0)
    assert qve_nonlocal_rate(h, 0.55) == 0.0
    h2 = QVEHistory(0.0, 0.1)
    h2.append(1.0, 0.3, 0.0, 0.0)
    assert qve_nonlocal_rate(h2, 0.0) == 0.0
    with pytest.raises(ValueError):
        qve_nonlocal_rate(h, 5.0)


def test_nonlocal_rate_matches_correlation_path():
    # with C(t0) = 0 the memory integral reproduces (w'/w) Re{C e^{-2i Theta}}
    omega, theta = sech2_pulse()
    traj = number_correlation_trajectory(kinetic_record(1.0, 0.0), omega, -12.0, 0.5, TIGHT, theta_path=theta,
                                         t_eval=np.linspace(-12.0, 0.5, 2501)[1:])
    times = np.concatenate([[-12.0], traj.times])
    n = np.concatenate([[0.0], traj.states[:, 0].real])
    hist = QVEHistory(-12.0, times[1] - times[0])
    for t, nt in zip(times, n):
        w, wd = omega(t)
        hist.append(w, wd, theta(t), nt)
    w, wd = omega(0.5)
    c = traj.states[-1, 1]
    expected = wd / w * (c * cmath.exp(-2j * theta(0.5))).real
    assert abs(qve_nonlocal_rate(hist, 0.5) - expected) <= 1e-7


def test_nonlocal_march_coarse():
    omega, theta = sech2_pulse()
    ref = evolve_number_correlation(kinetic_record(1.0, 0.0), omega, -12.0, 12.0, TIGHT, theta_path=theta).n_tilde
    times, n = integrate_qve_nonlocal(omega, -12.0, 12.0, 0.04, theta_path=theta)
    assert times[-1] == pytest.approx(12.0)
    assert abs(n[-1] - ref) <= 1e-5
    with pytest.raises(ValueError):
        integrate_qve_nonlocal(omega, 0.0, 1.0, 0.3)


def test_current_vacuum_and_antisymmetry():
    fld = BackgroundField()
    ens = ModeEnsemble.vacuum(MomentumGrid(-3, 3, 13, 2.0, 5), fld)
    assert abs(mean_current(ens, fld)) <= 1e-14
    assert abs(mean_current(ens, fld, vacuum_subtraction=False)) <= 1e-12
    pair = ModeEnsemble.from_modes([ModeState(0.7, 0.2, 0.3 + 0.1j, -0.2j), ModeState(-0.7, 0.2, 0.1 - 0.3j, 0.5)])
    assert mean_current(pair, fld, vacuum_subtraction=False) == 0.0
    with pytest.raises(ValueError, match="no modes"):
        mean_current(ModeEnsemble.vacuum(MomentumGrid(kz_count=0), fld), fld)


def test_current_reflection_symmetry():
    rng = np.random.default_rng(3)
    fld = BackgroundField(0.4, -0.2)
    kz = 0.4 + np.array([-1.2, -0.5, 0.5, 1.2])  # symmetric in kinetic momentum
    f = rng.normal(size=4) + 1j * rng.normal(size=4)
    ens = ModeEnsemble(kz, np.full(4, 0.3), np.ones(4), f, np.zeros(4, complex), np.zeros(4), np.zeros(4))
    mirrored = ModeEnsemble(kz, np.full(4, 0.3), np.ones(4), f[::-1], np.zeros(4, complex), np.zeros(4), np.zeros(4))
    assert math.isclose(mean_current(mirrored, fld), -mean_current(ens, fld), rel_tol=1e-12)


def test_current_positive_after_switch_on():
    fld = BackgroundField.with_field(0.5)
    system = BackreactionSystem(0.0, fld, ModeEnsemble.vacuum(MomentumGrid(-4, 4, 17, 2.0, 5), fld))
    for _ in range(3):
        system = backreaction_step(system, 0.02, ToleranceSpec(1e-10, 1e-10))
        assert system.current() > 0


def test_grid_cutoff_and_weights():
    grid = MomentumGrid(-10, 10, 21, 5.0, 6, cutoff=5.0)
    kz, kp, w = grid.modes(BackgroundField())
    assert np.all(np.sqrt(kz**2 + kp**2 + 1) <= 5.0)
    # full grid without cutoff integrates d^3k over the cylinder
    kz, kp, w = MomentumGrid(-1, 1, 9, 2.0, 9, cutoff=1e6).modes(BackgroundField())
    assert math.isclose(w.sum(), 2 * math.pi * 4 / 2 * 2, rel_tol=1e-12)
    with pytest.raises(ValueError):
        MomentumGrid(1, -1, 4)


def test_empty_grid_free_maxwell():
    fld = BackgroundField.with_field(0.5)
    system = BackreactionSystem(0.0, fld, ModeEnsemble.vacuum(MomentumGrid(kz_count=0), fld))
    for _ in range(5):
        system = backreaction_step(system, 0.5)
    assert system.field.E == 0.5
    assert math.isclose(system.field.A, -0.5 * 2.5, rel_tol=1e-14)
    assert system_energy(system) == 0.125


def test_weak_field_regression():
    # the switch-on response scales with e^2, so weak coupling keeps E nearly constant
    fld = BackgroundField.with_field(0.1, e=0.02)
    system = BackreactionSystem(0.0, fld, ModeEnsemble.vacuum(MomentumGrid(-4, 4, 32, 2.0, 8), fld))
    worst = 0.0
    for _ in range(20):
        system = backreaction_step(system, math.pi / 10, ToleranceSpec(1e-10, 1e-10))
        worst = max(worst, abs(system.field.E - 0.1) / 0.1)
    assert worst <= 1e-3


def test_backreaction_energy_and_wronskian():
    fld = BackgroundField.with_field(0.5)
    system = BackreactionSystem(0.0, fld, ModeEnsemble.vacuum(MomentumGrid(-6, 6, 24, 2.0, 6), fld))
    e0 = system_energy(system)
    for _ in range(10):
        system = backreaction_step(system, 0.3, ToleranceSpec(1e-10, 1e-10))
    assert abs(system_energy(system) - e0) <= 1e-6 * e0
    assert system.modes.wronskian_error() <= 1e-8
    alpha, beta = system.modes.bogoliubov(system.field)
    assert np.max(np.abs(np.abs(alpha) ** 2 - np.abs(beta) ** 2 - 1)) <= 1e-8


def test_energy_without_vacuum_subtraction():
    fld = BackgroundField.with_field(0.05, e=0.3)
    system = BackreactionSystem(0.0, fld, ModeEnsemble.vacuum(MomentumGrid(-3, 3, 12, 1.0, 4), fld), False)
    e0 = system_energy(system)
    system = backreaction_step(system, 2.0, ToleranceSpec(1e-11, 1e-11))
    assert abs(system_energy(system) - e0) <= 1e-8 * e0


def test_gauge_shift_invariance():
    shift = 0.37
    out = []
    for d in (0.0, shift):
        fld = BackgroundField(d, -0.5)
        system = BackreactionSystem(0.0, fld, ModeEnsemble.vacuum(MomentumGrid(-4 + d, 4 + d, 16, 2.0, 4, 50.0), fld))
        system = backreaction_step(system, 1.0, ToleranceSpec(1e-10, 1e-10))
        out.append((system.field.E, system.current(), system.modes.n_tilde(system.field), system_energy(system)))
    assert abs(out[0][0] - out[1][0]) <= 1e-12
    assert abs(out[0][1] - out[1][1]) <= 1e-12
    assert np.max(np.abs(out[0][2] - out[1][2])) <= 1e-12
    assert abs(out[0][3] - out[1][3]) <= 1e-12


def test_density_matrix():
    rho, tail = density_matrix_diag(0.0, 4)
    np.testing.assert_array_equal(rho, [1, 0, 0, 0, 0])
    assert tail == 0.0
    rho, tail = density_matrix_diag(1.0, 60)
    np.testing.assert_allclose(rho, 0.5 ** (np.arange(61) + 1), rtol=1e-14)
    assert abs(rho.sum() + tail - 1) <= 1e-15
    assert abs(np.arange(61) @ rho - 1) <= 1e-15
    with pytest.raises(ValueError):
        density_matrix_diag(-0.1, 3)


@settings(max_examples=50, deadline=None)
@given(st.floats(0, 10), st.integers(0, 40))
def test_density_matrix_tail_is_geometric(n, l_max):
    rho, tail = density_matrix_diag(n, l_max)
    assert abs(rho.sum() + tail - 1) <= 1e-12
    assert math.isclose(tail, (n / (1 + n)) ** (l_max + 1), rel_tol=1e-12, abs_tol=1e-300)


def test_entropy_values():
    assert mode_entropy(0.0) == 0.0
    assert abs(mode_entropy(1.0) - 2 * math.log(2)) <= 1e-15
    np.testing.assert_allclose(mode_entropy(np.array([0.0, 1.0])), [0.0, 2 * math.log(2)])
    with pytest.raises(ValueError):
        mode_entropy(-1.0)


def test_entropy_rate_matches_difference():
    n = np.array([0.2, 1.5, 0.0])
    nd = np.array([0.3, -0.1, 0.0])
    h = 1e-6
    fd = (np.sum(mode_entropy(n + h * nd)) - np.sum(mode_entropy(n - h * nd))) / (2 * h)
    assert abs(entropy_rate(n, nd) - fd) <= 1e-8
