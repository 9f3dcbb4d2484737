import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from largen.numerics import (
    BracketInvalid,
    DivergentDynamics,
    IntegrationBudgetExceeded,
    SingularSystem,
    ToleranceSpec,
    Trajectory,
    TridiagonalLU,
    find_root,
    integrate_ode,
    quadrature,
    quadrature_weights,
    solve_tridiagonal,
)

TIGHT = ToleranceSpec(1e-12, 1e-12)


def test_exponential_decay():
    traj = integrate_ode(lambda t, y: -y, [1.0], 0.0, 1.0, TIGHT)
    assert abs(traj.final[0] - math.exp(-1)) <= 1e-10


def test_harmonic_oscillator_period():
    rhs = lambda t, y: np.array([y[1], -y[0]])
    traj = integrate_ode(rhs, [1.0, 0.0], 0.0, 2 * math.pi, TIGHT)
    np.testing.assert_allclose(traj.final, [1.0, 0.0], atol=1e-9)


def test_t_eval_points_hit_exactly():
    ts = np.linspace(0.1, 2.0, 20)
    traj = integrate_ode(lambda t, y: -2 * y, [1.0], 0.0, 2.0, TIGHT, t_eval=ts)
    np.testing.assert_array_equal(traj.times, ts)
    np.testing.assert_allclose(traj.states[:, 0], np.exp(-2 * ts), rtol=1e-9)


def test_complex_state():
    traj = integrate_ode(lambda t, y: -1j * y, [1.0 + 0j], 0.0, 3.0, TIGHT)
    assert abs(traj.final[0] - np.exp(-3j)) <= 1e-10


def test_blow_up_is_divergent():
    with pytest.raises(DivergentDynamics, match="divergent dynamics"):
        integrate_ode(lambda t, y: y * y, [1.0], 0.0, 2.0, TIGHT)


def test_budget_exceeded():
    with pytest.raises(IntegrationBudgetExceeded, match="integration budget exceeded"):
        integrate_ode(lambda t, y: -y, [1.0], 0.0, 100.0, ToleranceSpec(1e-12, 1e-12, max_steps=5))


def test_tolerance_validation():
    with pytest.raises(ValueError):
        ToleranceSpec(0.0, 1e-8)
    with pytest.raises(ValueError):
        ToleranceSpec(1e-8, 1e-8, max_steps=0)
    assert ToleranceSpec(1e-8, 1e-6).scaled(0.5) == ToleranceSpec(5e-9, 5e-7)


def test_trajectory_requires_increasing_times():
    with pytest.raises(ValueError):
        Trajectory(np.array([0.0, 0.0]), np.zeros((2, 1)))


def test_tighter_tolerance_is_more_accurate():
    rhs = lambda t, y: np.array([y[1], -y[0]])
    errs = [abs(integrate_ode(rhs, [1.0, 0.0], 0.0, 20.0, ToleranceSpec(tol, tol)).final[0] - math.cos(20.0))
            for tol in (1e-6, 1e-9, 1e-12)]
    assert errs[0] > errs[1] > errs[2]


def test_find_root_sqrt2():
    r = find_root(lambda x: x * x - 2, 0.0, 2.0, ToleranceSpec(1e-15, 1e-15))
    assert abs(r - math.sqrt(2)) <= 1e-13


def test_find_root_endpoint_and_invalid_bracket():
    assert find_root(lambda x: x - 1.0, 1.0, 3.0, TIGHT) == 1.0
    with pytest.raises(BracketInvalid, match="bracket invalid"):
        find_root(lambda x: x * x + 1, -1.0, 1.0, TIGHT)


@settings(max_examples=50, deadline=None)
@given(st.floats(-50, 50), st.floats(0.1, 10))
def test_find_root_cubic_property(shift, scale):
    fn = lambda x: scale * (x - shift) ** 3 + (x - shift)
    r = find_root(fn, shift - 60, shift + 70, ToleranceSpec(1e-14, 1e-14))
    assert abs(r - shift) <= 1e-9 * max(1.0, abs(shift))


def test_tridiagonal_small_system():
    x = solve_tridiagonal([1.0], [2.0, 2.0], [1.0], [3.0, 3.0])
    np.testing.assert_allclose(x, [1.0, 1.0])


def test_tridiagonal_singular():
    with pytest.raises(SingularSystem, match="singular tridiagonal system"):
        solve_tridiagonal([1.0], [0.0, 1.0], [1.0], [1.0, 1.0])


@settings(max_examples=40, deadline=None)
@given(st.integers(2, 40), st.integers(0, 2**32 - 1))
def test_thomas_and_lapack_agree_with_dense(n, seed):
    rng = np.random.default_rng(seed)
    lower = rng.normal(size=n - 1) + 1j * rng.normal(size=n - 1)
    upper = rng.normal(size=n - 1) + 1j * rng.normal(size=n - 1)
    diag = 4 + np.abs(lower).sum() + np.abs(upper).sum() + rng.normal(size=n) + 0j
    rhs = rng.normal(size=n) + 1j * rng.normal(size=n)
    dense = np.diag(diag) + np.diag(lower, -1) + np.diag(upper, 1)
    ref = np.linalg.solve(dense, rhs)
    np.testing.assert_allclose(solve_tridiagonal(lower, diag, upper, rhs), ref, rtol=1e-10, atol=1e-12)
    np.testing.assert_allclose(TridiagonalLU(lower, diag, upper).solve(rhs), ref, rtol=1e-10, atol=1e-12)


def test_quadrature_exact_for_cubics_any_parity():
    for n in (3, 4, 5, 8, 11):
        x = np.linspace(0.0, 2.0, n)
        assert abs(quadrature(x**3 - x, x[1] - x[0]) - 2.0) <= 1e-12


def test_quadrature_two_samples_trapezoid():
    np.testing.assert_allclose(quadrature_weights(2, 0.5), [0.25, 0.25])
    with pytest.raises(ValueError, match="insufficient samples"):
        quadrature_weights(1, 0.1)


@pytest.mark.parametrize("offset", [0, 1])
def test_quadrature_fourth_order(offset):
    errs = []
    for n in (20 + offset, 40 + offset):
        x = np.linspace(0.0, math.pi, n + 1)
        errs.append(abs(quadrature(np.sin(x), x[1] - x[0]) - 2.0))
    assert errs[0] / errs[1] > 12


@settings(max_examples=50, deadline=None)
@given(st.integers(2, 60), st.floats(1e-3, 10))
def test_quadrature_weights_sum_to_length(n, h):
    assert abs(quadrature_weights(n, h).sum() - (n - 1) * h) <= 1e-12 * n * h
