"""Shared numerical kernels.

Adaptive Dormand-Prince integration, bracketed root finding, tridiagonal
solves and uniform-grid quadrature.  Everything here is a pure function of
its inputs.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional, Sequence

import numpy as np
from scipy.linalg import lapack

__all__ = [
    "NumericalError",
    "IntegrationBudgetExceeded",
    "DivergentDynamics",
    "BracketInvalid",
    "RootNotConverged",
    "SingularSystem",
    "ToleranceSpec",
    "DEFAULT_TOL",
    "Trajectory",
    "integrate_ode",
    "find_root",
    "solve_tridiagonal",
    "TridiagonalLU",
    "quadrature_weights",
    "quadrature",
]


class NumericalError(RuntimeError):
    """Base class for failures of a numerical method (as opposed to bad input)."""


class IntegrationBudgetExceeded(NumericalError):
    pass


class DivergentDynamics(NumericalError):
    pass


class BracketInvalid(NumericalError):
    pass


class RootNotConverged(NumericalError):
    pass


class SingularSystem(NumericalError):
    pass


@dataclass(frozen=True)
class ToleranceSpec:
    abs_tol: float = 1e-10
    rel_tol: float = 1e-10
    max_steps: int = 10_000_000

    def __post_init__(self):
        if not (self.abs_tol > 0 and self.rel_tol > 0):
            raise ValueError("tolerances must be positive")
        if int(self.max_steps) < 1:
            raise ValueError("max_steps must be >= 1")

    def scaled(self, factor: float) -> "ToleranceSpec":
        """Same budget, tolerances multiplied by ``factor``."""
        return ToleranceSpec(self.abs_tol * factor, self.rel_tol * factor, self.max_steps)


DEFAULT_TOL = ToleranceSpec()


@dataclass
class Trajectory:
    times: np.ndarray
    states: np.ndarray

    def __post_init__(self):
        self.times = np.asarray(self.times, dtype=float)
        self.states = np.asarray(self.states)
        if self.states.shape[0] != self.times.shape[0]:
            raise ValueError("states and times must have the same length")
        if self.times.size > 1 and np.any(np.diff(self.times) <= 0):
            raise ValueError("times must be strictly increasing")

    def __len__(self):
        return self.times.size

    @property
    def final(self) -> np.ndarray:
        return self.states[-1]


# Dormand-Prince 5(4) tableau.
_C = np.array([0.0, 1 / 5, 3 / 10, 4 / 5, 8 / 9, 1.0])
_A = [
    [],
    [1 / 5],
    [3 / 40, 9 / 40],
    [44 / 45, -56 / 15, 32 / 9],
    [19372 / 6561, -25360 / 2187, 64448 / 6561, -212 / 729],
    [9017 / 3168, -355 / 33, 46732 / 5247, 49 / 176, -5103 / 18656],
]
_B = np.array([35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84])
# 5th-order minus embedded 4th-order weights; last entry multiplies the FSAL stage.
_E = np.array([71 / 57600, 0.0, -71 / 16695, 71 / 1920, -17253 / 339200, 22 / 525, -1 / 40])

_SAFETY = 0.9
_MIN_FACTOR = 0.2
_MAX_FACTOR = 5.0


def _checked(k, t):
    if not np.all(np.isfinite(k)):
        raise DivergentDynamics(f"divergent dynamics: non-finite rhs at t={t:.17g}")
    return k


def _initial_step(rhs, t0, y0, f0, direction_span, tol):
    scale = np.maximum(tol.abs_tol, tol.rel_tol * np.abs(y0))
    d0 = np.max(np.abs(y0) / scale)
    d1 = np.max(np.abs(f0) / scale)
    h0 = 1e-6 if (d0 < 1e-5 or d1 < 1e-5) else 0.01 * d0 / d1
    h0 = min(h0, direction_span)
    y1 = y0 + h0 * f0
    f1 = _checked(rhs(t0 + h0, y1), t0 + h0)
    d2 = np.max(np.abs(f1 - f0) / scale) / h0
    if max(d1, d2) <= 1e-15:
        h1 = max(1e-6, h0 * 1e-3)
    else:
        h1 = (0.01 / max(d1, d2)) ** (1 / 5)
    return min(100 * h0, h1, direction_span)


def integrate_ode(
    rhs: Callable[[float, np.ndarray], np.ndarray],
    state0,
    t0: float,
    t1: float,
    tol: ToleranceSpec = DEFAULT_TOL,
    t_eval: Optional[Sequence[float]] = None,
    first_step: Optional[float] = None,
) -> Trajectory:
    """Integrate ``y' = rhs(t, y)`` from ``t0`` to ``t1`` with Dormand-Prince 5(4).

    The per-step local error estimate is held below
    ``max(abs_tol, rel_tol * |y|)`` componentwise, and the step is advanced
    with the 5th-order solution (local extrapolation).

    Parameters
    ----------
    rhs : callable
        Vector field ``rhs(t, y)``; may be real or complex valued.
    state0 : array_like
        Initial state.
    t0, t1 : float
        Integration interval, ``t1 > t0``.
    tol : ToleranceSpec
    t_eval : sequence of float, optional
        Strictly increasing output times inside ``[t0, t1]``.  The stepper
        lands exactly on each of them.  If omitted every accepted step is
        recorded.

    Returns
    -------
    Trajectory
        Always contains ``t1``; contains ``t0`` unless ``t_eval`` omits it.
    """
    t0 = float(t0)
    t1 = float(t1)
    if not t1 > t0:
        raise ValueError("integrate_ode requires t1 > t0")
    y = np.array(state0, dtype=np.result_type(np.asarray(state0).dtype, float), copy=True)
    if y.ndim == 0:
        y = y.reshape(1)

    if t_eval is None:
        stops = np.array([t1])
        record_all = True
    else:
        stops = np.asarray(t_eval, dtype=float)
        if stops.ndim != 1 or stops.size == 0:
            raise ValueError("t_eval must be a non-empty 1-D sequence")
        if np.any(np.diff(stops) <= 0) or stops[0] < t0 or stops[-1] > t1:
            raise ValueError("t_eval must be increasing and inside [t0, t1]")
        if stops[-1] < t1:
            stops = np.append(stops, t1)
        record_all = False

    times = []
    states = []
    if record_all or stops[0] == t0:
        times.append(t0)
        states.append(y.copy())
    stop_idx = 1 if (not record_all and stops[0] == t0) else 0

    t = t0
    k_first = _checked(rhs(t, y), t)
    h = first_step if first_step is not None else _initial_step(rhs, t, y, k_first, t1 - t0, tol)
    n_steps = 0
    ks = [None] * 7

    while stop_idx < stops.size:
        target = stops[stop_idx]
        if n_steps >= tol.max_steps:
            raise IntegrationBudgetExceeded(
                f"integration budget exceeded: {tol.max_steps} steps before t={t1:.17g} (reached t={t:.17g})"
            )
        if h < 16 * np.finfo(float).eps * max(abs(t), 1.0):
            raise DivergentDynamics(f"divergent dynamics: step size underflow at t={t:.17g}")
        h_try = min(h, target - t)
        landing = h_try == target - t

        ks[0] = k_first
        for s in range(1, 6):
            dy = sum(a * k for a, k in zip(_A[s], ks[:s]))
            ks[s] = _checked(rhs(t + _C[s] * h_try, y + h_try * dy), t + _C[s] * h_try)
        y_new = y + h_try * sum(b * k for b, k in zip(_B, ks[:6]) if b != 0.0)
        t_new = target if landing else t + h_try
        if not np.all(np.isfinite(y_new)):
            raise DivergentDynamics(f"divergent dynamics: non-finite state at t={t_new:.17g}")
        ks[6] = _checked(rhs(t_new, y_new), t_new)
        err = h_try * sum(e * k for e, k in zip(_E, ks) if e != 0.0)
        scale = np.maximum(tol.abs_tol, tol.rel_tol * np.maximum(np.abs(y), np.abs(y_new)))
        err_norm = float(np.max(np.abs(err) / scale))
        n_steps += 1

        if err_norm <= 1.0:
            t, y, k_first = t_new, y_new, ks[6]
            factor = _MAX_FACTOR if err_norm == 0 else min(_MAX_FACTOR, _SAFETY * err_norm ** -0.2)
            # do not let a short landing step shrink the next regular step
            h = max(h, h_try * factor) if landing else h_try * factor
            if landing:
                times.append(t)
                states.append(y.copy())
                stop_idx += 1
            elif record_all:
                times.append(t)
                states.append(y.copy())
        else:
            h = h_try * max(_MIN_FACTOR, _SAFETY * err_norm ** -0.2)

    return Trajectory(np.array(times), np.array(states))


def find_root(
    fn: Callable[[float], float],
    lo: float,
    hi: float,
    tol: ToleranceSpec = DEFAULT_TOL,
) -> float:
    """Root of ``fn`` inside ``[lo, hi]`` by safeguarded secant/bisection.

    Stops when ``|fn(x)| <= abs_tol`` or the bracket is narrower than
    ``rel_tol * |x|``.  Iterates never leave the bracket.
    """
    a, b = float(lo), float(hi)
    if a > b:
        a, b = b, a
    fa, fb = float(fn(a)), float(fn(b))
    if fa == 0.0:
        return a
    if fb == 0.0:
        return b
    if not (np.isfinite(fa) and np.isfinite(fb)) or fa * fb > 0:
        raise BracketInvalid(f"bracket invalid: f({a:.6g})={fa:.6g}, f({b:.6g})={fb:.6g}")

    width_prev = b - a
    for _ in range(int(tol.max_steps)):
        if abs(fa) < abs(fb):
            x_best, f_best = a, fa
        else:
            x_best, f_best = b, fb
        if abs(f_best) <= tol.abs_tol:
            return x_best
        width = b - a
        if width <= max(tol.rel_tol * abs(x_best), 4 * np.finfo(float).eps * abs(x_best), 1e-300):
            return x_best

        x = b - fb * (b - a) / (fb - fa)
        # fall back to bisection when secant misbehaves or the bracket stalls
        if not (a < x < b) or width > 0.5 * width_prev:
            x = 0.5 * (a + b)
        width_prev = width
        fx = float(fn(x))
        if fx == 0.0:
            return x
        if np.sign(fx) == np.sign(fa):
            a, fa = x, fx
        else:
            b, fb = x, fx
    raise RootNotConverged(f"root iteration exhausted after {tol.max_steps} steps")


def solve_tridiagonal(lower, diag, upper, rhs) -> np.ndarray:
    """Solve a tridiagonal system with the Thomas algorithm.

    ``lower`` and ``upper`` hold the n-1 sub- and super-diagonal entries.
    No pivoting is done, so diagonal dominance (or similar) is the caller's
    business; an exactly vanishing pivot raises :class:`SingularSystem`.
    """
    d = np.asarray(diag)
    dtype = np.result_type(d, np.asarray(lower), np.asarray(upper), np.asarray(rhs), float)
    d = d.astype(dtype)
    lo = np.asarray(lower, dtype=dtype)
    up = np.asarray(upper, dtype=dtype)
    r = np.asarray(rhs, dtype=dtype)
    n = d.size
    if r.shape[0] != n or lo.size != n - 1 or up.size != n - 1:
        raise ValueError("inconsistent tridiagonal system dimensions")

    c = np.empty(max(n - 1, 0), dtype=dtype)
    x = np.empty_like(r)
    tiny = np.finfo(float).tiny
    piv = d[0]
    if abs(piv) < tiny:
        raise SingularSystem("singular tridiagonal system: zero pivot at row 0")
    x[0] = r[0] / piv
    for i in range(1, n):
        c[i - 1] = up[i - 1] / piv
        piv = d[i] - lo[i - 1] * c[i - 1]
        if abs(piv) < tiny:
            raise SingularSystem(f"singular tridiagonal system: zero pivot at row {i}")
        x[i] = (r[i] - lo[i - 1] * x[i - 1]) / piv
    for i in range(n - 2, -1, -1):
        x[i] -= c[i] * x[i + 1]
    return x


class TridiagonalLU:
    """Factor-once / solve-many tridiagonal LU (LAPACK ``?gttrf``/``?gttrs``).

    Used for Crank-Nicolson stepping where the same matrix is applied
    thousands of times.  Partial pivoting, so it also covers systems the
    plain Thomas sweep would reject.
    """

    def __init__(self, lower, diag, upper):
        d = np.asarray(diag)
        dtype = np.result_type(d, np.asarray(lower), np.asarray(upper), float)
        complex_ = np.issubdtype(dtype, np.complexfloating)
        self._gttrf = lapack.zgttrf if complex_ else lapack.dgttrf
        self._gttrs = lapack.zgttrs if complex_ else lapack.dgttrs
        self.dtype = np.complex128 if complex_ else np.float64
        self._dense = None
        if d.size < 3:
            # the f2py wrapper of ?gttrf rejects n = 2; tiny systems go dense
            self._dense = np.diag(d.astype(self.dtype))
            if d.size == 2:
                self._dense[1, 0], self._dense[0, 1] = np.ravel(lower)[0], np.ravel(upper)[0]
            if np.linalg.matrix_rank(self._dense) < d.size:
                raise SingularSystem("singular tridiagonal system")
            return
        factors = self._gttrf(
            np.asarray(lower, dtype=self.dtype),
            np.asarray(diag, dtype=self.dtype),
            np.asarray(upper, dtype=self.dtype),
        )
        *self._factors, info = factors
        if info > 0:
            raise SingularSystem(f"singular tridiagonal system: zero pivot at row {info - 1}")

    def solve(self, rhs) -> np.ndarray:
        if self._dense is not None:
            return np.linalg.solve(self._dense, np.asarray(rhs, dtype=self.dtype))
        x, info = self._gttrs(*self._factors, np.asarray(rhs, dtype=self.dtype))
        if info != 0:
            raise SingularSystem(f"tridiagonal back-substitution failed (info={info})")
        return x


def quadrature_weights(n: int, spacing: float) -> np.ndarray:
    """Weights ``w`` such that ``w @ samples`` integrates ``n`` uniform samples.

    Composite Simpson for an even number of intervals.  For an odd number of
    intervals the last three use Simpson's 3/8 rule; two samples reduce to the
    trapezoid rule.
    """
    if n < 2:
        raise ValueError("insufficient samples: quadrature needs at least 2")
    if not spacing > 0:
        raise ValueError("spacing must be positive")
    w = np.zeros(n)
    if n == 2:
        w[:] = 0.5
    elif n % 2 == 1:
        w[0:-1:2] += 1 / 3
        w[1::2] += 4 / 3
        w[2::2] += 1 / 3
    else:
        m = n - 3  # Simpson part covers samples [0, m)
        if m >= 3:
            w[0 : m - 1 : 2] += 1 / 3
            w[1 : m - 1 : 2] += 4 / 3
            w[2:m:2] += 1 / 3
        w[m - 1 :] += np.array([3 / 8, 9 / 8, 9 / 8, 3 / 8])
    return w * spacing


def quadrature(samples, spacing: float) -> float:
    """Integrate uniformly spaced samples (see :func:`quadrature_weights`)."""
    s = np.asarray(samples)
    return quadrature_weights(s.shape[0], spacing) @ s
