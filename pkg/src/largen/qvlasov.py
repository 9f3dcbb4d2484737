"""Pair creation of charged scalars in a homogeneous electric field.

Each canonical momentum ``k = (k_z, k_perp)`` carries a mode amplitude ``f``
obeying ``f'' + omega^2(t) f = 0`` with ``omega^2 = (k_z - e A)^2 + k_perp^2 + m^2``.
Particle content is read off in the zeroth-order adiabatic basis
``f0 = exp(-i Theta) / sqrt(2 omega)``, ``Theta = int omega dt``.  Units have
hbar = 1, so the Wronskian ``f conj(f') - conj(f) f'`` equals ``i``.

Three routes to the adiabatic particle number are provided and are expected
to agree: the mode equation followed by Bogoliubov projection, the coupled
number/correlation ODEs, and the time-nonlocal quantum Vlasov equation.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Callable, Optional, Tuple

import numpy as np
from scipy.special import xlogy

from .numerics import DEFAULT_TOL, ToleranceSpec, Trajectory, integrate_ode, quadrature_weights

__all__ = [
    "BackgroundField",
    "ModeState",
    "KineticRecord",
    "MomentumGrid",
    "ModeEnsemble",
    "QVEHistory",
    "BackreactionSystem",
    "InvalidModeState",
    "omega_k",
    "vacuum_mode",
    "integrate_modes",
    "evolve_mode",
    "bogoliubov_coefficients",
    "bogoliubov_of_mode",
    "kinetic_record",
    "adiabatic_number",
    "pair_correlation",
    "evolve_number_correlation",
    "number_correlation_trajectory",
    "qve_nonlocal_rate",
    "integrate_qve_nonlocal",
    "mean_current",
    "backreaction_step",
    "system_energy",
    "density_matrix_diag",
    "mode_entropy",
    "entropy_rate",
]

WRONSKIAN_SLACK = 1e-6


class InvalidModeState(ValueError):
    pass


@dataclass(frozen=True)
class BackgroundField:
    """Vector potential ``A`` and its rate; the electric field is ``E = -A_dot``."""

    A: float = 0.0
    A_dot: float = 0.0
    e: float = 1.0
    m: float = 1.0

    def __post_init__(self):
        if not self.e > 0:
            raise ValueError("charge e must be positive")
        if not self.m > 0:
            raise ValueError("mass m must be positive")

    @property
    def E(self) -> float:
        return -self.A_dot

    @classmethod
    def with_field(cls, E0: float, A: float = 0.0, e: float = 1.0, m: float = 1.0) -> "BackgroundField":
        return cls(A, -E0, e, m)


@dataclass(frozen=True)
class ModeState:
    k_z: float
    k_perp: float
    f: complex
    f_dot: complex
    theta: float = 0.0
    n_init: float = 0.0

    def __post_init__(self):
        if self.k_perp < 0:
            raise ValueError("k_perp must be >= 0")
        if self.n_init < 0:
            raise ValueError("n_init must be >= 0")

    @property
    def wronskian(self) -> complex:
        return self.f * np.conj(self.f_dot) - np.conj(self.f) * self.f_dot


@dataclass(frozen=True)
class KineticRecord:
    """Slow/fast pair ``(N~, C)`` of one mode with its Bogoliubov data."""

    n_tilde: float
    corr: complex
    alpha: complex
    beta: complex
    squeeze_r: float
    n_init: float = 0.0


def _omega_sq(k_z, k_perp, A, e, m):
    p = k_z - e * A
    return p * p + k_perp * k_perp + m * m


def omega_k(mode: ModeState, field: BackgroundField) -> float:
    """Instantaneous frequency ``sqrt((k_z - eA)^2 + k_perp^2 + m^2)``."""
    return math.sqrt(_omega_sq(mode.k_z, mode.k_perp, field.A, field.e, field.m))


def vacuum_mode(k_z: float, k_perp: float, field: BackgroundField, n_init: float = 0.0, theta: float = 0.0) -> ModeState:
    """Mode sitting exactly on the adiabatic vacuum solution at the current time."""
    w = math.sqrt(_omega_sq(k_z, k_perp, field.A, field.e, field.m))
    f = np.exp(-1j * theta) / math.sqrt(2 * w)
    return ModeState(k_z, k_perp, complex(f), complex(-1j * w * f), theta, n_init)


def integrate_modes(
    f0,
    fdot0,
    theta0,
    omega_sq: Callable[[float], np.ndarray],
    t0: float,
    t1: float,
    tol: ToleranceSpec = DEFAULT_TOL,
    t_eval=None,
) -> Trajectory:
    """Integrate a batch of independent mode equations together.

    State layout is ``[f, f_dot, Theta]`` (complex, each of length n).
    ``omega_sq(t)`` returns the n squared frequencies; negative values
    (inverted oscillators) are allowed and freeze ``Theta``.
    Integration backwards in time (``t1 < t0``) is supported; the returned
    rows are always in increasing time, so the state at ``t1`` is then the
    first row rather than the last.
    """
    f0 = np.atleast_1d(np.asarray(f0, dtype=complex))
    n = f0.size
    y0 = np.concatenate([f0, np.atleast_1d(np.asarray(fdot0, dtype=complex)), np.atleast_1d(np.asarray(theta0, dtype=complex))])
    if y0.size != 3 * n:
        raise ValueError("f0, fdot0 and theta0 must have equal length")
    sign = 1.0 if t1 >= t0 else -1.0

    def rhs(s, y):
        t = sign * s
        w2 = omega_sq(t)
        out = np.empty_like(y)
        out[:n] = y[n : 2 * n]
        out[n : 2 * n] = -w2 * y[:n]
        out[2 * n :] = np.sqrt(np.maximum(w2, 0.0))
        return sign * out

    ev = None if t_eval is None else np.sort(sign * np.asarray(t_eval, dtype=float))
    traj = integrate_ode(rhs, y0, sign * t0, sign * t1, tol, t_eval=ev)
    if sign > 0:
        return traj
    # rows come back in integration order; flip so times increase
    return Trajectory(-traj.times[::-1], traj.states[::-1])


def evolve_mode(
    mode: ModeState,
    field_history: Callable[[float], float],
    t0: float,
    t1: float,
    tol: ToleranceSpec = DEFAULT_TOL,
    *,
    e: float = 1.0,
    m: float = 1.0,
) -> ModeState:
    """Advance ``(f, f_dot, Theta)`` of one mode in the background ``A(t)``."""
    if t1 == t0:
        return mode
    kz, kp = mode.k_z, mode.k_perp
    w2 = lambda t: np.array([_omega_sq(kz, kp, field_history(t), e, m)])
    traj = integrate_modes(mode.f, mode.f_dot, mode.theta, w2, t0, t1, tol)
    f, fd, th = traj.final if t1 >= t0 else traj.states[0]
    return replace(mode, f=complex(f), f_dot=complex(fd), theta=float(th.real))


def bogoliubov_coefficients(f, f_dot, omega, theta):
    """Project ``f`` on the adiabatic pair ``(f0, conj(f0))`` (vectorized).

    ``alpha = i (conj(f0) f_dot - conj(f0_dot) f)``,
    ``beta = -i (f0 f_dot - f0_dot f)`` with ``f0_dot = -i omega f0``.
    """
    f0 = np.exp(-1j * np.asarray(theta)) / np.sqrt(2 * np.asarray(omega))
    alpha = 1j * np.conj(f0) * (f_dot - 1j * omega * f)
    beta = -1j * f0 * (f_dot + 1j * omega * f)
    return alpha, beta


def bogoliubov_of_mode(mode: ModeState, field: BackgroundField) -> Tuple[complex, complex]:
    """Bogoliubov coefficients of a mode relative to the adiabatic basis.

    Raises
    ------
    InvalidModeState
        If the Wronskian differs from ``i`` (e.g. a negative-norm mode).
    """
    w = mode.wronskian
    if abs(w - 1j) > WRONSKIAN_SLACK:
        raise InvalidModeState(f"invalid mode state: Wronskian {w:.6g} != i")
    alpha, beta = bogoliubov_coefficients(mode.f, mode.f_dot, omega_k(mode, field), mode.theta)
    return complex(alpha), complex(beta)


def kinetic_record(alpha: complex, beta: complex, n_init: float = 0.0) -> KineticRecord:
    """Number, pair correlation and squeeze parameter from ``(alpha, beta)``."""
    b2 = abs(beta) ** 2
    n_tilde = n_init + (1 + 2 * n_init) * b2
    corr = (1 + 2 * n_init) * alpha * np.conj(beta)
    return KineticRecord(n_tilde, complex(corr), complex(alpha), complex(beta), math.asinh(abs(beta)), n_init)


def adiabatic_number(rec: KineticRecord) -> float:
    """``N~ = N_k + (1 + 2 N_k) |beta|^2``."""
    return rec.n_init + (1 + 2 * rec.n_init) * abs(rec.beta) ** 2


def pair_correlation(rec: KineticRecord) -> complex:
    """``C = (1 + 2 N_k) alpha conj(beta)``."""
    return complex((1 + 2 * rec.n_init) * rec.alpha * np.conj(rec.beta))


def _nc_rhs(omega_path, theta_path, n):
    def rhs(t, y):
        w, wd = omega_path(t)
        th = theta_path(t) if theta_path is not None else y[2].real
        phase = np.exp(2j * th)
        rate = wd / w
        out = np.empty_like(y)
        out[0] = rate * (y[1] * np.conj(phase)).real
        out[1] = 0.5 * rate * (1 + 2 * y[0].real) * phase
        out[2] = w
        return out

    return rhs


def number_correlation_trajectory(
    rec: KineticRecord,
    omega_path: Callable[[float], Tuple[float, float]],
    t0: float,
    t1: float,
    tol: ToleranceSpec = DEFAULT_TOL,
    theta_path: Optional[Callable[[float], float]] = None,
    theta0: float = 0.0,
    t_eval=None,
) -> Trajectory:
    """Integrate ``dN~/dt = (w'/w) Re{C e^{-2i Theta}}``, ``dC/dt = (w'/2w)(1 + 2N~) e^{2i Theta}``.

    State rows are ``[N~, C, Theta]``.  Without ``theta_path`` the phase is
    integrated alongside from ``theta0``.
    """
    th0 = theta_path(t0) if theta_path is not None else theta0
    y0 = np.array([rec.n_tilde, rec.corr, th0], dtype=complex)
    return integrate_ode(_nc_rhs(omega_path, theta_path, 1), y0, t0, t1, tol, t_eval=t_eval)


def evolve_number_correlation(
    rec: KineticRecord,
    omega_path: Callable[[float], Tuple[float, float]],
    t0: float,
    t1: float,
    tol: ToleranceSpec = DEFAULT_TOL,
    theta_path: Optional[Callable[[float], float]] = None,
    theta0: float = 0.0,
) -> KineticRecord:
    """Advance ``(N~, C)`` through ``omega(t)``; ``omega_path(t)`` gives ``(w, w')``.

    The overall phase of ``(alpha, beta)`` is not fixed by ``(N~, C)``; the
    returned record takes ``alpha`` real and positive.
    """
    traj = number_correlation_trajectory(rec, omega_path, t0, t1, tol, theta_path, theta0)
    n_tilde = float(traj.final[0].real)
    corr = complex(traj.final[1])
    scale = 1 + 2 * rec.n_init
    b2 = max((n_tilde - rec.n_init) / scale, 0.0)
    alpha = math.sqrt(1 + b2)
    beta = np.conj(corr / scale) / alpha
    return KineticRecord(n_tilde, corr, complex(alpha), complex(beta), math.asinh(math.sqrt(b2)), rec.n_init)


class QVEHistory:
    """Uniform-in-time record of ``(omega, omega_dot, Theta, N~)`` for the memory integral."""

    def __init__(self, t0: float, dt: float, capacity: int = 1024):
        if not dt > 0:
            raise ValueError("history spacing must be positive")
        self.t0 = float(t0)
        self.dt = float(dt)
        self._data = np.empty((4, max(int(capacity), 4)))
        self.size = 0

    def append(self, omega: float, omega_dot: float, theta: float, n_tilde: float) -> None:
        if self.size == self._data.shape[1]:
            self._data = np.concatenate([self._data, np.empty_like(self._data)], axis=1)
        self._data[:, self.size] = (omega, omega_dot, theta, n_tilde)
        self.size += 1

    def set_last_number(self, n_tilde: float) -> None:
        self._data[3, self.size - 1] = n_tilde

    @property
    def times(self) -> np.ndarray:
        return self.t0 + self.dt * np.arange(self.size)

    @property
    def omega(self):
        return self._data[0, : self.size]

    @property
    def omega_dot(self):
        return self._data[1, : self.size]

    @property
    def theta(self):
        return self._data[2, : self.size]

    @property
    def n_tilde(self):
        return self._data[3, : self.size]


def qve_nonlocal_rate(history: QVEHistory, t: float) -> float:
    """Right side of the nonlocal quantum Vlasov equation at time ``t``.

    ``dN~/dt = (w'/2w)(t) int_{t0}^{t} (w'/w)(t') (1 + 2N~(t')) cos[2Theta(t) - 2Theta(t')] dt'``

    Stored samples up to ``t`` are integrated with Simpson weights; a final
    partial interval is handled by linear interpolation.  Assumes the pair
    correlation vanished at the first stored time.
    """
    if history.size == 0:
        raise ValueError("empty history")
    x = (t - history.t0) / history.dt
    if x < -1e-9 or x > history.size - 1 + 1e-9:
        raise ValueError(f"t={t} outside the stored history")
    k = min(int(math.floor(x + 1e-9)), history.size - 1)
    frac = x - k
    if frac < 1e-9:
        frac = 0.0

    w, wd, th, nt = history.omega, history.omega_dot, history.theta, history.n_tilde
    if frac > 0:
        lerp = lambda a: a[k] + frac * (a[k + 1] - a[k])
        w_t, wd_t, th_t = lerp(w), lerp(wd), lerp(th)
    else:
        w_t, wd_t, th_t = w[k], wd[k], th[k]

    source = wd[: k + 1] / w[: k + 1] * (1 + 2 * nt[: k + 1])
    integrand = source * np.cos(2 * th_t - 2 * th[: k + 1])
    total = 0.0
    if k >= 1:
        total = quadrature_weights(k + 1, history.dt) @ integrand
    if frac > 0:
        end_source = wd_t / w_t * (1 + 2 * (nt[k] + frac * (nt[k + 1] - nt[k])))
        total += 0.5 * frac * history.dt * (integrand[k] + end_source)
    return float(wd_t / (2 * w_t) * total)


# Adams-Bashforth / Adams-Moulton weights, newest rate first.
_AB = {1: [1.0], 2: [3 / 2, -1 / 2], 3: [23 / 12, -16 / 12, 5 / 12], 4: [55 / 24, -59 / 24, 37 / 24, -9 / 24]}
_AM = {1: [1 / 2, 1 / 2], 2: [5 / 12, 8 / 12, -1 / 12], 3: [9 / 24, 19 / 24, -5 / 24, 1 / 24]}


def integrate_qve_nonlocal(
    omega_path: Callable[[float], Tuple[float, float]],
    t0: float,
    t1: float,
    dt: float,
    n_init: float = 0.0,
    theta_path: Optional[Callable[[float], float]] = None,
    corrector_passes: int = 2,
) -> Tuple[np.ndarray, np.ndarray]:
    """March the nonlocal quantum Vlasov equation on a uniform grid.

    Adams-Bashforth predictor and Adams-Moulton corrector (up to 4th order);
    every rate evaluation re-integrates the full memory kernel, so the cost is
    quadratic in the number of steps.  The pair correlation is taken to vanish
    at ``t0``.

    Returns ``(times, N~)``.
    """
    n_steps = int(round((t1 - t0) / dt))
    if n_steps < 1 or abs(t0 + n_steps * dt - t1) > 1e-9 * max(1.0, abs(t1)):
        raise ValueError("(t1 - t0) must be a positive multiple of dt")
    times = t0 + dt * np.arange(n_steps + 1)
    if theta_path is not None:
        thetas = np.array([theta_path(t) for t in times])
    else:
        w_only = lambda t, y: np.array([omega_path(t)[0]])
        thetas = integrate_ode(w_only, [0.0], t0, t1, ToleranceSpec(1e-13, 1e-13), t_eval=times).states[:, 0]

    history = QVEHistory(t0, dt, n_steps + 1)
    w, wd = omega_path(times[0])
    history.append(w, wd, thetas[0], n_init)
    rates = [qve_nonlocal_rate(history, times[0])]
    numbers = [float(n_init)]
    for i in range(1, n_steps + 1):
        order = min(i, 4)
        pred = numbers[-1] + dt * sum(c * r for c, r in zip(_AB[order], rates[::-1]))
        w, wd = omega_path(times[i])
        history.append(w, wd, thetas[i], pred)
        am = _AM[min(i, 3)]
        for _ in range(max(1, corrector_passes)):
            r_new = qve_nonlocal_rate(history, times[i])
            corr = numbers[-1] + dt * (am[0] * r_new + sum(c * r for c, r in zip(am[1:], rates[::-1])))
            history.set_last_number(corr)
        rates.append(qve_nonlocal_rate(history, times[i]))
        numbers.append(corr)
    return times, np.array(numbers)


@dataclass(frozen=True)
class MomentumGrid:
    """Uniform ``(k_z, k_perp)`` grid with a hard frequency cutoff.

    Modes whose initial frequency exceeds ``cutoff`` (in units of the mass
    when built with ``m = 1``) are dropped.  The ``k_z`` range should be
    symmetric about the initial kinetic momentum so that charge neutrality
    holds by construction.
    """

    kz_min: float = -8.0
    kz_max: float = 8.0
    kz_count: int = 64
    kperp_max: float = 3.0
    kperp_count: int = 16
    cutoff: float = 20.0

    def __post_init__(self):
        if self.kz_count < 0 or self.kperp_count < 0:
            raise ValueError("grid counts must be >= 0")
        if self.kz_count > 1 and not self.kz_max > self.kz_min:
            raise ValueError("kz_max must exceed kz_min")
        if self.kperp_count > 1 and not self.kperp_max > 0:
            raise ValueError("kperp_max must be positive")
        if not self.cutoff > 0:
            raise ValueError("cutoff must be positive")

    def axes(self):
        kz = np.linspace(self.kz_min, self.kz_max, self.kz_count) if self.kz_count > 1 else np.full(self.kz_count, 0.5 * (self.kz_min + self.kz_max))
        kp = np.linspace(0.0, self.kperp_max, self.kperp_count) if self.kperp_count > 1 else np.full(self.kperp_count, self.kperp_max)
        return kz, kp

    def modes(self, field: BackgroundField):
        """Flattened ``(k_z, k_perp, weight)`` of the retained modes.

        ``weight`` is the quadrature weight of ``d^3k = 2 pi k_perp dk_perp dk_z``;
        a single-point axis gets unit weight.
        """
        kz, kp = self.axes()
        wz = quadrature_weights(kz.size, kz[1] - kz[0]) if kz.size > 1 else np.ones(kz.size)
        wp = quadrature_weights(kp.size, kp[1] - kp[0]) * 2 * np.pi * kp if kp.size > 1 else np.ones(kp.size)
        KZ, KP = np.meshgrid(kz, kp, indexing="ij")
        W = np.outer(wz, wp)
        keep = np.sqrt(_omega_sq(KZ, KP, field.A, field.e, field.m)) <= self.cutoff
        return KZ[keep], KP[keep], W[keep]


@dataclass
class ModeEnsemble:
    """Many modes stored as parallel arrays."""

    k_z: np.ndarray
    k_perp: np.ndarray
    weight: np.ndarray
    f: np.ndarray
    f_dot: np.ndarray
    theta: np.ndarray
    n_init: np.ndarray

    @classmethod
    def vacuum(cls, grid: MomentumGrid, field: BackgroundField, n_init: float = 0.0) -> "ModeEnsemble":
        kz, kp, w = grid.modes(field)
        om = np.sqrt(_omega_sq(kz, kp, field.A, field.e, field.m))
        f = 1 / np.sqrt(2 * om) + 0j
        return cls(kz, kp, w, f, -1j * om * f, np.zeros(kz.size), np.full(kz.size, float(n_init)))

    @classmethod
    def from_modes(cls, modes, weights=None) -> "ModeEnsemble":
        modes = list(modes)
        w = np.ones(len(modes)) if weights is None else np.asarray(weights, float)
        get = lambda name, dt=float: np.array([getattr(md, name) for md in modes], dtype=dt)
        return cls(get("k_z"), get("k_perp"), w, get("f", complex), get("f_dot", complex), get("theta"), get("n_init"))

    def __len__(self):
        return self.k_z.size

    def omega(self, field: BackgroundField) -> np.ndarray:
        return np.sqrt(_omega_sq(self.k_z, self.k_perp, field.A, field.e, field.m))

    def bogoliubov(self, field: BackgroundField):
        return bogoliubov_coefficients(self.f, self.f_dot, self.omega(field), self.theta)

    def n_tilde(self, field: BackgroundField) -> np.ndarray:
        _, beta = self.bogoliubov(field)
        return self.n_init + (1 + 2 * self.n_init) * np.abs(beta) ** 2

    def abs_corr(self, field: BackgroundField) -> np.ndarray:
        alpha, beta = self.bogoliubov(field)
        return (1 + 2 * self.n_init) * np.abs(alpha) * np.abs(beta)

    def wronskian_error(self) -> float:
        if len(self) == 0:
            return 0.0
        w = self.f * np.conj(self.f_dot) - np.conj(self.f) * self.f_dot
        return float(np.max(np.abs(w - 1j)))


def _current(k_z, k_perp, weight, f, n_init, A, e, m, vacuum_subtraction):
    p = k_z - e * A
    occ = np.abs(f) ** 2 * (1 + 2 * n_init)
    if vacuum_subtraction:
        occ = occ - 0.5 / np.sqrt(p * p + k_perp * k_perp + m * m)
    return 2 * e * np.sum(weight * p * occ)


def mean_current(modes: ModeEnsemble, field: BackgroundField, vacuum_subtraction: bool = True) -> float:
    """``j = 2e int d^3k (k_z - eA) |f|^2 (1 + 2 N_k)`` over the grid.

    With ``vacuum_subtraction`` the adiabatic zero-point piece
    ``1/(2 omega)`` is removed from ``|f|^2 (1 + 2 N_k)``.  It integrates to
    zero over any range symmetric in kinetic momentum, but on a fixed
    canonical-momentum grid it otherwise acts as a cutoff-squared photon mass.
    No charge renormalization is performed either way.
    """
    if len(modes) == 0:
        raise ValueError("no modes: current needs a non-empty grid")
    return float(
        _current(modes.k_z, modes.k_perp, modes.weight, modes.f, modes.n_init, field.A, field.e, field.m, vacuum_subtraction)
    )


@dataclass
class BackreactionSystem:
    t: float
    field: BackgroundField
    modes: ModeEnsemble
    vacuum_subtraction: bool = True

    def current(self) -> float:
        if len(self.modes) == 0:
            return 0.0
        return mean_current(self.modes, self.field, self.vacuum_subtraction)


def system_energy(system: BackreactionSystem) -> float:
    """``E^2/2 + 2 sum_k w_k omega_k (N~_k + 1/2)``; the 1/2 is dropped under vacuum subtraction.

    The factor 2 counts particles and antiparticles, matching the ``2e`` of
    the current.  This combination is an exact invariant of the coupled
    Maxwell/mode equations.
    """
    fld, md = system.field, system.modes
    energy = 0.5 * fld.E**2
    if len(md):
        om = md.omega(fld)
        occupation = md.n_tilde(fld) + (0.0 if system.vacuum_subtraction else 0.5)
        energy += 2 * float(np.sum(md.weight * om * occupation))
    return energy


def backreaction_step(system: BackreactionSystem, dt: float, tol: ToleranceSpec = DEFAULT_TOL) -> BackreactionSystem:
    """Advance field and all modes together through ``A'' = j`` for a time ``dt``."""
    if not dt > 0:
        raise ValueError("dt must be positive")
    fld, md = system.field, system.modes
    n = len(md)
    e, m = fld.e, fld.m
    if n == 0:
        A = fld.A + fld.A_dot * dt
        return BackreactionSystem(system.t + dt, replace(fld, A=A), md, system.vacuum_subtraction)

    kz, kp, w, n0 = md.k_z, md.k_perp, md.weight, md.n_init
    sub = system.vacuum_subtraction

    def rhs(t, y):
        A = y[0].real
        f = y[2 : 2 + n]
        w2 = _omega_sq(kz, kp, A, e, m)
        out = np.empty_like(y)
        out[0] = y[1]
        out[1] = _current(kz, kp, w, f, n0, A, e, m, sub)
        out[2 : 2 + n] = y[2 + n : 2 + 2 * n]
        out[2 + n : 2 + 2 * n] = -w2 * f
        out[2 + 2 * n :] = np.sqrt(w2)
        return out

    y0 = np.concatenate([[fld.A, fld.A_dot], md.f, md.f_dot, md.theta]).astype(complex)
    y = integrate_ode(rhs, y0, system.t, system.t + dt, tol, t_eval=[system.t + dt]).final
    new_modes = replace(md, f=y[2 : 2 + n].copy(), f_dot=y[2 + n : 2 + 2 * n].copy(), theta=y[2 + 2 * n :].real.copy())
    new_field = replace(fld, A=float(y[0].real), A_dot=float(y[1].real))
    return BackreactionSystem(system.t + dt, new_field, new_modes, sub)


def density_matrix_diag(n_tilde: float, l_max: int):
    """Pair-number probabilities ``rho_2l = N~^l / (1 + N~)^(l+1)`` for ``l = 0..l_max``.

    Returns ``(rho, tail_mass)`` with ``tail_mass = 1 - sum(rho)``, which is
    exactly ``(N~/(1 + N~))^(l_max+1)``.
    """
    if n_tilde < 0:
        raise ValueError("n_tilde must be >= 0")
    ell = np.arange(int(l_max) + 1)
    ratio = n_tilde / (1 + n_tilde)
    rho = ratio**ell / (1 + n_tilde)
    return rho, float(ratio ** (int(l_max) + 1))


def mode_entropy(n_tilde):
    """Entropy of the diagonal pair density matrix, ``(1+N)ln(1+N) - N ln N``."""
    n = np.asarray(n_tilde, dtype=float)
    if np.any(n < 0):
        raise ValueError("n_tilde must be >= 0")
    s = xlogy(1 + n, 1 + n) - xlogy(n, n)
    return float(s) if s.ndim == 0 else s


def entropy_rate(n_tilde, n_tilde_dot):
    """``dS/dt = sum ln((1 + N)/N) dN/dt``; modes with ``N = 0`` contribute 0."""
    n = np.asarray(n_tilde, dtype=float)
    nd = np.asarray(n_tilde_dot, dtype=float)
    with np.errstate(divide="ignore"):
        factor = np.where(n > 0, np.log1p(1 / np.where(n > 0, n, 1.0)), 0.0)
    return float(np.sum(factor * nd))
