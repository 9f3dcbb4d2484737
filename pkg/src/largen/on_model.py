"""Exact radial dynamics of the quantum-mechanical O(N) model.

The N-component wavefunction of the quantum roll depends only on the radius.
Writing ``psi = r**((1 - N)/2) * phi`` and rescaling ``r**2 = N y**2`` turns
the problem into a one-dimensional Schroedinger equation for ``phi(y)``:

    i dphi/dtt = [-(1/2N^2) d^2/dy^2 + u(y, N)] phi,   tt = N t,
    u(y, N) = (N-1)(N-3) / (8 N^2 y^2) + (g/8) (y^2 - y0^2)^2.

Time in this module is always the rescaled ``tt`` unless stated otherwise.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Union

import numpy as np
from scipy.linalg import eigh_tridiagonal

from .numerics import NumericalError, TridiagonalLU, quadrature

__all__ = [
    "LargeNParams",
    "RadialGrid",
    "RadialWavefunction",
    "RollSeries",
    "UnderResolvedState",
    "UnitarityLost",
    "StepUnderResolved",
    "effective_radial_potential",
    "unscaled_radial_potential",
    "quantum_roll_initial_state",
    "harmonic_ground_state",
    "evolve_quantum_roll",
    "evolve_radial_unscaled",
    "moment_y2",
]

PotentialLike = Union[np.ndarray, Callable[[np.ndarray], np.ndarray]]

NORM_DRIFT_LIMIT = 1e-6
WALL_LIMIT = 1e-12


class UnderResolvedState(NumericalError):
    pass


class UnitarityLost(NumericalError):
    pass


class StepUnderResolved(NumericalError):
    pass


@dataclass(frozen=True)
class LargeNParams:
    """Component count ``N``, coupling ``g`` and rescaled minimum ``y0``.

    ``N`` is real so that thresholds can be located on a continuum.  ``g = 0``
    (free theory) is accepted as a degenerate limit.
    """

    N: float
    g: float
    y0: float = 1.0

    def __post_init__(self):
        for name in ("N", "g", "y0"):
            if not math.isfinite(getattr(self, name)):
                raise ValueError(f"{name} must be finite")
        if self.N < 1:
            raise ValueError(f"N must be >= 1, got {self.N}")
        if self.g < 0:
            raise ValueError(f"g must be >= 0, got {self.g}")
        if self.y0 < 0:
            raise ValueError(f"y0 must be >= 0, got {self.y0}")

    @property
    def r0(self) -> float:
        return math.sqrt(self.N) * self.y0


@dataclass(frozen=True)
class RadialGrid:
    y_max: float = 5.0
    points: int = 1001

    def __post_init__(self):
        if not self.y_max > 0:
            raise ValueError("y_max must be positive")
        if int(self.points) < 16:
            raise ValueError("a radial grid needs at least 16 points")

    @property
    def spacing(self) -> float:
        return self.y_max / (self.points - 1)

    @property
    def y(self) -> np.ndarray:
        return np.linspace(0.0, self.y_max, self.points)

    def scaled(self, factor: float) -> "RadialGrid":
        """Grid over ``[0, factor * y_max]`` with the same point count."""
        return RadialGrid(self.y_max * factor, self.points)


@dataclass
class RadialWavefunction:
    grid: RadialGrid
    amplitudes: np.ndarray
    time: float = 0.0

    def __post_init__(self):
        amp = np.array(self.amplitudes, dtype=complex)
        if amp.shape != (self.grid.points,):
            raise ValueError("amplitude count does not match the grid")
        amp[0] = 0.0
        amp[-1] = 0.0
        self.amplitudes = amp

    def norm(self) -> float:
        """Discrete ``int |phi|^2 dy``; the quantity Crank-Nicolson conserves."""
        return float(self.grid.spacing * np.sum(np.abs(self.amplitudes) ** 2))

    def normalized(self) -> "RadialWavefunction":
        n = self.norm()
        if not n > 0:
            raise ValueError("cannot normalize a vanishing wavefunction")
        return RadialWavefunction(self.grid, self.amplitudes / math.sqrt(n), self.time)


@dataclass
class RollSeries:
    """Observable time series of a radial evolution, one row per step."""

    times: np.ndarray
    y2: np.ndarray
    norm: np.ndarray
    energy: np.ndarray
    final: RadialWavefunction
    wall_max: float = 0.0
    notes: list = field(default_factory=list)

    def rows(self):
        return zip(self.times, self.y2, self.norm, self.energy)


def effective_radial_potential(params: LargeNParams, grid: RadialGrid) -> np.ndarray:
    """Rescaled radial potential ``u(y, N)`` sampled on ``grid``.

    The ``y = 0`` node gets 0.0: the wavefunction is pinned there, so the
    centrifugal singularity is never multiplied by a nonzero amplitude.
    """
    y = grid.y
    N, g = params.N, params.g
    u = np.zeros_like(y)
    inner = y[1:]
    u[1:] = (N - 1) * (N - 3) / (8 * N**2 * inner**2) + g / 8 * (inner**2 - params.y0**2) ** 2
    return u


def unscaled_radial_potential(params: LargeNParams, grid: RadialGrid) -> np.ndarray:
    """``U(r) = (N-1)(N-3)/(8 r^2) + g/(8N) (r^2 - r0^2)^2`` on an r grid."""
    r = grid.y
    N, g = params.N, params.g
    U = np.zeros_like(r)
    U[1:] = (N - 1) * (N - 3) / (8 * r[1:] ** 2) + g / (8 * N) * (r[1:] ** 2 - params.r0**2) ** 2
    return U


def quantum_roll_initial_state(params: LargeNParams, grid: RadialGrid, width: float) -> RadialWavefunction:
    """Normalized packet ``phi ~ y**((N-1)/2) * exp(-N y^2 / (4 width^2))``.

    It sits on top of the potential hump at the origin and has the
    ``y**((N-1)/2)`` behaviour that keeps ``psi`` regular there.

    Raises
    ------
    UnderResolvedState
        If fewer than 8 grid points carry 99% of the norm.
    """
    if not width > 0:
        raise ValueError("width must be positive")
    y = grid.y
    N = params.N
    log_amp = np.full(y.shape, -np.inf)
    inner = y[1:]
    log_amp[1:] = 0.5 * (N - 1) * np.log(inner) - N * inner**2 / (4 * width**2)
    log_amp[-1] = -np.inf
    peak = np.max(log_amp)
    if not np.isfinite(peak):
        raise UnderResolvedState("under-resolved initial state: packet vanishes on the grid")
    amp = np.exp(log_amp - peak)
    prob = np.sort(amp**2)[::-1]
    carrying = int(np.searchsorted(np.cumsum(prob) / prob.sum(), 0.99) + 1)
    if carrying < 8:
        raise UnderResolvedState(
            f"under-resolved initial state: only {carrying} grid points carry 99% of the norm"
        )
    return RadialWavefunction(grid, amp).normalized()


def _interior_hamiltonian(potential: np.ndarray, kinetic: float, h: float):
    """Tridiagonal pieces of ``-kinetic d^2/dy^2 + V`` on interior nodes."""
    off = -kinetic / h**2
    diag = 2 * kinetic / h**2 + potential[1:-1]
    n = diag.size
    return np.full(n - 1, off), diag, np.full(n - 1, off)


def harmonic_ground_state(grid: RadialGrid, potential: np.ndarray, N: float = 1.0) -> RadialWavefunction:
    """Lowest eigenvector of the discrete radial Hamiltonian for ``potential``."""
    lo, diag, _ = _interior_hamiltonian(np.asarray(potential, float), 1 / (2 * N**2), grid.spacing)
    _, vec = eigh_tridiagonal(diag, lo, select="i", select_range=(0, 0))
    amp = np.zeros(grid.points)
    amp[1:-1] = vec[:, 0]
    return RadialWavefunction(grid, amp).normalized()


def moment_y2(state: RadialWavefunction) -> float:
    """``<y^2> = int y^2 |phi|^2 dy / int |phi|^2 dy`` by Simpson quadrature."""
    p = np.abs(state.amplitudes) ** 2
    h = state.grid.spacing
    return float(quadrature(state.grid.y**2 * p, h) / quadrature(p, h))


def _crank_nicolson(
    state: RadialWavefunction,
    potential: np.ndarray,
    kinetic: float,
    dt: float,
    steps: int,
    y2_scale: float = 1.0,
    phase_error_limit: float = 0.1,
    sample_every: int = 1,
) -> RollSeries:
    if not dt > 0:
        raise ValueError(f"invalid step: dt must be positive, got {dt}")
    steps = int(steps)
    if steps < 0:
        raise ValueError("steps must be non-negative")
    sample_every = max(1, int(sample_every))
    grid = state.grid
    h = grid.spacing
    lo, diag, up = _interior_hamiltonian(potential, kinetic, h)

    phi = state.amplitudes[1:-1].copy()

    def apply_h(v):
        out = diag * v
        out[1:] += lo * v[:-1]
        out[:-1] += up * v[1:]
        return out

    def observables(v):
        nrm = h * np.vdot(v, v).real
        hv = apply_h(v)
        energy = h * np.vdot(v, hv).real / nrm
        full = np.zeros(grid.points, dtype=complex)
        full[1:-1] = v
        return nrm, energy, full

    # Evolve with H - <H>: the dropped global phase is unobservable, and the
    # Cayley phase error, ~ (E dt)^3 / 12 per step, then tracks the spread.
    hv = apply_h(phi)
    nrm0 = np.vdot(phi, phi).real
    shift = np.vdot(phi, hv).real / nrm0
    spread = math.sqrt(max(np.vdot(hv, hv).real / nrm0 - shift**2, 0.0))
    phase_error = steps * (spread * dt) ** 3 / 12
    if phase_error > phase_error_limit:
        raise StepUnderResolved(
            f"time step under-resolved: estimated accumulated phase error {phase_error:.3g} "
            f"exceeds {phase_error_limit:g} (dt={dt:g}, energy spread {spread:.3g})"
        )

    shifted = diag - shift
    a = TridiagonalLU(0.5j * dt * lo, 1 + 0.5j * dt * shifted, 0.5j * dt * up)
    b_diag = 1 - 0.5j * dt * shifted
    b_off = -0.5j * dt * lo[0] if lo.size else 0.0

    n0, e0, full = observables(phi)
    times = [state.time]
    y2 = [y2_scale * moment_y2(RadialWavefunction(grid, full))]
    norms = [n0]
    energies = [e0]
    wall_max = float(np.abs(phi[-1]) ** 2 / n0)

    for step in range(1, steps + 1):
        rhs = b_diag * phi
        rhs[1:] += b_off * phi[:-1]
        rhs[:-1] += b_off * phi[1:]
        phi = a.solve(rhs)
        wall_max = max(wall_max, float(np.abs(phi[-1]) ** 2 / n0))
        if step % sample_every == 0 or step == steps:
            nrm, en, full = observables(phi)
            if not math.isfinite(nrm) or abs(nrm - n0) > NORM_DRIFT_LIMIT * n0:
                raise UnitarityLost(f"unitarity lost: norm drifted from {n0:.17g} to {nrm:.17g}")
            times.append(state.time + step * dt)
            y2.append(y2_scale * moment_y2(RadialWavefunction(grid, full)))
            norms.append(nrm)
            energies.append(en)

    full = np.zeros(grid.points, dtype=complex)
    full[1:-1] = phi
    series = RollSeries(
        np.array(times),
        np.array(y2),
        np.array(norms),
        np.array(energies),
        RadialWavefunction(grid, full, state.time + steps * dt),
        wall_max,
    )
    if wall_max >= WALL_LIMIT:
        series.notes.append(f"wall contamination: max |phi(y_max^-)|^2 = {wall_max:.3g}")
    return series


def _resolve_potential(potential: Optional[PotentialLike], grid: RadialGrid, default: np.ndarray) -> np.ndarray:
    if potential is None:
        return default
    if callable(potential):
        values = np.asarray(potential(grid.y), dtype=float)
    else:
        values = np.asarray(potential, dtype=float)
    if values.shape != (grid.points,):
        raise ValueError("potential override must match the grid")
    return values


def evolve_quantum_roll(
    state: RadialWavefunction,
    params: LargeNParams,
    dt: float,
    steps: int,
    potential: Optional[PotentialLike] = None,
    phase_error_limit: float = 0.1,
    sample_every: int = 1,
) -> RollSeries:
    """Crank-Nicolson evolution in rescaled variables ``(y, tt = N t)``.

    Parameters
    ----------
    state : RadialWavefunction
    params : LargeNParams
    dt : float
        Step in rescaled time.
    steps : int
    potential : array or callable, optional
        Replaces ``u(y, N)``; used for free-particle and harmonic checks.
    phase_error_limit : float
        Largest tolerated estimate of the accumulated Cayley phase error.
    sample_every : int
        Record observables every this many steps.

    Returns
    -------
    RollSeries
        ``times``, ``<y^2>``, norm and energy.  ``wall_max`` is the largest
        relative weight seen next to the hard wall at ``y_max``.

    Raises
    ------
    ValueError
        ``dt <= 0`` ("invalid step").
    UnitarityLost
        Norm drifts by more than 1e-6 relative.
    StepUnderResolved
        ``dt`` too coarse for the energy content of the state.
    """
    u = _resolve_potential(potential, state.grid, effective_radial_potential(params, state.grid))
    return _crank_nicolson(
        state, u, 1 / (2 * params.N**2), dt, steps,
        phase_error_limit=phase_error_limit, sample_every=sample_every,
    )


def evolve_radial_unscaled(
    state: RadialWavefunction,
    params: LargeNParams,
    dt: float,
    steps: int,
    phase_error_limit: float = 0.1,
    sample_every: int = 1,
) -> RollSeries:
    """Same dynamics in unscaled ``(r, t)``: ``i dphi/dt = [-1/2 d^2/dr^2 + U(r)] phi``.

    The returned ``y2`` column holds ``<r^2>``.
    """
    U = unscaled_radial_potential(params, state.grid)
    return _crank_nicolson(
        state, U, 0.5, dt, steps,
        phase_error_limit=phase_error_limit, sample_every=sample_every,
    )
