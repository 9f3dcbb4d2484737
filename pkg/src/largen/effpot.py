"""Static large-N effective potential of the O(N) oscillator model.

Leading order (LO) is parametric in the auxiliary field ``chi``.  At
next-to-leading order (NLO) ``chi`` solves a gap equation that involves the
auxiliary masses ``m_+-``; where the gap equation has no positive root the
NLO potential does not exist.  The edge of that region is ``y_min(N)`` and
the smallest ``N`` with ``y_min = 0`` is the threshold ``N_c``.
"""
from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, replace
from typing import NamedTuple, Optional, Sequence

import numpy as np
from scipy.optimize import minimize_scalar

from .numerics import DEFAULT_TOL, NumericalError, ToleranceSpec, find_root
from .on_model import LargeNParams

__all__ = [
    "AuxiliaryMasses",
    "ComplexAuxiliaryMasses",
    "GapSolution",
    "GapSolveFailed",
    "DomainEmpty",
    "NoThreshold",
    "LOPoint",
    "v_eff_lo",
    "chi_lo",
    "auxiliary_masses",
    "mass_sum",
    "mass_sum_derivative",
    "gap_residual",
    "gap_minimum",
    "solve_gap",
    "v_eff_nlo",
    "find_y_min",
    "scan_y_min",
    "scan_Nc",
]

CHI_FLOOR = 1e-12
CHI_CEILING = 100.0
SCAN_POINTS = 400


class ComplexAuxiliaryMasses(ValueError):
    pass


class GapSolveFailed(NumericalError):
    pass


class DomainEmpty(NumericalError):
    pass


class NoThreshold(ValueError):
    pass


class LOPoint(NamedTuple):
    v_per_N: float
    y_squared: float
    physical: bool


@dataclass(frozen=True)
class AuxiliaryMasses:
    m_plus: float
    m_minus: float
    b: float
    c: float


@dataclass(frozen=True)
class GapSolution:
    y: float
    chi: float
    v_eff_per_N: float
    defined: bool
    branch_info: str
    residual: float = math.nan


def v_eff_lo(chi: float, params: LargeNParams) -> LOPoint:
    """LO potential ``V/N = chi^2/(2g) + sqrt(chi)/4`` and ``y^2(chi)``.

    ``y^2`` can come out negative for small ``chi``; that branch is returned
    with ``physical=False``.
    """
    if not chi > 0:
        raise ValueError(f"chi out of domain: chi must be > 0, got {chi}")
    g = params.g
    if not g > 0:
        raise ValueError("the LO parametric form needs g > 0")
    root = math.sqrt(chi)
    v = chi**2 / (2 * g) + root / 4
    y2 = params.y0**2 + 2 * chi / g - 1 / (2 * root)
    return LOPoint(v, y2, y2 >= 0)


def chi_lo(y: float, params: LargeNParams) -> float:
    """LO gap solution: positive root of ``chi = (g/2)(y^2 - y0^2) + g/(4 sqrt(chi))``."""
    g = params.g
    if not g > 0:
        return 0.0
    a = 0.5 * g * (y * y - params.y0**2)
    # q = sqrt(chi) solves q^3 - a q - g/4 = 0, which has exactly one positive root
    cubic = lambda q: q**3 - a * q - g / 4
    hi = 1.0
    while cubic(hi) < 0:
        hi *= 2
    q = find_root(cubic, 0.0, hi, ToleranceSpec(1e-15, 1e-15, 10_000))
    return q * q


def _b_c(y, chi, g):
    root = np.sqrt(chi)
    b = 2.5 * chi + 0.5 * g * (y * y + 1 / (2 * root))
    c = 4 * chi**2 + g * (4 * y * y * chi + 0.5 * root)
    return b, c


def auxiliary_masses(y: float, chi: float, g: float) -> AuxiliaryMasses:
    """``m_+-^2 = b +- sqrt(b^2 - c)``.

    The discriminant is a sum of squares,
    ``b^2 - c = (3 chi/2 - g y^2/2 + g/(4 sqrt(chi)))^2 + g^2 y^2 / (2 sqrt(chi))``,
    so the masses turn complex only through ``m_-^2 < 0``.  That needs
    ``c < 0`` and hence a negative coupling.

    Raises
    ------
    ComplexAuxiliaryMasses
        If ``b^2 - c < 0`` (kept as a guard against rounding) or ``m_-^2 < 0``.
    """
    if not chi > 0:
        raise ValueError(f"chi out of domain: chi must be > 0, got {chi}")
    b, c = _b_c(y, chi, g)
    disc = b * b - c
    if disc < 0:
        raise ComplexAuxiliaryMasses(f"complex auxiliary masses: b^2 - c = {disc:.6g} < 0")
    root = math.sqrt(disc)
    mp2, mm2 = b + root, b - root
    if mm2 < 0:
        # b - sqrt(b^2 - c) < 0 happens only for c < 0
        raise ComplexAuxiliaryMasses(f"complex auxiliary masses: m_-^2 = {mm2:.6g} < 0")
    return AuxiliaryMasses(math.sqrt(mp2), math.sqrt(mm2), b, c)


def mass_sum(y, chi, g):
    """``m_+ + m_-`` (vectorized, NaN where the masses are complex)."""
    b, c = _b_c(y, chi, g)
    with np.errstate(invalid="ignore"):
        root = np.sqrt(b * b - c)
        return np.sqrt(b + root) + np.sqrt(b - root)


def mass_sum_derivative(y, chi, g):
    """``d(m_+ + m_-)/d chi`` by central difference with step ``1e-6 * chi``."""
    h = 1e-6 * chi
    return (mass_sum(y, chi + h, g) - mass_sum(y, chi - h, g)) / (2 * h)


def gap_residual(chi, y: float, params: LargeNParams):
    """Gap equation as ``F(chi) = 0``.

    ``F = chi - (g/2)(y^2 - y0^2) - g(N-3)/(4N sqrt(chi)) - (g/2N) d(m_+ + m_-)/d chi``
    """
    N, g = params.N, params.g
    chi = np.asarray(chi, dtype=float)
    return (
        chi
        - 0.5 * g * (y * y - params.y0**2)
        - g * (N - 3) / (4 * N * np.sqrt(chi))
        - g / (2 * N) * mass_sum_derivative(y, chi, g)
    )


def _upper_chi(y, params, chi_hi):
    hi = chi_hi
    while gap_residual(hi, y, params) <= 0:
        hi *= 2
        if hi > 1e12:
            raise GapSolveFailed("gap solve failed: residual never turns positive at large chi")
    return hi


def gap_minimum(y: float, params: LargeNParams, chi_range=(CHI_FLOOR, CHI_CEILING)):
    """Location and value of the minimum of the gap residual over ``chi``.

    The residual grows without bound at both ends of ``(0, inf)`` for finite
    N, so a positive root exists exactly when this minimum is <= 0.
    Returns ``(chi_star, F_min, log_grid, F_on_grid)``.
    """
    lo = chi_range[0]
    if not (0 < lo < chi_range[1]):
        raise ValueError(f"chi scan grid empty: need 0 < chi_min < chi_max, got {tuple(chi_range)}")
    hi = _upper_chi(y, params, chi_range[1])
    s = np.linspace(math.log(lo), math.log(hi), SCAN_POINTS)
    f = gap_residual(np.exp(s), y, params)
    i = int(np.nanargmin(f))
    a, b = s[max(i - 1, 0)], s[min(i + 1, s.size - 1)]
    if a == b:
        return math.exp(s[i]), float(f[i]), s, f
    res = minimize_scalar(
        lambda x: float(gap_residual(math.exp(x), y, params)),
        bounds=(a, b),
        method="bounded",
        options={"xatol": 1e-12},
    )
    if res.fun < f[i]:
        return math.exp(res.x), float(res.fun), s, f
    return math.exp(s[i]), float(f[i]), s, f


def _v_nlo(y, chi, params):
    N, g = params.N, params.g
    root = math.sqrt(chi)
    m = auxiliary_masses(y, chi, g)
    return (
        0.5 * chi * (y * y - params.y0**2)
        - chi**2 / (2 * g)
        + root / 2
        + (m.m_plus + m.m_minus - 3 * root) / (2 * N)
    )


def solve_gap(
    y: float,
    params: LargeNParams,
    tol: ToleranceSpec = DEFAULT_TOL,
    chi_range=(CHI_FLOOR, CHI_CEILING),
) -> GapSolution:
    """Solve the NLO gap equation for ``chi`` at fixed ``y``.

    Among several positive roots the one closest to the LO solution is
    returned.  ``defined=False`` is a physics outcome (no admissible root),
    not an error.

    Raises
    ------
    GapSolveFailed
        The root iteration itself broke down.
    """
    y = float(y)
    if params.g == 0:
        return GapSolution(y, 0.0, math.nan, False, "chi <= 0: free theory forces chi = 0")
    chi_ref = chi_lo(y, params)
    chi_star, f_min, s, f = gap_minimum(y, params, chi_range)
    if not f_min <= 0:
        return GapSolution(y, chi_star, math.nan, False, f"no real chi root: min residual {f_min:.3e} > 0")

    fn = lambda x: float(gap_residual(math.exp(x), y, params))
    root_tol = ToleranceSpec(tol.abs_tol, min(tol.rel_tol, 1e-14), tol.max_steps)
    # sign changes on the scan grid, plus the two sides of a shallow dip
    brackets = []
    sign = np.sign(f)
    for k in np.nonzero(sign[:-1] * sign[1:] < 0)[0]:
        brackets.append((s[k], s[k + 1]))
    x_star = math.log(chi_star)
    if not brackets:
        left = s[s < x_star]
        right = s[s > x_star]
        if left.size:
            brackets.append((left[-1], x_star))
        if right.size:
            brackets.append((x_star, right[0]))
    roots = []
    for a, b in brackets:
        try:
            roots.append(math.exp(find_root(fn, a, b, root_tol)))
        except NumericalError as exc:
            raise GapSolveFailed(f"gap solve failed: {exc}") from exc
    if not roots:
        raise GapSolveFailed("gap solve failed: no bracket could be refined")
    chi = min(roots, key=lambda r: abs(r - chi_ref))
    try:
        v = _v_nlo(y, chi, params)
    except ComplexAuxiliaryMasses as exc:
        return GapSolution(y, chi, math.nan, False, f"b^2-c < 0: {exc}")
    residual = float(gap_residual(chi, y, params))
    info = f"{len(roots)} candidate root(s); kept the one closest to LO chi={chi_ref:.6g}"
    return GapSolution(y, chi, v, True, info, residual)


def v_eff_nlo(y: float, params: LargeNParams, tol: ToleranceSpec = DEFAULT_TOL) -> GapSolution:
    """NLO ``V/N`` at ``y`` with ``chi`` from :func:`solve_gap`.

    ``V/N = (chi/2)(y^2 - y0^2) - chi^2/(2g) + sqrt(chi)/2 + (m_+ + m_- - 3 sqrt(chi))/(2N)``
    """
    return solve_gap(y, params, tol)


def _min_residual(y, params, chi_range=(CHI_FLOOR, CHI_CEILING)):
    return gap_minimum(y, params, chi_range)[1]


def find_y_min(
    params: LargeNParams,
    tol: ToleranceSpec = DEFAULT_TOL,
    y_hi: float = 5.0,
    chi_range=(CHI_FLOOR, CHI_CEILING),
) -> float:
    """Smallest ``y`` at which the NLO potential exists on ``[0, y_hi]``.

    The gap-residual minimum decreases with ``y``; its zero crossing is the
    boundary.  Returns 0 when the potential exists down to the origin.
    """
    if params.g == 0:
        raise DomainEmpty("domain empty up to y_hi: free theory has no positive chi")
    f0 = _min_residual(0.0, params, chi_range)
    if f0 <= 0:
        return 0.0
    f_hi = _min_residual(y_hi, params, chi_range)
    if f_hi > 0:
        raise DomainEmpty(f"domain empty up to y_hi={y_hi}")
    return find_root(lambda y: _min_residual(y, params, chi_range), 0.0, y_hi, tol)


def _y_min_at(args):
    template, N, tol, y_hi, chi_range = args
    return find_y_min(replace(template, N=float(N)), tol, y_hi, chi_range)


def scan_y_min(
    template: LargeNParams,
    Ns: Sequence[float],
    tol: ToleranceSpec = DEFAULT_TOL,
    y_hi: float = 5.0,
    workers: int = 1,
    chi_range=(CHI_FLOOR, CHI_CEILING),
) -> np.ndarray:
    """``y_min(N)`` over a grid of N; order of results follows ``Ns``."""
    jobs = [(template, N, tol, y_hi, tuple(chi_range)) for N in Ns]
    if workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            return np.array(list(pool.map(_y_min_at, jobs)))
    return np.array([_y_min_at(j) for j in jobs])


def scan_Nc(
    template: LargeNParams,
    N_lo: float,
    N_hi: float,
    tol: ToleranceSpec = DEFAULT_TOL,
    chi_range=(CHI_FLOOR, CHI_CEILING),
) -> float:
    """Smallest ``N`` in ``[N_lo, N_hi]`` with ``y_min(N) = 0``.

    ``y_min(N) = 0`` exactly when the gap residual at ``y = 0`` dips to zero,
    so the threshold is the root in ``N`` of that minimum.

    Raises
    ------
    NoThreshold
        Unless ``y_min(N_lo) > 0`` and ``y_min(N_hi) = 0``.
    """
    at_origin = lambda N: _min_residual(0.0, replace(template, N=float(N)), chi_range)
    f_lo, f_hi = at_origin(N_lo), at_origin(N_hi)
    if not (f_lo > 0 and f_hi <= 0):
        raise NoThreshold(
            f"no threshold in range [{N_lo}, {N_hi}]: y_min(N_lo) {'> 0' if f_lo > 0 else '= 0'}, "
            f"y_min(N_hi) {'> 0' if f_hi > 0 else '= 0'}"
        )
    # the residual scale shrinks like 1/N, so bisect on the N axis itself
    n_tol = ToleranceSpec(1e-300, tol.rel_tol, tol.max_steps)
    return find_root(at_origin, N_lo, N_hi, n_tol)
