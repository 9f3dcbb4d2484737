"""Gaussian classicality diagnostics for single modes.

A mode amplitude ``f`` (Wronskian ``i``, hbar = 1) in a thermal ensemble at
``theta0 = omega/T`` has field and momentum variances ``|f|^2 coth(theta0/2)``
and ``|f_dot|^2 coth(theta0/2)``.  From these we form the uncertainty
function ``U`` and the x-p correlation coefficient.

Both are necessary-only indicators of classical behaviour: a large ``U`` or
``|rho_xp| -> 1`` says the Wigner function is broad or stretched along a line
in phase space, not that the mode has decohered.
"""
from __future__ import annotations

import cmath
import math
from dataclasses import dataclass

import numpy as np

__all__ = [
    "NECESSARY_ONLY_NOTE",
    "VACUUM",
    "ThermalSpec",
    "GaussianCovariance",
    "mode_variances",
    "uncertainty_function",
    "squeeze_parameters",
    "correlation_coefficient",
]

NECESSARY_ONLY_NOTE = (
    "U and rho_xp are necessary-only classicality indicators; "
    "no decoherence mechanism is modelled"
)

BOGOLIUBOV_SLACK = 1e-8


@dataclass(frozen=True)
class ThermalSpec:
    """Initial ``omega/T`` of a mode; ``inf`` (the default) is the pure vacuum."""

    theta0: float = math.inf

    def __post_init__(self):
        if not self.theta0 > 0:
            raise ValueError("theta0 must be > 0 (use inf for the vacuum)")

    @property
    def coth_factor(self) -> float:
        if math.isinf(self.theta0):
            return 1.0
        return 1.0 / math.tanh(0.5 * self.theta0)


VACUUM = ThermalSpec()


@dataclass(frozen=True)
class GaussianCovariance:
    var_x: float
    var_p: float
    cov_xp: float = 0.0

    def __post_init__(self):
        if not (self.var_x > 0 and self.var_p > 0):
            raise ValueError("variances must be positive")

    @property
    def determinant(self) -> float:
        return self.var_x * self.var_p - self.cov_xp**2

    def is_physical(self, slack: float = 1e-10) -> bool:
        """Robertson-Schrodinger bound ``det >= 1/4``."""
        return self.determinant >= 0.25 * (1 - slack)


def mode_variances(mode, thermal: ThermalSpec = VACUUM) -> GaussianCovariance:
    """Covariance of a mode from its amplitude; ``mode`` needs ``f`` and ``f_dot``.

    The box-volume prefactor is normalized to one.
    """
    c = thermal.coth_factor
    f, fd = complex(mode.f), complex(mode.f_dot)
    return GaussianCovariance(abs(f) ** 2 * c, abs(fd) ** 2 * c, (f * fd.conjugate()).real * c)


def uncertainty_function(cov: GaussianCovariance) -> float:
    """``U = sqrt(var_x var_p) / (1/2)``; equal to 1 for a minimal packet."""
    return 2.0 * math.sqrt(cov.var_x * cov.var_p)


def squeeze_parameters(alpha: complex, beta: complex, theta: float = 0.0):
    """Squeeze amplitude and phase from a Bogoliubov pair.

    ``|alpha| = cosh r``, ``|beta| = sinh r`` and
    ``alpha conj(beta) exp(-2i theta) = -sinh r cosh r exp(i phase)``.
    The phase is reported as 0 when ``beta = 0``.

    Raises
    ------
    ValueError
        If ``|alpha|^2 - |beta|^2`` differs from 1 by more than 1e-8.
    """
    a, b = complex(alpha), complex(beta)
    norm = abs(a) ** 2 - abs(b) ** 2
    if abs(norm - 1) > BOGOLIUBOV_SLACK:
        raise ValueError(f"not a Bogoliubov pair: |alpha|^2 - |beta|^2 = {norm:.12g}")
    r = math.asinh(abs(b))
    if b == 0:
        return r, 0.0
    return r, cmath.phase(-a * b.conjugate() * cmath.exp(-2j * theta))


def correlation_coefficient(cov: GaussianCovariance) -> float:
    """``rho_xp = cov_xp / sqrt(var_x var_p)``, clipped to [-1, 1] against rounding."""
    return float(np.clip(cov.cov_xp / math.sqrt(cov.var_x * cov.var_p), -1.0, 1.0))
