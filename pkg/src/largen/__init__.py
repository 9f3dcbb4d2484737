"""Numerics for the large-N O(N) oscillator and for pair creation in electric fields.

Submodules
----------
numerics
    ODE integration, root finding, tridiagonal solves, quadrature.
on_model
    Radial Schrodinger evolution of the O(N) model.
effpot
    LO and NLO large-N effective potential, ``y_min(N)`` and ``N_c``.
qvlasov
    Mode equations, Bogoliubov coefficients, quantum Vlasov equation, backreaction.
classicality
    Uncertainty function and squeezing diagnostics.
cli
    Command-line front end.
"""
from .numerics import DEFAULT_TOL, NumericalError, ToleranceSpec

__version__ = "0.1.0"

__all__ = ["DEFAULT_TOL", "NumericalError", "ToleranceSpec", "__version__"]
