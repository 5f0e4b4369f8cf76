"""Numerical laboratory for a third-order nonlinear acoustic wave equation
with exponentially fading memory: symbol analysis, pseudo-spectral
time stepping, energy functionals and decay experiments."""

from .errors import JMGTError
from .medium import ExponentialKernel, MediumParams, TabulatedKernel, classify_regime, validate_assumptions

__all__ = ["ExponentialKernel", "JMGTError", "MediumParams", "TabulatedKernel", "classify_regime",
           "validate_assumptions"]
__version__ = "0.1.0"
