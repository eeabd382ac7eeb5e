"""Numerical workbench for minimal Lagrangian surfaces in the complex hyperbolic plane.

Modules
-------
geometry     Hermitian form of signature (2,1), SU(2,1) checks, projection to CH^2.
domain       Radial Poincare disc and half-plane patches, cubic differentials, fields.
titeica      Sub/super-solution constants and the monotone / Newton solvers.
frames       Maurer-Cartan data, frame integration and recovery diagnostics.
immersion    Normal exponential map Jacobian and the sqrt 2 criterion.
properness   ODE growth constants, U = 0 reduction matrices, gradient bound.
repdiag      Variations of the connection, Goldman and Toledo densities.
cli          The ``titeica-lab`` experiment runner.
"""
from .domain import CubicDiff, HalfPlanePatch, RadialDisc, ScalarField
from .titeica import TiteicaProblem, solve

__version__ = "0.1.0"

__all__ = ["CubicDiff", "HalfPlanePatch", "RadialDisc", "ScalarField", "TiteicaProblem",
           "solve", "__version__"]
