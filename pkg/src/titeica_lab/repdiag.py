"""Pointwise densities on first-order deformations of the flat connection.

A variation of ``alpha = A dz + B dzbar`` is stored by its ``dz`` and
``dzbar`` parts. The Goldman density of two variations is the coefficient
of ``dz ^ dzbar`` in ``tr(v1 ^ v2)``, namely ``tr(A1 B2 - B1 A2)``.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ._fd import central_weights
from .domain import CubicDiff, Domain, HalfPlanePatch, ScalarField
from .frames import ConnectionData, factor_from_field, u21_partner
from .geometry import herm
from .titeica import SUPERSOLUTION, TiteicaProblem, solve


@dataclass
class VariationField:
    """``A dz + B dzbar`` sampled at ``points``; arrays have shape ``points.shape + (3, 3)``."""

    A: np.ndarray
    B: np.ndarray
    points: np.ndarray

    def __post_init__(self):
        self.A = np.asarray(self.A, complex)
        self.B = np.asarray(self.B, complex)
        self.points = np.asarray(self.points, complex)
        if self.A.shape != self.B.shape or self.A.shape != self.points.shape + (3, 3):
            raise ValueError("A, B and points have inconsistent shapes")

    def u21_residual(self) -> float:
        """Max of ``|B + q A^H q|``: zero for u(2,1)-valued forms."""
        return float(np.max(np.abs(self.B - u21_partner(self.A)))) if self.A.size else 0.0

    def __add__(self, other: "VariationField") -> "VariationField":
        _check_same(self, other)
        return VariationField(self.A + other.A, self.B + other.B, self.points)

    def __mul__(self, c) -> "VariationField":
        return VariationField(c * self.A, c * self.B, self.points)

    __rmul__ = __mul__


def _check_same(v1: VariationField, v2: VariationField):
    if v1.points.shape != v2.points.shape or not np.array_equal(v1.points, v2.points):
        raise ValueError("variation fields live on different point sets")


def u0_conformal_factor(domain: Domain) -> ScalarField:
    """``s = sqrt(gamma / 2)``, the conformal factor of the ``U = 0`` solution."""
    return ScalarField(domain, np.sqrt(0.5 * domain.gamma()))


def delta_U_alpha(Q: CubicDiff, s: ScalarField) -> VariationField:
    """Variation of ``alpha`` in the direction ``U = Q dz^3`` at the ``U = 0`` solution.

    The metric does not vary to first order, so only the ``Q`` entries move:
    ``-Q s^-2`` at (2,1) of the ``dz`` part and ``conj(Q) s^-2`` at (1,2) of
    the ``dzbar`` part.
    """
    pts = s.domain.points
    q = Q(pts) / s.values**2
    A = np.zeros(pts.shape + (3, 3), complex)
    B = np.zeros_like(A)
    A[..., 1, 0] = -q
    B[..., 0, 1] = np.conj(q)
    return VariationField(A, B, pts)


def delta_alpha_fd(domain: Domain, Q: CubicDiff, t: float = 1e-6, method: str = "newton",
                   tol: float = 1e-10) -> VariationField:
    """``(alpha(tU) - alpha(0)) / t`` with both conformal factors from the solver."""
    pts = domain.points
    out = []
    for scale in (t, 0.0):
        rep = solve(TiteicaProblem(domain, Q.scaled(scale), method=method, tol=tol))
        conn = ConnectionData(factor_from_field(rep.u), Q.scaled(scale))
        out.append(conn.AB(pts))
    (A1, B1), (A0, B0) = out
    return VariationField((A1 - A0) / t, (B1 - B0) / t, pts)


def goldman_density(v1: VariationField, v2: VariationField) -> np.ndarray:
    """Coefficient of ``dz ^ dzbar`` in ``tr(v1 ^ v2)``, node by node."""
    _check_same(v1, v2)
    return (np.einsum("...ij,...ji->...", v1.A, v2.B)
            - np.einsum("...ij,...ji->...", v1.B, v2.A))


def _diff(f: np.ndarray, h: float, axis: int, half_width: int) -> np.ndarray:
    """First derivative along ``axis`` with a ``2*half_width+1`` point stencil; NaN near edges."""
    w = central_weights(1, half_width)
    n = f.shape[axis]
    out = np.full(f.shape, np.nan + 0j)
    if n <= 2 * half_width:
        return out
    acc = 0
    for k, wk in enumerate(w):
        if wk != 0:
            sl = [slice(None)] * f.ndim
            sl[axis] = slice(k, n - 2 * half_width + k)
            acc = acc + wk * f[tuple(sl)]
    sl = [slice(None)] * f.ndim
    sl[axis] = slice(half_width, n - half_width)
    out[tuple(sl)] = acc / h
    return out


def toledo_density(f, h: float, half_width: int = 3) -> np.ndarray:
    """``Im <f_x, f_y>`` on a patch of lifts ``f[i, j]`` at ``(x0 + i h, y0 + j h)``.

    Nodes closer than ``half_width`` to the edge are NaN.
    """
    f = np.asarray(f, complex)
    if f.ndim != 3 or f.shape[-1] != 3:
        raise ValueError("f must have shape (nx, ny, 3)")
    if min(f.shape[0], f.shape[1]) <= 2 * half_width:
        raise ValueError("patch too small for the stencil")
    fx = _diff(f, h, 0, half_width)
    fy = _diff(f, h, 1, half_width)
    return herm(fx, fy).imag


def holomorphic_lift(points) -> np.ndarray:
    """``(z, 0, 1) / sqrt(1 - |z|^2)``: a complex line, the non-Lagrangian control."""
    z = np.asarray(points, complex)
    if np.any(np.abs(z) >= 1):
        raise ValueError("points must lie in the unit disc")
    n = np.sqrt(1.0 - np.abs(z) ** 2)
    return np.stack([z / n, np.zeros_like(z), 1.0 / n + 0j], axis=-1)
