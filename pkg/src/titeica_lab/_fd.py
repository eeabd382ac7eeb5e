"""Central finite-difference weights and stencil evaluation on patches."""
from __future__ import annotations

from fractions import Fraction
from functools import lru_cache

import numpy as np


@lru_cache(maxsize=None)
def central_weights(order: int, half_width: int) -> tuple:
    """Weights ``w_k`` (``k = -half_width..half_width``) for ``d^order/dx^order``.

    Exact rationals from Fornberg's recursion, converted to float; exact on
    polynomials of degree ``2 * half_width`` with unit spacing.
    """
    xs = [Fraction(k) for k in range(-half_width, half_width + 1)]
    n = len(xs)
    if order >= n:
        raise ValueError("stencil too narrow for derivative order")
    # c[j][k]: weight of node j for the k-th derivative at 0
    c = [[Fraction(0)] * (order + 1) for _ in range(n)]
    c[0][0] = Fraction(1)
    c1 = Fraction(1)
    c4 = xs[0]
    for i in range(1, n):
        mn = min(i, order)
        c2 = Fraction(1)
        c5 = c4
        c4 = xs[i]
        for j in range(i):
            c3 = xs[i] - xs[j]
            c2 *= c3
            if j == i - 1:
                for k in range(mn, 0, -1):
                    c[i][k] = c1 * (k * c[i - 1][k - 1] - c5 * c[i - 1][k]) / c2
                c[i][0] = -c1 * c5 * c[i - 1][0] / c2
            for k in range(mn, 0, -1):
                c[j][k] = (c4 * c[j][k] - k * c[j][k - 1]) / c3
            c[j][0] = c4 * c[j][0] / c3
        c1 = c2
    return tuple(float(c[j][order]) for j in range(n))


def mixed_derivative(patch, center, h: float, nx: int, ny: int,
                     half_width: int = 3, stride: int = 1):
    """``d^nx/dx^nx d^ny/dy^ny`` of a patch sampled at spacing ``h``.

    ``patch`` has shape ``(Px, Py, ...)``; ``center = (i, j)`` indexes the node.
    ``stride`` spaces the stencil by ``stride * h``.
    """
    i, j = center
    wx = np.asarray(central_weights(nx, half_width))
    wy = np.asarray(central_weights(ny, half_width))
    k = np.arange(-half_width, half_width + 1) * stride
    sub = patch[np.ix_(i + k, j + k)]
    out = np.tensordot(wx, sub, axes=(0, 0))
    out = np.tensordot(wy, out, axes=(0, 0))
    return out / (stride * h) ** (nx + ny)


def richardson_derivative(patch, center, h: float, nx: int, ny: int,
                          half_width: int = 3, order: int = 4):
    """One Richardson level combining strides 1 and 2."""
    d1 = mixed_derivative(patch, center, h, nx, ny, half_width, 1)
    d2 = mixed_derivative(patch, center, h, nx, ny, half_width, 2)
    f = 2.0**order
    return (f * d1 - d2) / (f - 1.0)


def wirtinger(patch, center, h: float, nz: int, nzbar: int, richardson: bool = True):
    """``d^nz/dz^nz d^nzbar/dzbar^nzbar`` from Cartesian partials.

    Uses ``d/dz = (d/dx - i d/dy)/2`` and ``d/dzbar = (d/dx + i d/dy)/2``.
    """
    deriv = richardson_derivative if richardson else mixed_derivative
    # expand (dx - i dy)^nz (dx + i dy)^nzbar as a polynomial in (dx, dy)
    coeffs = {(0, 0): 1.0 + 0j}
    for _ in range(nz):
        coeffs = _mul(coeffs, {(1, 0): 1.0, (0, 1): -1j})
    for _ in range(nzbar):
        coeffs = _mul(coeffs, {(1, 0): 1.0, (0, 1): 1j})
    total = 0
    for (a, b), c in coeffs.items():
        if c != 0:
            total = total + c * deriv(patch, center, h, a, b)
    return total / 2.0 ** (nz + nzbar)


def _mul(p, q):
    out = {}
    for (a1, b1), c1 in p.items():
        for (a2, b2), c2 in q.items():
            key = (a1 + a2, b1 + b2)
            out[key] = out.get(key, 0) + c1 * c2
    return out
