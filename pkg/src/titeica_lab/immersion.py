"""The normal exponential map and its Jacobian: when is it an immersion?

The map sends ``(z, a, b)`` to the projection of
``(ia - b) f1(z) + (ia + b) f2(z) + f3(z)`` for ``a^2 + b^2 < 1/2``. In the
normalised coordinates ``s = 1, s_z = 0, Q >= 0`` at a point its Jacobian
determinant is ``4 (k Q^2 + l Q - 2k - 1)`` with ``k = a^2 + b^2`` and
``l = 6 a^2 b - 2 b^3``. The smallest positive root over the closed disc is
``sqrt 2``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy.ndimage import minimum_filter
from scipy.optimize import brentq

from .domain import CubicDiff, ScalarField, norm_U_sq_h
from .geometry import project

SQRT2 = math.sqrt(2.0)
RHO_MAX = 1.0 / SQRT2
CRITICAL_BOUND = SQRT2

#: the three (a, b) points where the critical root attains sqrt 2
CRITICAL_POINTS = (
    (0.0, -1.0 / SQRT2),
    (math.sqrt(3.0) / (2.0 * SQRT2), 1.0 / (2.0 * SQRT2)),
    (-math.sqrt(3.0) / (2.0 * SQRT2), 1.0 / (2.0 * SQRT2)),
)


@dataclass(frozen=True)
class NormalCoords:
    a: float
    b: float

    def __post_init__(self):
        if not self.a * self.a + self.b * self.b < 0.5:
            raise ValueError("(a, b) must satisfy a^2 + b^2 < 1/2")

    def kl(self) -> "KLCoords":
        return KLCoords(*kl_from_ab(self.a, self.b))


@dataclass(frozen=True)
class KLCoords:
    k: float
    l: float

    def __post_init__(self):
        if not 0.0 <= self.k <= 0.5 + 1e-15:
            raise ValueError("k must lie in [0, 1/2]")
        bound = 2.0 * self.k**1.5
        if abs(self.l) > bound * (1 + 1e-12) + 1e-15:
            raise ValueError("|l| must not exceed 2 k^(3/2)")


def kl_from_ab(a, b):
    a = np.asarray(a, float)
    b = np.asarray(b, float)
    return a * a + b * b, 6.0 * a * a * b - 2.0 * b**3


def normal_vector(F, a: float, b: float):
    F = np.asarray(F, dtype=complex)
    return (1j * a - b) * F[..., :, 0] + (1j * a + b) * F[..., :, 1] + F[..., :, 2]


def phi(F, nc: NormalCoords):
    """Inhomogeneous coordinates of the normal-plane point ``(a, b)`` over the frame ``F``."""
    return project(normal_vector(F, nc.a, nc.b))


def jacobian_det_formula(a, b, Q):
    """``4 [(a^2 + b^2) Q^2 + (6 a^2 b - 2 b^3) Q - 2a^2 - 2b^2 - 1]``; broadcasts."""
    k, l = kl_from_ab(a, b)
    return 4.0 * (k * Q * Q + l * Q - 2.0 * k - 1.0)


def jacobian_matrix_printed(a: float, b: float, Q: float) -> np.ndarray:
    """The 4x4 matrix ``(Phi_a, Phi_b, Phi_x, Phi_y)`` at ``x = y = 0`` as derived by hand."""
    return np.array([
        [0.0, -1.0, 2 * a * a + b * Q + 1, 2 * a * b + a * Q],
        [1.0, 0.0, 2 * a * b + a * Q, 2 * b * b - b * Q + 1],
        [0.0, 1.0, 2 * a * a + b * Q + 1, 2 * a * b + a * Q],
        [1.0, 0.0, -2 * a * b - a * Q, -2 * b * b + b * Q - 1],
    ])


def _first_order_frame(Q: float, x: float, y: float):
    # I + A z + B zbar for s = 1, s_z = 0, real Q
    z = complex(x, y)
    A = np.array([[0, 0, 1], [-Q, 0, 0], [0, 1, 0]], dtype=complex)
    B = np.array([[0, Q, 0], [0, 0, 1], [1, 0, 0]], dtype=complex)
    return np.eye(3) + A * z + B * np.conj(z)


def _phi_real(params, Q: float):
    a, b, x, y = params
    w1, w2 = project(normal_vector(_first_order_frame(Q, x, y), a, b))
    return np.array([w1.real, w1.imag, w2.real, w2.imag])


def jacobian_fd(a: float, b: float, Q: float, step: float = 1e-5) -> np.ndarray:
    """Central-difference 4x4 Jacobian in ``(a, b, x, y)`` at ``x = y = 0``."""
    p0 = np.array([a, b, 0.0, 0.0])
    J = np.empty((4, 4))
    for j in range(4):
        e = np.zeros(4)
        e[j] = step
        J[:, j] = (_phi_real(p0 + e, Q) - _phi_real(p0 - e, Q)) / (2 * step)
    return J


def jacobian_det_fd(a: float, b: float, Q: float, step: float = 1e-5) -> float:
    """Determinant of :func:`jacobian_fd`: an independent check of the closed form."""
    return float(np.linalg.det(jacobian_fd(a, b, Q, step)))


def critical_root(k, l):
    """Positive Q-root of ``k Q^2 + l Q - 2k - 1``; ``inf`` where ``k = 0``."""
    k = np.asarray(k, float)
    l = np.asarray(l, float)
    with np.errstate(divide="ignore", invalid="ignore"):
        R = (-l + np.sqrt(l * l + 8 * k * k + 4 * k)) / (2 * k)
    R = np.where(k > 0, R, np.inf)
    return R if R.ndim else float(R)


@dataclass
class CriticalScan:
    minimum: float
    argmins: list       # [(k, l, a, b), ...], one per local minimum within tolerance
    resolution: int
    k_max: float


def min_critical_root(resolution: int = 1000, k_max: float = 0.5, tol: float = 1e-3) -> CriticalScan:
    """Brute-force minimum of :func:`critical_root` over ``{k <= k_max}``.

    The grid is polar and uniform in ``(rho, theta)``, with ``rho`` running
    up to and including ``sqrt(k_max)`` so the boundary is sampled exactly.
    Every grid-local minimum within ``tol`` of the global one is reported.
    """
    if resolution < 100:
        raise ValueError("resolution must be at least 100")
    rho = np.linspace(0.0, math.sqrt(k_max), resolution)[1:]
    theta = np.linspace(0.0, 2 * math.pi, resolution, endpoint=False)
    a = rho[:, None] * np.cos(theta)[None, :]
    b = rho[:, None] * np.sin(theta)[None, :]
    k, l = kl_from_ab(a, b)
    R = critical_root(k, l)
    m = float(R.min())
    # periodic in theta, clamped in rho
    local = minimum_filter(R, size=3, mode=("nearest", "wrap")) == R
    idx = np.argwhere(local & (R <= m + tol))
    # a flat direction can make neighbours tie; keep one per cluster
    argmins = []
    for i, j in idx[np.argsort(R[tuple(idx.T)])]:
        pt = (float(k[i, j]), float(l[i, j]), float(a[i, j]), float(b[i, j]))
        if all(math.hypot(pt[2] - q[2], pt[3] - q[3]) > 0.05 for q in argmins):
            argmins.append(pt)
    return CriticalScan(m, argmins, resolution, k_max)


@dataclass
class ZeroScan:
    Q: float
    min_abs_J: float
    a: float
    b: float


def jacobian_zero_scan(Q: float, n_theta: int = 720) -> ZeroScan:
    """Smallest ``|J|`` over the closed disc, refining sign changes along rays.

    Along the ray at angle ``theta``, ``J(rho) = 4 (rho^2 Q^2 + 2 rho^3 sin(3 theta) Q - 2 rho^2 - 1)``.
    """
    best = ZeroScan(Q, math.inf, 0.0, 0.0)
    for th in np.linspace(0.0, 2 * math.pi, n_theta, endpoint=False):
        c, s = math.cos(th), math.sin(th)

        def J(r):
            return float(jacobian_det_formula(r * c, r * s, Q))

        if J(RHO_MAX) >= 0.0:
            r = brentq(J, 0.0, RHO_MAX, xtol=1e-15)
            val = abs(J(r))
        else:
            r = RHO_MAX
            val = abs(J(r))
        if val < best.min_abs_J:
            best = ZeroScan(Q, val, r * c, r * s)
    return best


@dataclass
class ImmersionReport:
    immersion: bool
    sup_norm_m: float
    sup_norm_h: float
    bound: float = CRITICAL_BOUND

    def to_dict(self) -> dict:
        return {"immersion": self.immersion, "sup_norm_U_m": self.sup_norm_m,
                "sup_norm_U_h": self.sup_norm_h, "bound": self.bound}


def immersion_criterion(u: ScalarField, Q: Optional[CubicDiff] = None,
                        normU2=None) -> ImmersionReport:
    """``sup exp(-3u/2) ||U||_h <= sqrt 2`` over the valid nodes of ``u``.

    ``||U||^2_h`` comes from ``Q`` or may be given directly as ``normU2``.
    """
    if normU2 is None:
        if Q is None:
            raise ValueError("need Q or normU2")
        normU2 = norm_U_sq_h(Q, u.domain)
    if isinstance(normU2, ScalarField):
        normU2 = normU2.values
    normU2 = np.broadcast_to(np.asarray(normU2, float), u.values.shape)
    mask = u.valid
    nh = np.sqrt(normU2[mask])
    nm = np.exp(-1.5 * u.values[mask]) * nh
    sup_m = float(nm.max())
    return ImmersionReport(sup_m <= CRITICAL_BOUND, sup_m, float(nh.max()))
