"""Complex 3-vectors and 3x3 frames over the signature (2,1) Hermitian form.

Vectors are plain ``numpy`` complex arrays of shape ``(3,)`` (or ``(..., 3)``
for batches) and frames are ``(3, 3)`` complex arrays whose columns are the
frame vectors ``f1, f2, f3``.
"""
from __future__ import annotations

import numpy as np

#: Diagonal of the form: <u, v> = u1 conj(v1) + u2 conj(v2) - u3 conj(v3).
SIGNS = np.array([1.0, 1.0, -1.0])
Q_FORM = np.diag(SIGNS).astype(complex)

#: Default tolerance for membership in SU(2,1) (max-norm).
SU21_TOL = 1e-9


class DegenerateProjection(ValueError):
    """Raised when a vector has (numerically) vanishing third coordinate."""


def herm(u, v):
    """Indefinite Hermitian form, linear in ``u`` and conjugate-linear in ``v``.

    Broadcasts over leading axes.
    """
    u = np.asarray(u, dtype=complex)
    v = np.asarray(v, dtype=complex)
    return np.sum(u * SIGNS * np.conj(v), axis=-1)


def unitarity_residual(F) -> float:
    """Max-norm of ``F^H q F - q``: zero exactly when F lies in U(2,1)."""
    F = np.asarray(F, dtype=complex)
    return float(np.max(np.abs(F.conj().T @ Q_FORM @ F - Q_FORM)))


def su21_residual(F) -> float:
    """Distance-like residual of ``F`` from SU(2,1).

    Sum of :func:`unitarity_residual` and ``|det F - 1|``.
    """
    F = np.asarray(F, dtype=complex)
    return unitarity_residual(F) + float(abs(np.linalg.det(F) - 1.0))


def in_su21(F, tol: float = SU21_TOL) -> bool:
    return su21_residual(F) <= tol


def project(v, tol: float = 1e-14):
    """Inhomogeneous coordinates ``(v1/v3, v2/v3)`` of the line through ``v``.

    Negative vectors land in the unit ball of C^2, i.e. in CH^2.
    """
    v = np.asarray(v, dtype=complex)
    v3 = v[..., 2]
    if np.any(np.abs(v3) <= tol * np.maximum(1.0, np.max(np.abs(v), axis=-1))):
        raise DegenerateProjection("third homogeneous coordinate is zero")
    return v[..., 0] / v3, v[..., 1] / v3


def reproject_u21(F, fix_det: bool = True):
    """Nearest-in-spirit q-unitary frame via indefinite Gram-Schmidt.

    The timelike column f3 is normalised first, then f1 and f2 are
    orthonormalised against it. With ``fix_det`` the result is divided by a
    cube root of its determinant so that it lands in SU(2,1).
    """
    F = np.array(F, dtype=complex)
    f1, f2, f3 = F[:, 0], F[:, 1], F[:, 2]
    n3 = -herm(f3, f3).real
    if n3 <= 0:
        raise ValueError("third column is not timelike")
    f3 = f3 / np.sqrt(n3)
    f1 = f1 + herm(f1, f3) * f3
    n1 = herm(f1, f1).real
    if n1 <= 0:
        raise ValueError("first column degenerate")
    f1 = f1 / np.sqrt(n1)
    f2 = f2 + herm(f2, f3) * f3 - herm(f2, f1) * f1
    n2 = herm(f2, f2).real
    if n2 <= 0:
        raise ValueError("second column degenerate")
    f2 = f2 / np.sqrt(n2)
    G = np.column_stack([f1, f2, f3])
    if fix_det:
        d = np.linalg.det(G)
        G = G / d ** (1.0 / 3.0)
    return G
