"""Maurer-Cartan data, Legendrian frame integration and frame diagnostics.

Conventions
-----------
The Maurer-Cartan form is ``alpha = A dz + B dzbar`` and frames satisfy
``dF = F alpha`` (right multiplication), so the columns of ``F`` are the
moving frame ``(f1, f2, f3)`` and ``f = f3`` is the Legendrian lift.

A conformal factor ``s`` (metric ``s^2 |dz|^2``) is described by
:class:`ConformalFactor`, which returns ``s``, ``(log s)_z`` and
``(log s)_{z zbar}``; everything the minimal connection and its curvature
need.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
from scipy.interpolate import RectBivariateSpline, make_interp_spline
from scipy.linalg import expm

from . import _fd
from .domain import CubicDiff, HalfPlanePatch, RadialDisc, ScalarField
from .geometry import Q_FORM, herm, reproject_u21, unitarity_residual

SQRT2 = math.sqrt(2.0)

# Constant matrices of the totally geodesic (U = 0) half-plane solution.
L_U0 = np.array([[1j, 0, 1 / SQRT2],
                 [0, -1j, 1 / SQRT2],
                 [1 / SQRT2, 1 / SQRT2, 0]], dtype=complex)
K_U0 = np.array([[0, 0, 1j / SQRT2],
                 [0, 0, -1j / SQRT2],
                 [-1j / SQRT2, 1j / SQRT2, 0]], dtype=complex)
F0_U0 = np.array([[1 / SQRT2, 1 / SQRT2, 0],
                  [-1j / SQRT2, 1j / SQRT2, 0],
                  [0, 0, 1]], dtype=complex)


class FrameDegeneracy(RuntimeError):
    pass


# -- conformal factors --------------------------------------------------------------

class ConformalFactor:
    """Metric ``s^2 |dz|^2``; subclasses implement :meth:`log_derivs`."""

    def log_derivs(self, z):
        """Return ``(s, (log s)_z, (log s)_{z zbar})`` at complex points ``z``."""
        raise NotImplementedError

    def contains(self, z) -> bool:
        return True

    def __call__(self, z):
        return self.log_derivs(z)[0]

    def s_z(self, z):
        s, lz, _ = self.log_derivs(z)
        return s * lz


class ConstantFactor(ConformalFactor):
    def __init__(self, value: float = 1.0):
        self.value = float(value)

    def log_derivs(self, z):
        z = np.asarray(z, dtype=complex)
        return np.full(z.shape, self.value), np.zeros(z.shape, complex), np.zeros(z.shape)


class HalfPlaneU0Factor(ConformalFactor):
    """``s = 1 / (y sqrt 2)``: the solution ``u = -log 2`` on the upper half-plane."""

    def log_derivs(self, z):
        z = np.asarray(z, dtype=complex)
        y = z.imag
        return 1.0 / (y * SQRT2), 0.5j / y, 0.25 / y**2

    def contains(self, z) -> bool:
        return bool(np.all(np.asarray(z).imag > 0))


class RadialFactor(ConformalFactor):
    """``s^2 = exp(u) 4/(1-r^2)^2`` from a radial field, via a quintic spline in r."""

    def __init__(self, u: ScalarField, k: int = 5):
        if not isinstance(u.domain, RadialDisc):
            raise TypeError("RadialFactor needs a RadialDisc field")
        self.domain = u.domain
        self.spline = make_interp_spline(u.domain.r, u.values, k=k)
        self.d1 = self.spline.derivative(1)
        self.d2 = self.spline.derivative(2)

    def contains(self, z) -> bool:
        return bool(np.all(np.abs(z) <= self.domain.r_max + 1e-12))

    def log_derivs(self, z):
        z = np.asarray(z, dtype=complex)
        r = np.abs(z)
        u, u1, u2 = self.spline(r), self.d1(r), self.d2(r)
        w = 1.0 - r * r
        s = 2.0 * np.exp(0.5 * u) / w
        # log s = u/2 + log 2 - log(1 - r^2) as a function of r
        small = r < 1e-7
        u1_over_r = np.where(small, u2, u1 / np.where(small, 1.0, r))
        l1_over_r = 0.5 * u1_over_r + 2.0 / w
        l2 = 0.5 * u2 + 2.0 * (1.0 + r * r) / w**2
        lz = 0.5 * l1_over_r * np.conj(z)
        lzzb = 0.25 * (l2 + l1_over_r)
        return s, lz, lzzb


class PatchFactor(ConformalFactor):
    """``s^2 = exp(u) / y^2`` from a half-plane patch field via a bivariate spline."""

    def __init__(self, u: ScalarField, k: int = 5):
        if not isinstance(u.domain, HalfPlanePatch):
            raise TypeError("PatchFactor needs a HalfPlanePatch field")
        self.domain = u.domain
        self.spline = RectBivariateSpline(u.domain.x, u.domain.y, u.values, kx=k, ky=k, s=0)

    def contains(self, z) -> bool:
        z = np.asarray(z)
        d = self.domain
        e = 1e-12
        return bool(np.all((z.real >= d.x0 - e) & (z.real <= d.x1 + e)
                           & (z.imag >= d.y0 - e) & (z.imag <= d.y1 + e)))

    def log_derivs(self, z):
        z = np.asarray(z, dtype=complex)
        x, y = z.real, z.imag
        ev = self.spline.ev
        u = ev(x, y)
        ux, uy = ev(x, y, dx=1), ev(x, y, dy=1)
        uxx, uyy = ev(x, y, dx=2), ev(x, y, dy=2)
        s = np.exp(0.5 * u) / y
        lx, ly = 0.5 * ux, 0.5 * uy - 1.0 / y
        lz = 0.5 * (lx - 1j * ly)
        lzzb = 0.25 * (0.5 * (uxx + uyy) + 1.0 / y**2)
        return s, lz, lzzb


def factor_from_field(u: ScalarField) -> ConformalFactor:
    if isinstance(u.domain, RadialDisc):
        return RadialFactor(u)
    return PatchFactor(u)


# -- connection ---------------------------------------------------------------------

def _pairing(p, z):
    if p is None:
        return np.zeros(np.shape(z), complex)
    if callable(p):
        return np.broadcast_to(np.asarray(p(z), dtype=complex), np.shape(z))
    return np.full(np.shape(z), complex(p))


@dataclass
class ConnectionData:
    """The Maurer-Cartan form ``A dz + B dzbar`` as an evaluator over points.

    ``h_fz`` and ``h_fzbar`` are the mean-curvature pairings <H, f_z> and
    <H, f_zbar> (constants or callables of z); both ``None`` for minimal data.
    """

    factor: ConformalFactor
    Q: CubicDiff
    h_fz: object = None
    h_fzbar: object = None

    @property
    def minimal(self) -> bool:
        return self.h_fz is None and self.h_fzbar is None

    def AB(self, z):
        """``(A, B)`` with shape ``z.shape + (3, 3)``."""
        z = np.asarray(z, dtype=complex)
        s, lz, _ = self.factor.log_derivs(z)
        q = self.Q(z)
        p = _pairing(self.h_fz, z)
        pt = _pairing(self.h_fzbar, z)
        A = np.zeros(z.shape + (3, 3), complex)
        A[..., 0, 0] = lz - np.conj(p)
        A[..., 0, 1] = p
        A[..., 0, 2] = s
        A[..., 1, 0] = -q / s**2
        A[..., 1, 1] = pt - lz
        A[..., 2, 1] = s
        return A, u21_partner(A)

    def A(self, z):
        return self.AB(z)[0]

    def B(self, z):
        return self.AB(z)[1]

    def curvature_analytic(self, z):
        """``dB/dz - dA/dzbar + [A, B]`` from closed-form derivatives (minimal data)."""
        if not self.minimal:
            raise ValueError("analytic curvature is implemented for minimal data only")
        z = np.asarray(z, dtype=complex)
        s, lz, lzzb = self.factor.log_derivs(z)
        lzb = np.conj(lz)
        q = self.Q(z)
        A, B = self.AB(z)
        dA = np.zeros_like(A)
        dA[..., 0, 0] = lzzb
        dA[..., 0, 2] = s * lzb
        dA[..., 1, 0] = 2.0 * q * lzb / s**2
        dA[..., 1, 1] = -lzzb
        dA[..., 2, 1] = s * lzb
        dB = np.zeros_like(B)
        dB[..., 0, 0] = -lzzb
        dB[..., 0, 1] = -2.0 * np.conj(q) * lz / s**2
        dB[..., 1, 1] = lzzb
        dB[..., 1, 2] = s * lz
        dB[..., 2, 0] = s * lz
        return dB - dA + A @ B - B @ A


def u21_partner(A):
    """``-q A^H q``: the dzbar part making ``A dz + B dzbar`` u(2,1)-valued."""
    return -(Q_FORM @ np.conj(np.swapaxes(A, -1, -2)) @ Q_FORM)


def build_AB_minimal(s: ConformalFactor, Q: CubicDiff) -> ConnectionData:
    """Maurer-Cartan data of a minimal Lagrangian immersion with metric ``s^2|dz|^2``."""
    return ConnectionData(s, Q)


def build_AB_general(s: ConformalFactor, Q: CubicDiff, h_fz, h_fzbar) -> ConnectionData:
    """Maurer-Cartan data including the mean-curvature pairings."""
    return ConnectionData(s, Q, h_fz, h_fzbar)


def trace_form(conn: ConnectionData, z):
    """``(tr A, tr B)``; for genuine pairings this is ``2 <H, df>`` split by type."""
    A, B = conn.AB(z)
    return np.trace(A, axis1=-2, axis2=-1), np.trace(B, axis1=-2, axis2=-1)


def mc_residual(conn: ConnectionData, X, Y, method: str = "fd"):
    """Max-norm per node of ``dB/dz - dA/dzbar + [A, B]`` on a uniform grid.

    ``X, Y`` come from ``meshgrid(..., indexing="ij")``. ``method="fd"`` uses
    second-order central differences (boundary nodes are NaN);
    ``"analytic"`` uses the closed-form derivatives of the conformal factor.
    """
    Z = np.asarray(X) + 1j * np.asarray(Y)
    if method == "analytic":
        return np.max(np.abs(conn.curvature_analytic(Z)), axis=(-2, -1))
    if method != "fd":
        raise ValueError(f"unknown method {method!r}")
    hx = X[1, 0] - X[0, 0]
    hy = Y[0, 1] - Y[0, 0]
    A, B = conn.AB(Z)
    out = np.full(Z.shape, np.nan)
    Ax = (A[2:, 1:-1] - A[:-2, 1:-1]) / (2 * hx)
    Ay = (A[1:-1, 2:] - A[1:-1, :-2]) / (2 * hy)
    Bx = (B[2:, 1:-1] - B[:-2, 1:-1]) / (2 * hx)
    By = (B[1:-1, 2:] - B[1:-1, :-2]) / (2 * hy)
    dB_dz = 0.5 * (Bx - 1j * By)
    dA_dzb = 0.5 * (Ax + 1j * Ay)
    Ac, Bc = A[1:-1, 1:-1], B[1:-1, 1:-1]
    R = dB_dz - dA_dzb + Ac @ Bc - Bc @ Ac
    out[1:-1, 1:-1] = np.max(np.abs(R), axis=(-2, -1))
    return out


def mc_residuals_general(s: ConformalFactor, Q: CubicDiff, X, Y, h_fz=None, h_fzbar=None):
    """The three integrability residuals for a (possibly non-minimal) frame.

    Returns ``(gauss, closedness, codazzi)`` arrays on the grid:

    * ``2 (log s)_{z zbar} - s^2 - |Q|^2 s^-4 + |<H, f_z>|^2``
    * ``d/dz <H, f_zbar> - d/dzbar <H, f_z>`` (closedness of the mean curvature form)
    * ``Q_zbar s^-4 + (<H, f_zbar> s^-2)_z``

    Pairing derivatives use central differences (NaN on the grid boundary);
    with zero pairings the last two reduce to ``0`` and ``|Q_zbar| s^-4``.
    """
    X = np.asarray(X, float)
    Y = np.asarray(Y, float)
    Z = X + 1j * Y
    sv, _, lzzb = s.log_derivs(Z)
    q = Q(Z)
    p = _pairing(h_fz, Z)
    pt = _pairing(h_fzbar, Z)
    gauss = 2.0 * lzzb - sv**2 - np.abs(q) ** 2 / sv**4 + np.abs(p) ** 2
    hx = X[1, 0] - X[0, 0] if X.shape[0] > 1 else 1.0
    hy = Y[0, 1] - Y[0, 0] if X.shape[1] > 1 else 1.0

    def dz(F, conj=False):
        out = np.full(F.shape, np.nan + 0j)
        if F.shape[0] < 3 or F.shape[1] < 3:
            return out
        fx = (F[2:, 1:-1] - F[:-2, 1:-1]) / (2 * hx)
        fy = (F[1:-1, 2:] - F[1:-1, :-2]) / (2 * hy)
        out[1:-1, 1:-1] = 0.5 * (fx + (1j if conj else -1j) * fy)
        return out

    if h_fz is None and h_fzbar is None:
        closed = np.zeros(Z.shape)
        codazzi = np.abs(Q.dzbar(Z)) / sv**4
    else:
        closed = np.abs(dz(pt) - dz(p, conj=True))
        codazzi = np.abs(Q.dzbar(Z) / sv**4 + dz(pt / sv**2))
    return gauss, closed, codazzi


# -- frame integration --------------------------------------------------------------

@dataclass
class PathSpec:
    """Polyline through ``vertices`` traversed with RK4 steps of at most ``max_step``."""

    vertices: Sequence[complex]
    max_step: float = 1e-2
    F0: Optional[np.ndarray] = None

    def __post_init__(self):
        self.vertices = [complex(v) for v in self.vertices]
        if len(self.vertices) < 1:
            raise ValueError("path needs a base point")
        if not self.max_step > 1e-14:
            raise ValueError("step size underflow")


@dataclass
class FrameResult:
    F: np.ndarray
    steps: int
    drift: list = field(default_factory=list)  # unitarity residual at each vertex

    @property
    def f(self):
        return self.F[:, 2]


def _rk4_batch(conn: ConnectionData, F, z_start, dz_step, nsteps: int):
    """Advance frames ``F`` (shape ``(..., 3, 3)``) from ``z_start`` by ``nsteps`` steps ``dz_step``."""
    F = np.array(F, dtype=complex)
    z_start = np.asarray(z_start, dtype=complex)
    dzb = np.conj(dz_step)
    ts = np.arange(2 * nsteps + 1) * 0.5
    zs = z_start[..., None] + ts * dz_step
    A, B = conn.AB(zs)
    alpha = A * dz_step + B * dzb
    for n in range(nsteps):
        a0 = alpha[..., 2 * n, :, :]
        a1 = alpha[..., 2 * n + 1, :, :]
        a2 = alpha[..., 2 * n + 2, :, :]
        k1 = F @ a0
        k2 = (F + 0.5 * k1) @ a1
        k3 = (F + 0.5 * k2) @ a1
        k4 = (F + k3) @ a2
        F = F + (k1 + 2 * k2 + 2 * k3 + k4) / 6.0
    return F


def _check_degenerate(F, tol=1e-8):
    norms = np.abs(np.einsum("...ij,i,...ij->...j", F, Q_FORM.diagonal().real, np.conj(F)))
    if np.any(norms < tol):
        raise FrameDegeneracy("frame column has vanishing q-norm")


def integrate_frame(conn: ConnectionData, path: PathSpec, reproject: bool = False,
                    flatness_tol: float = 1e-5) -> FrameResult:
    """RK4 solution of ``dF = F alpha`` along ``path`` from ``F(z0) = F0`` (identity by default).

    ``drift`` records the U(2,1) residual at each vertex, plus for minimal
    data the change of ``det F`` (trace-free data preserves it, so the
    identity start stays in SU(2,1)). A warning is issued when the curvature of minimal data
    exceeds ``flatness_tol`` at the path vertices.
    """
    F = np.eye(3, dtype=complex) if path.F0 is None else np.array(path.F0, dtype=complex)
    total = 0
    det0 = np.linalg.det(F)

    def measure(G):
        r = unitarity_residual(G)
        if conn.minimal:
            r += float(abs(np.linalg.det(G) - det0))
        return r

    drift = [measure(F)]
    verts = np.array(path.vertices)
    if not conn.factor.contains(verts):
        raise ValueError("path leaves the domain of the conformal factor")
    if conn.minimal:
        curv = float(np.max(np.abs(conn.curvature_analytic(verts))))
        if curv > flatness_tol:
            warnings.warn(f"connection is not flat along the path (curvature {curv:.3e})",
                          RuntimeWarning, stacklevel=2)
    for za, zb in zip(path.vertices[:-1], path.vertices[1:]):
        length = abs(zb - za)
        if length == 0:
            continue
        n = max(1, int(math.ceil(length / path.max_step)))
        F = _rk4_batch(conn, F, za, (zb - za) / n, n)
        total += n
        _check_degenerate(F)
        if reproject:
            F = reproject_u21(F, fix_det=False)
            if conn.minimal:
                F = F * (det0 / np.linalg.det(F)) ** (1.0 / 3.0)
        drift.append(measure(F))
    return FrameResult(F, total, drift)


def frame_patch(conn: ConnectionData, F_center, z_center: complex, h: float, n: int,
                substeps: int = 2):
    """Frames on the ``(2n+1) x (2n+1)`` lattice ``z_center + h (i + 1j j)``.

    Each node is reached by an L-shaped path: along x from the centre, then
    along y. Returns ``(F_patch, Z)`` with ``F_patch[i + n, j + n]`` at
    ``Z[i + n, j + n]``.
    """
    offs = np.arange(-n, n + 1)
    Z = z_center + h * (offs[:, None] + 1j * offs[None, :])
    if not conn.factor.contains(Z):
        raise ValueError("patch leaves the domain of the conformal factor")
    row = np.empty((2 * n + 1, 3, 3), complex)
    row[n] = F_center
    for sign in (1, -1):
        F = np.array(F_center, dtype=complex)
        for k in range(1, n + 1):
            F = _rk4_batch(conn, F, z_center + sign * (k - 1) * h, sign * h / substeps, substeps)
            row[n + sign * k] = F
    out = np.empty((2 * n + 1, 2 * n + 1, 3, 3), complex)
    out[:, n] = row
    for sign in (1, -1):
        F = row.copy()
        for k in range(1, n + 1):
            z0 = Z[:, n] + sign * (k - 1) * h * 1j
            F = _rk4_batch(conn, F, z0, sign * h * 1j / substeps, substeps)
            out[:, n + sign * k] = F
    return out, Z


def closed_form_U0(x: float, y: float):
    """Frame ``F0 exp(L x) exp(K log y)`` and its last column for ``U = 0``.

    ``f = (x/y, (x^2 + y^2 - 1)/(2y), (x^2 + y^2 + 1)/(2y))`` parametrises
    the real hyperboloid, i.e. the totally geodesic RH^2.
    """
    if not y > 0:
        raise ValueError("y must be positive")
    F = F0_U0 @ expm(L_U0 * x) @ expm(K_U0 * math.log(y))
    return F, F[:, 2].copy()


def closed_form_U0_f(x, y):
    """The last column of :func:`closed_form_U0`, vectorised."""
    x = np.asarray(x, float)
    y = np.asarray(y, float)
    r2 = x * x + y * y
    return np.stack([x / y, (r2 - 1) / (2 * y), (r2 + 1) / (2 * y)], axis=-1).astype(complex)


def frame_to_dict(F) -> dict:
    F = np.asarray(F, dtype=complex)
    return {"re": F.real.tolist(), "im": F.imag.tolist()}


def frame_from_dict(d: dict) -> np.ndarray:
    return np.asarray(d["re"], float) + 1j * np.asarray(d["im"], float)


# -- recovering the data from a frame ------------------------------------------------

@dataclass
class FrameDiagnostics:
    hyperboloid: float   # |<f, f> + 1|
    legendrian: float    # max(|<f_z, f>|, |<f_zbar, f>|)
    conformal: float     # |<f_z, f_zbar>|
    metric: float        # max(||f_z| - s|, ||f_zbar| - s|)
    cubic: float         # |<f_zzz, f> - Q|
    minimality: float    # ||f_{z zbar} / s^2 - f||
    recovered_Q: complex
    speed: float         # |f_z|

    def to_dict(self) -> dict:
        return {"hyperboloid": self.hyperboloid, "legendrian": self.legendrian,
                "conformal": self.conformal, "metric": self.metric, "cubic": self.cubic,
                "minimality": self.minimality,
                "recovered_Q": [self.recovered_Q.real, self.recovered_Q.imag],
                "speed": self.speed}

    def worst(self) -> float:
        return max(self.hyperboloid, self.legendrian, self.conformal, self.metric,
                   self.cubic, self.minimality)


def extract_and_verify(F_patch, h: float, s_value: float, Q_value: complex) -> FrameDiagnostics:
    """Diagnostics of ``f = F e3`` at the centre of a frame patch.

    The patch (from :func:`frame_patch` or closed forms) must have at least 6
    nodes on each side of the centre: the stencils are 7-point central
    differences with one Richardson level (strides ``h`` and ``2h``).
    """
    F_patch = np.asarray(F_patch)
    if F_patch.ndim == 4:
        f = F_patch[..., :, 2]
    else:
        f = F_patch
    P = f.shape[0]
    n = (P - 1) // 2
    if n < 6 or f.shape[1] != P:
        raise ValueError("need a square patch with at least 6 nodes around the centre")
    c = (n, n)
    f0 = f[c]
    fz = _fd.wirtinger(f, c, h, 1, 0)
    fzb = _fd.wirtinger(f, c, h, 0, 1)
    fzzb = _fd.wirtinger(f, c, h, 1, 1)
    fzzz = _fd.wirtinger(f, c, h, 3, 0)
    speed = math.sqrt(max(herm(fz, fz).real, 0.0))
    speed_b = math.sqrt(max(herm(fzb, fzb).real, 0.0))
    recovered = complex(herm(fzzz, f0))
    return FrameDiagnostics(
        hyperboloid=float(abs(herm(f0, f0) + 1.0)),
        legendrian=float(max(abs(herm(fz, f0)), abs(herm(fzb, f0)))),
        conformal=float(abs(herm(fz, fzb))),
        metric=float(max(abs(speed - s_value), abs(speed_b - s_value))),
        cubic=float(abs(recovered - Q_value)),
        minimality=float(np.linalg.norm(fzzb / s_value**2 - f0)),
        recovered_Q=recovered,
        speed=speed,
    )
