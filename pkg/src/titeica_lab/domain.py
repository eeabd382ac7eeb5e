"""Discretised conformal domains carrying the hyperbolic background metric.

Two local models are supported:

* :class:`RadialDisc` -- the Poincare disc ``gamma = 4 / (1 - r^2)^2`` sampled
  on a uniform radial grid ``0 = r_0 < ... < r_max < 1``. Fields are functions
  of ``r`` only.
* :class:`HalfPlanePatch` -- a rectangle ``[x0, x1] x [y0, y1]`` of the upper
  half-plane with ``gamma = 1 / y^2``. Field values have shape ``(nx, ny)``
  with ``values[i, j]`` sitting at ``(x[i], y[j])``.

Both metrics have curvature -1. The Dirichlet boundary closure is a local
model only; it is not equivalent to solving on a compact quotient.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Sequence, Union

import numpy as np
import scipy.sparse as sp

__all__ = [
    "CubicDiff",
    "RadialDisc",
    "HalfPlanePatch",
    "Domain",
    "ScalarField",
    "metric_density",
    "norm_U_sq_h",
    "laplace_h",
    "laplacian_matrix",
    "domain_from_dict",
]


@dataclass(frozen=True)
class CubicDiff:
    """Holomorphic cubic differential ``Q(z) dz^3`` with polynomial ``Q``.

    ``coefficients`` are in ascending powers of ``z``.
    """

    coefficients: tuple = (0j,)

    @classmethod
    def constant(cls, c) -> "CubicDiff":
        return cls((complex(c),))

    @classmethod
    def polynomial(cls, coefficients: Sequence) -> "CubicDiff":
        coeffs = tuple(complex(c) for c in coefficients)
        return cls(coeffs if coeffs else (0j,))

    @classmethod
    def monomial(cls, c, n: int) -> "CubicDiff":
        return cls((0j,) * n + (complex(c),))

    def __call__(self, z):
        z = np.asarray(z, dtype=complex)
        return np.polynomial.polynomial.polyval(z, np.array(self.coefficients))

    def derivative(self, z, order: int = 1):
        """Holomorphic derivative ``d^order Q / dz^order``."""
        z = np.asarray(z, dtype=complex)
        c = np.polynomial.polynomial.polyder(np.array(self.coefficients), order)
        return np.polynomial.polynomial.polyval(z, c)

    def dzbar(self, z):
        # holomorphic by construction
        return np.zeros_like(np.asarray(z, dtype=complex))

    def scaled(self, t) -> "CubicDiff":
        return CubicDiff(tuple(complex(t) * c for c in self.coefficients))

    @property
    def is_zero(self) -> bool:
        return all(c == 0 for c in self.coefficients)

    @property
    def has_radial_modulus(self) -> bool:
        """True when ``|Q|`` depends on ``|z|`` only (zero or a monomial)."""
        return sum(1 for c in self.coefficients if c != 0) <= 1

    def to_dict(self) -> dict:
        return {"kind": "polynomial",
                "coefficients": [[c.real, c.imag] for c in self.coefficients]}

    @classmethod
    def from_dict(cls, d: dict) -> "CubicDiff":
        def _c(v):
            if isinstance(v, (list, tuple)):
                return complex(v[0], v[1])
            return complex(v)

        kind = d.get("kind", "constant")
        if kind == "constant":
            return cls.constant(_c(d.get("value", 0.0)))
        if kind == "polynomial":
            return cls.polynomial([_c(v) for v in d["coefficients"]])
        raise ValueError(f"unknown cubic differential kind {kind!r}")


@dataclass(frozen=True)
class RadialDisc:
    n_r: int = 2048
    r_max: float = 0.995

    def __post_init__(self):
        if not (0.0 < self.r_max < 1.0):
            raise ValueError("r_max must lie in (0, 1)")
        if self.n_r < 3:
            raise ValueError("need at least 3 radial nodes")

    kind = "radial_disc"

    @property
    def r(self) -> np.ndarray:
        return np.linspace(0.0, self.r_max, self.n_r)

    @property
    def dr(self) -> float:
        return self.r_max / (self.n_r - 1)

    @property
    def shape(self):
        return (self.n_r,)

    @property
    def points(self) -> np.ndarray:
        """Sample points on the positive real axis (fields are radial)."""
        return self.r.astype(complex)

    def gamma(self) -> np.ndarray:
        return 4.0 / (1.0 - self.r**2) ** 2

    def interior_mask(self) -> np.ndarray:
        m = np.ones(self.n_r, dtype=bool)
        m[-1] = False
        return m

    def refined(self) -> "RadialDisc":
        """Same disc with the radial spacing halved."""
        return RadialDisc(2 * self.n_r - 1, self.r_max)

    def to_dict(self) -> dict:
        return {"kind": self.kind, "n_r": self.n_r, "r_max": self.r_max}


@dataclass(frozen=True)
class HalfPlanePatch:
    x0: float = -0.5
    x1: float = 0.5
    y0: float = 0.5
    y1: float = 1.5
    nx: int = 257
    ny: int = 257

    kind = "half_plane_patch"

    def __post_init__(self):
        if not self.y0 > 0:
            raise ValueError("patch must lie strictly inside the upper half-plane")
        if not (self.x1 > self.x0 and self.y1 > self.y0):
            raise ValueError("empty patch")
        if self.nx < 3 or self.ny < 3:
            raise ValueError("need at least 3 nodes per axis")

    @property
    def x(self) -> np.ndarray:
        return np.linspace(self.x0, self.x1, self.nx)

    @property
    def y(self) -> np.ndarray:
        return np.linspace(self.y0, self.y1, self.ny)

    @property
    def hx(self) -> float:
        return (self.x1 - self.x0) / (self.nx - 1)

    @property
    def hy(self) -> float:
        return (self.y1 - self.y0) / (self.ny - 1)

    @property
    def shape(self):
        return (self.nx, self.ny)

    def mesh(self):
        return np.meshgrid(self.x, self.y, indexing="ij")

    @property
    def points(self) -> np.ndarray:
        X, Y = self.mesh()
        return X + 1j * Y

    def gamma(self) -> np.ndarray:
        _, Y = self.mesh()
        return 1.0 / Y**2

    def interior_mask(self) -> np.ndarray:
        m = np.zeros(self.shape, dtype=bool)
        m[1:-1, 1:-1] = True
        return m

    def refined(self) -> "HalfPlanePatch":
        return HalfPlanePatch(self.x0, self.x1, self.y0, self.y1,
                              2 * self.nx - 1, 2 * self.ny - 1)

    def to_dict(self) -> dict:
        return {"kind": self.kind, "x0": self.x0, "x1": self.x1, "y0": self.y0,
                "y1": self.y1, "nx": self.nx, "ny": self.ny}


Domain = Union[RadialDisc, HalfPlanePatch]


def domain_from_dict(d: dict) -> Domain:
    d = dict(d)
    kind = d.pop("kind", "radial_disc")
    if kind == "radial_disc":
        return RadialDisc(**d)
    if kind == "half_plane_patch":
        return HalfPlanePatch(**d)
    raise ValueError(f"unknown domain kind {kind!r}")


@dataclass
class ScalarField:
    """Real samples over a domain; ``valid`` marks nodes where values are defined."""

    domain: Domain
    values: np.ndarray
    valid: np.ndarray = field(default=None)

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if self.values.shape != self.domain.shape:
            raise ValueError(
                f"field shape {self.values.shape} does not match domain {self.domain.shape}")
        if self.valid is None:
            self.valid = np.ones(self.domain.shape, dtype=bool)
        if not np.all(np.isfinite(self.values[self.valid])):
            raise ValueError("field has non-finite values")

    def max(self) -> float:
        return float(np.max(self.values[self.valid]))

    def min(self) -> float:
        return float(np.min(self.values[self.valid]))

    def to_dict(self) -> dict:
        return {"domain": self.domain.to_dict(),
                "values": [float(v) for v in self.values.ravel()]}

    def to_json(self) -> str:
        return json.dumps(self.to_dict())

    @classmethod
    def from_dict(cls, d: dict) -> "ScalarField":
        dom = domain_from_dict(d["domain"])
        return cls(dom, np.asarray(d["values"], dtype=float).reshape(dom.shape))

    @classmethod
    def from_json(cls, text: str) -> "ScalarField":
        return cls.from_dict(json.loads(text))

    @classmethod
    def constant(cls, domain: Domain, value: float) -> "ScalarField":
        return cls(domain, np.full(domain.shape, float(value)))


def metric_density(domain: Domain, point) -> float:
    """Conformal factor ``gamma`` of the hyperbolic metric at ``point``.

    For the disc ``point`` may be a radius or a complex coordinate; for the
    patch a complex coordinate or an ``(x, y)`` pair.
    """
    if isinstance(domain, RadialDisc):
        r = abs(complex(point))
        if r > domain.r_max + 1e-15:
            raise ValueError(f"point {point} outside disc of radius {domain.r_max}")
        return 4.0 / (1.0 - r * r) ** 2
    if isinstance(point, (tuple, list)):
        x, y = point
    else:
        z = complex(point)
        x, y = z.real, z.imag
    eps = 1e-15
    if not (domain.x0 - eps <= x <= domain.x1 + eps and domain.y0 - eps <= y <= domain.y1 + eps):
        raise ValueError(f"point ({x}, {y}) outside patch")
    return 1.0 / (y * y)


def norm_U_sq_h(Q: CubicDiff, domain: Domain) -> ScalarField:
    """Pointwise ``||U||_h^2 = |Q|^2 / gamma^3``."""
    if isinstance(domain, RadialDisc) and not Q.has_radial_modulus:
        raise ValueError("the radial disc model needs |Q| radial (zero or monomial Q)")
    q = np.abs(Q(domain.points)) ** 2
    return ScalarField(domain, q / domain.gamma() ** 3)


def laplace_h(u: ScalarField) -> ScalarField:
    """Second-order finite-difference hyperbolic Laplacian.

    Boundary nodes (the outer ring of the disc, the edges of the patch) are
    excluded from the validity mask and set to NaN.
    """
    dom = u.domain
    v = u.values
    out = np.full(dom.shape, np.nan)
    if isinstance(dom, RadialDisc):
        r, dr = dom.r, dom.dr
        inv_gamma = (1.0 - r**2) ** 2 / 4.0
        ri = r[1:-1]
        lap = (v[2:] - 2 * v[1:-1] + v[:-2]) / dr**2 + (v[2:] - v[:-2]) / (2 * dr * ri)
        out[1:-1] = inv_gamma[1:-1] * lap
        # symmetric ghost node u_{-1} = u_1 enforces u_r(0) = 0
        out[0] = inv_gamma[0] * 4.0 * (v[1] - v[0]) / dr**2
    else:
        hx, hy = dom.hx, dom.hy
        y = dom.y
        uxx = (v[2:, 1:-1] - 2 * v[1:-1, 1:-1] + v[:-2, 1:-1]) / hx**2
        uyy = (v[1:-1, 2:] - 2 * v[1:-1, 1:-1] + v[1:-1, :-2]) / hy**2
        out[1:-1, 1:-1] = y[None, 1:-1] ** 2 * (uxx + uyy)
    return ScalarField(dom, out, valid=dom.interior_mask())


def laplacian_matrix(domain: Domain) -> sp.csr_matrix:
    """Sparse matrix of :func:`laplace_h` over all nodes (boundary rows zero).

    Node ordering is ``values.ravel()`` (C order).
    """
    if isinstance(domain, RadialDisc):
        n, dr, r = domain.n_r, domain.dr, domain.r
        inv_gamma = (1.0 - r**2) ** 2 / 4.0
        lower = np.zeros(n)
        diag = np.zeros(n)
        upper = np.zeros(n)
        i = np.arange(1, n - 1)
        lower[i] = inv_gamma[i] * (1.0 / dr**2 - 1.0 / (2 * dr * r[i]))
        diag[i] = inv_gamma[i] * (-2.0 / dr**2)
        upper[i] = inv_gamma[i] * (1.0 / dr**2 + 1.0 / (2 * dr * r[i]))
        diag[0] = -4.0 * inv_gamma[0] / dr**2
        upper[0] = 4.0 * inv_gamma[0] / dr**2
        return sp.diags([lower[1:], diag, upper[:-1]], [-1, 0, 1], format="csr")

    nx, ny = domain.shape
    hx2, hy2 = domain.hx**2, domain.hy**2
    y2 = domain.y**2
    idx = np.arange(nx * ny).reshape(nx, ny)
    I, J = np.meshgrid(np.arange(1, nx - 1), np.arange(1, ny - 1), indexing="ij")
    I, J = I.ravel(), J.ravel()
    rows = idx[I, J]
    w = y2[J]
    data = [w * (-2.0 / hx2 - 2.0 / hy2), w / hx2, w / hx2, w / hy2, w / hy2]
    cols = [idx[I, J], idx[I + 1, J], idx[I - 1, J], idx[I, J + 1], idx[I, J - 1]]
    return sp.csr_matrix(
        (np.concatenate(data), (np.tile(rows, 5), np.concatenate(cols))),
        shape=(nx * ny, nx * ny),
    )
