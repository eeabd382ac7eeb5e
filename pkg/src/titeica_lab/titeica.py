"""Solver and analysis for the Titeica-type equation

    Delta_h u - 4 ||U||_h^2 exp(-2u) - 4 exp(u) + 2 = 0

on the local models of :mod:`titeica_lab.domain`, with Dirichlet data on the
outer boundary (``-log 2`` by default, the constant supersolution).
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp
import scipy.sparse.linalg as spla
from scipy.optimize import bisect

from .domain import (CubicDiff, Domain, RadialDisc, ScalarField, laplacian_matrix,
                     norm_U_sq_h)

logger = logging.getLogger(__name__)

LOG2 = math.log(2.0)
SUPERSOLUTION = -LOG2
#: Existence threshold on max ||U||_h^2 for the constant sub-solution.
M_EXIST = 1.0 / 54.0
#: Range of the improved a-priori bound for small solutions.
M_SMALL = 1.0 / 16.0

MONOTONE = "monotone"
NEWTON = "newton"


class SolverError(RuntimeError):
    def __init__(self, message, report=None):
        super().__init__(message)
        self.report = report


class ConvergenceError(SolverError):
    pass


class BracketViolation(SolverError):
    pass


def f_profile(C, M):
    """``-4 M exp(-2C) - 4 exp(C) + 2``: value of the operator on the constant C."""
    if np.any(np.asarray(M) < 0):
        raise ValueError("M must be non-negative")
    return -4.0 * M * np.exp(-2.0 * C) - 4.0 * np.exp(C) + 2.0


def super_sub_constants(M: float, xtol: float = 1e-12):
    """Return ``(S, C_max, chi_M)`` for ``0 < M <= 1/16``.

    ``S = -log 2`` is the supersolution, ``C_max = log(2M)/3`` the unique
    critical point of :func:`f_profile`, and ``chi_M`` the lower bound for
    small solutions: the largest root of ``f_profile(., M)`` when
    ``M <= 1/54``, otherwise ``C_max`` itself.
    """
    if not (0.0 < M <= M_SMALL):
        raise ValueError(f"M={M} outside (0, 1/16]")
    c_max = math.log(2.0 * M) / 3.0
    if M > M_EXIST:
        return SUPERSOLUTION, c_max, c_max
    if f_profile(c_max, M) <= 0.0:
        # only happens at M = 1/54 up to rounding: the maximum touches zero
        return SUPERSOLUTION, c_max, c_max
    chi = bisect(lambda C: f_profile(C, M), c_max, SUPERSOLUTION, xtol=xtol, maxiter=200)
    return SUPERSOLUTION, c_max, chi


def lower_bound(M: float) -> float:
    """``chi_M`` extended by ``chi_0 = -log 2``."""
    if M == 0.0:
        return SUPERSOLUTION
    return super_sub_constants(M)[2]


def is_small(u, M: float, tol: float = 1e-12) -> bool:
    """Smallness: ``min u >= log(2M)/3`` (i.e. ``2 ||U||^2 exp(-3u) <= 1``)."""
    vals = u.values[u.valid] if isinstance(u, ScalarField) else np.asarray(u)
    if M <= 0.0:
        return True
    return bool(np.min(vals) >= math.log(2.0 * M) / 3.0 - tol)


def theta(normU2, u):
    return -4.0 * normU2 * np.exp(-2.0 * u) - 4.0 * np.exp(u) + 2.0


def dtheta_du(normU2, u):
    return 8.0 * normU2 * np.exp(-2.0 * u) - 4.0 * np.exp(u)


@dataclass
class TiteicaProblem:
    domain: Domain
    Q: CubicDiff = field(default_factory=lambda: CubicDiff.constant(0.0))
    method: str = MONOTONE
    tol: float = 1e-10
    max_iter: int = 500
    boundary_value: float = SUPERSOLUTION
    bound_tol: float = 1e-8

    def __post_init__(self):
        if self.method not in (MONOTONE, NEWTON):
            raise ValueError(f"unknown method {self.method!r}")
        self.normU2 = norm_U_sq_h(self.Q, self.domain)
        self.M = float(np.max(self.normU2.values))

    @property
    def existence_guaranteed(self) -> bool:
        return self.M <= M_EXIST * (1 + 1e-12)

    def with_method(self, method: str) -> "TiteicaProblem":
        return TiteicaProblem(self.domain, self.Q, method, self.tol, self.max_iter,
                              self.boundary_value, self.bound_tol)


@dataclass
class SolveReport:
    u: ScalarField
    iterations: int
    residual: float
    converged: bool
    method: str
    M: float
    chi: float
    lower_ok: bool
    upper_ok: bool
    small: bool
    existence_guaranteed: bool
    history: list = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "method": self.method,
            "iterations": self.iterations,
            "residual": self.residual,
            "converged": self.converged,
            "M": self.M,
            "chi_M": self.chi,
            "u_min": self.u.min(),
            "u_max": self.u.max(),
            "lower_bound_ok": self.lower_ok,
            "upper_bound_ok": self.upper_ok,
            "small": self.small,
            "existence_guaranteed": self.existence_guaranteed,
        }


def residual_H(u: ScalarField, problem: TiteicaProblem) -> ScalarField:
    """Pointwise residual of the equation at interior nodes."""
    if u.domain != problem.domain:
        raise ValueError("field and problem live on different domains")
    # the Laplacian kills constants; shifting keeps stencil round-off small
    w = u.values - problem.boundary_value
    lap = (laplacian_matrix(u.domain) @ w.ravel()).reshape(u.domain.shape)
    res = lap + theta(problem.normU2.values, u.values)
    mask = u.domain.interior_mask()
    res[~mask] = np.nan
    return ScalarField(u.domain, res, valid=mask)


def curvature_g(u: ScalarField, problem: TiteicaProblem) -> ScalarField:
    """Gaussian curvature of ``exp(u) h`` for a solution ``u``.

    Substituting the equation into ``exp(-u)(kappa_h - Delta_h u / 2)`` with
    ``kappa_h = -1`` gives ``-2 - 2 ||U||^2 exp(-3u)``.
    """
    return ScalarField(u.domain, -2.0 - 2.0 * problem.normU2.values * np.exp(-3.0 * u.values))


class _Discretisation:
    """Interior/boundary split of the discrete Laplacian for one problem."""

    def __init__(self, problem: TiteicaProblem):
        dom = problem.domain
        self.domain = dom
        self.shape = dom.shape
        mask = dom.interior_mask().ravel()
        self.interior = np.flatnonzero(mask)
        self.boundary = np.flatnonzero(~mask)
        L = laplacian_matrix(dom)
        self.L_II = L[self.interior][:, self.interior].tocsc()
        # unknown is the deviation w = u - u_b from the (constant) boundary value,
        # which keeps the round-off of the large stencil weights proportional to |w|
        self.ub = problem.boundary_value
        self.q = problem.normU2.values.ravel()[self.interior]
        self.radial = isinstance(dom, RadialDisc)
        if self.radial:
            # interior of the disc is nodes 0..n-2; bands of L_II
            d = self.L_II.diagonal()
            self.diag = d
            self.upper = self.L_II.diagonal(1)
            self.lower = self.L_II.diagonal(-1)

    def full(self, w_int) -> np.ndarray:
        out = np.zeros(int(np.prod(self.shape)))
        out[self.interior] = w_int
        return (out + self.ub).reshape(self.shape)

    def residual(self, w_int) -> np.ndarray:
        return self.L_II @ w_int + theta(self.q, self.ub + w_int)

    def solver(self, shift):
        """Return a callable solving ``(L_II + diag(shift)) x = b``."""
        shift = np.broadcast_to(np.asarray(shift, dtype=float), self.interior.shape)
        if self.radial:
            n = self.interior.size
            ab = np.zeros((3, n))
            ab[0, 1:] = self.upper
            ab[1, :] = self.diag + shift
            ab[2, :-1] = self.lower
            return lambda b: sla.solve_banded((1, 1), ab, b)
        A = (self.L_II + sp.diags(shift)).tocsc()
        lu = spla.splu(A)
        return lu.solve


def solve(problem: TiteicaProblem) -> SolveReport:
    """Solve the equation for ``problem`` starting from the supersolution.

    ``monotone``: ``(Delta - lam) u_{n+1} = -theta(u_n) - lam u_n`` with
    ``lam = 2 + 8 M exp(-2 chi_M)``, a decreasing sequence bracketed by
    ``[chi_M, -log 2]``. ``newton``: Newton steps on the residual with step
    halving until the max-norm residual decreases.
    """
    M = problem.M
    if M > M_SMALL:
        raise ValueError(f"max ||U||^2 = {M:.6g} exceeds 1/16; no a-priori bracket")
    if not problem.existence_guaranteed:
        logger.warning("M = %.6g > 1/54: existence is not guaranteed by the sub/super-solution argument", M)
    chi = lower_bound(M)
    disc = _Discretisation(problem)
    u_b = problem.boundary_value
    w = np.full(disc.interior.size, SUPERSOLUTION - u_b)
    res = disc.residual(w)
    rnorm = float(np.max(np.abs(res)))
    history = [rnorm]
    it = 0

    if problem.method == MONOTONE:
        lam = 2.0 + 8.0 * M * math.exp(-2.0 * chi)
        step = disc.solver(-lam)
        while rnorm > problem.tol and it < problem.max_iter:
            w = step(-theta(disc.q, u_b + w) - lam * w)
            it += 1
            rnorm = float(np.max(np.abs(disc.residual(w))))
            history.append(rnorm)
    else:
        while rnorm > problem.tol and it < problem.max_iter:
            dw = disc.solver(dtheta_du(disc.q, u_b + w))(-res)
            t = 1.0
            while True:
                trial = w + t * dw
                tres = disc.residual(trial)
                tnorm = float(np.max(np.abs(tres)))
                if tnorm < rnorm or t < 1e-10:
                    break
                t *= 0.5
            it += 1
            if tnorm >= rnorm:
                break
            w, res, rnorm = trial, tres, tnorm
            history.append(rnorm)

    field_u = ScalarField(problem.domain, disc.full(w))
    eps = problem.bound_tol
    report = SolveReport(
        u=field_u,
        iterations=it,
        residual=rnorm,
        converged=rnorm <= problem.tol,
        method=problem.method,
        M=M,
        chi=chi,
        lower_ok=bool(field_u.min() >= chi - eps),
        upper_ok=bool(field_u.max() <= SUPERSOLUTION + eps),
        small=is_small(field_u, M),
        existence_guaranteed=problem.existence_guaranteed,
        history=history,
    )
    if not report.converged:
        raise ConvergenceError(
            f"{problem.method} did not reach residual {problem.tol:g} "
            f"(got {rnorm:.3e} after {it} iterations)", report)
    if not (report.lower_ok and report.upper_ok):
        raise BracketViolation(
            f"solution leaves [chi_M, -log 2] = [{chi:.12g}, {SUPERSOLUTION:.12g}]", report)
    return report


# -- nonexistence for large cubic differentials ------------------------------------

def nonexistence_threshold(genus: int) -> float:
    """``(2 pi 4^(1/3) / 3)(g - 1)``."""
    if genus < 2:
        raise ValueError("genus must be at least 2")
    return 2.0 * math.pi * 4.0 ** (1.0 / 3.0) / 3.0 * (genus - 1)


def max_AB2(total: float):
    """Maximum of ``A B^2`` over ``A, B > 0`` with ``A + B = total``.

    Returns ``(max, A*, B*)``; the optimum is ``A = total/3``.
    """
    a, b = total / 3.0, 2.0 * total / 3.0
    return a * b * b, a, b


def max_AB2_genus(genus: int) -> float:
    """``(32/27) [pi (g-1)]^3``, the bound under ``A + B = 2 pi (g - 1)``."""
    if genus < 2:
        raise ValueError("genus must be at least 2")
    return 32.0 / 27.0 * (math.pi * (genus - 1)) ** 3


@dataclass(frozen=True)
class NonexistenceVerdict:
    threshold: float
    no_solution: bool

    @property
    def verdict(self) -> str:
        return "no solution" if self.no_solution else "no obstruction"


def nonexistence_test(integral_U23: float, genus: int) -> NonexistenceVerdict:
    """Compare ``int |U|^(2/3)`` with the threshold above which no solution exists."""
    if integral_U23 < 0:
        raise ValueError("integral of |U|^(2/3) is non-negative")
    T = nonexistence_threshold(genus)
    return NonexistenceVerdict(T, integral_U23 > T)


def constant_Q_for_M(domain: Domain, M: float) -> CubicDiff:
    """Constant cubic differential whose max ``||U||_h^2`` on ``domain`` equals ``M``."""
    gmin = float(np.min(domain.gamma()))
    return CubicDiff.constant(math.sqrt(M * gmin**3))
