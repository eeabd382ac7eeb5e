"""Growth estimates behind properness of the developing map.

Three pieces:

* the perturbed diagonal ODE ``X' = X (diag(-1, 0, 1) + G)`` with
  ``|g_ij| <= delta`` and its exponential lower bound
  ``|x3| - k|x~| >= (|x3(0)| - k|x~(0)|) exp(C t)``;
* the constant matrices diagonalising the ``U = 0`` frame equation in ``t = log y``;
* the a-priori gradient bound ``max (1/4)||grad u||^2 <= max ||exp(-2u) grad ||U||^2||^2``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .domain import CubicDiff, RadialDisc, ScalarField, norm_U_sq_h
from .frames import F0_U0, K_U0, L_U0

SQRT2 = math.sqrt(2.0)
DELTA_MAX = 1.0 / (4.0 * SQRT2 + 3.0)
DIAG = np.diag([-1.0, 0.0, 1.0]).astype(complex)

GENERATORS = ("piecewise-random", "constant", "sinusoidal")


@dataclass(frozen=True)
class GrowthConstants:
    delta: float
    k: float
    C: float

    @property
    def b(self) -> float:
        return (1.0 - 3.0 * self.delta) / (2.0 * self.delta * SQRT2)

    def quadratic_residual(self) -> float:
        """``k^2 - b k + 1`` for the defining quadratic."""
        return self.k * self.k - self.b * self.k + 1.0

    def balancing_residual(self) -> float:
        """``(delta sqrt2 + 2 k delta) - C k``."""
        d = self.delta
        return d * SQRT2 + 2.0 * self.k * d - self.C * self.k

    def inequality_slack(self) -> float:
        """``C k - (delta sqrt2 + 2 k delta)``; nonnegative is what the growth estimate needs."""
        return -self.balancing_residual()

    def to_dict(self) -> dict:
        return {"delta": self.delta, "k": self.k, "C": self.C}


def k_and_C(delta: float) -> GrowthConstants:
    """``k`` the larger root of ``k^2 - b k + 1`` with ``b = (1 - 3 delta)/(2 delta sqrt2)``
    and ``C = 1 - delta - k delta sqrt2``."""
    if not 0.0 < delta <= DELTA_MAX * (1.0 + 1e-15):
        raise ValueError(f"delta must lie in (0, 1/(4 sqrt2 + 3)] = (0, {DELTA_MAX:.12g}]")
    b = (1.0 - 3.0 * delta) / (2.0 * delta * SQRT2)
    k = 0.5 * (b + math.sqrt(max(b * b - 4.0, 0.0)))
    C = 1.0 - delta - k * delta * SQRT2
    return GrowthConstants(delta, k, C)


@dataclass
class GrowthConfig:
    delta: float
    T: float = 10.0
    steps: int = 10_000
    trials: int = 100
    seed: int = 0
    generator: str = "piecewise-random"
    X0: Optional[tuple] = None   # default: x3 = 1/(2 sqrt2), x2 = 0, x1 = x3/(2k)
    G: Optional[np.ndarray] = None  # for the constant generator; default adversarial

    def __post_init__(self):
        if self.generator not in GENERATORS:
            raise ValueError(f"unknown generator {self.generator!r}")
        if self.steps < 1 or self.trials < 1 or not self.T > 0:
            raise ValueError("steps, trials and T must be positive")

    @classmethod
    def from_dict(cls, d: dict) -> "GrowthConfig":
        d = dict(d)
        if d.get("X0") is not None:
            d["X0"] = tuple(complex(*v) if isinstance(v, (list, tuple)) else complex(v)
                            for v in d["X0"])
        if d.get("G") is not None:
            d["G"] = np.asarray(d["G"], float)
        return cls(**d)


@dataclass
class GrowthResult:
    constants: GrowthConstants
    config: GrowthConfig
    margins: np.ndarray          # per-trial min_t of the normalised margin
    t: np.ndarray = field(repr=False, default=None)
    trajectory: np.ndarray = field(repr=False, default=None)  # trial 0, shape (steps+1, 3)

    @property
    def verdict(self) -> bool:
        return bool(np.all(self.margins >= 1.0 - 1e-9))

    def rows(self):
        c = self.constants
        for i, m in enumerate(self.margins):
            yield {"seed": self.config.seed, "trial": i, "delta": c.delta, "k": c.k, "C": c.C,
                   "min_margin": float(m)}


def adversarial_G(delta: float) -> np.ndarray:
    """Constant ``G`` working against the estimate.

    With the row-vector convention ``x_j' = sum_i x_i (D + G)_ij``: ``g33 = -delta``
    damps ``x3``, ``g13 = g23 = -delta/sqrt2`` feed ``x~`` against ``x3``,
    ``g31 = g32 = delta/sqrt2`` feed ``x3`` into ``x~`` and ``g11 = g22 = delta``
    let ``x~`` grow.
    """
    G = np.zeros((3, 3), complex)
    G[2, 2] = -delta
    G[0, 2] = G[1, 2] = -delta / SQRT2
    G[2, 0] = G[2, 1] = delta / SQRT2
    G[0, 0] = G[1, 1] = delta
    return G


def default_X0(k: float):
    x3 = 1.0 / (2.0 * SQRT2)
    return (x3 / (2.0 * k), 0.0, x3)


def _margin_quantity(X, k):
    return np.abs(X[..., 2]) - k * np.linalg.norm(X[..., :2], axis=-1)


class _Generator:
    """Per-step ``G`` for every trial; deterministic from ``(seed, trial)``."""

    def __init__(self, cfg: GrowthConfig, chunk: int = 1000):
        self.cfg = cfg
        self.chunk = chunk
        self.rngs = [np.random.default_rng([cfg.seed, i]) for i in range(cfg.trials)]
        self.buf = None
        self.start = 0
        if cfg.generator == "sinusoidal":
            d = cfg.delta
            phases = np.stack([r.uniform(0, 2 * np.pi, (3, 3, 2)) for r in self.rngs])
            freqs = np.stack([r.uniform(0.5, 5.0, (3, 3)) for r in self.rngs])
            self.sin = (d, phases, freqs)
        elif cfg.generator == "constant":
            G = adversarial_G(cfg.delta) if cfg.G is None else np.asarray(cfg.G, complex)
            if np.any(np.abs(G) > cfg.delta * (1 + 1e-12)):
                raise ValueError("constant G violates |g_ij| <= delta")
            self.G = np.broadcast_to(G, (cfg.trials, 3, 3))

    def _fill(self, n0: int):
        d = self.cfg.delta
        m = min(self.chunk, self.cfg.steps - n0)
        out = np.empty((self.cfg.trials, m, 3, 3), complex)
        for i, r in enumerate(self.rngs):
            # uniform in the disc of radius delta
            rad = d * np.sqrt(r.uniform(0.0, 1.0, (m, 3, 3)))
            ang = r.uniform(0.0, 2 * np.pi, (m, 3, 3))
            out[i] = rad * np.exp(1j * ang)
        self.buf, self.start = out, n0

    def __call__(self, n: int, t: float):
        g = self.cfg.generator
        if g == "constant":
            return self.G
        if g == "sinusoidal":
            d, ph, fr = self.sin
            return d * np.sin(fr * t + ph[..., 0]) * np.exp(1j * ph[..., 1])
        if self.buf is None or n >= self.start + self.buf.shape[1]:
            self._fill(n)
        return self.buf[:, n - self.start]


def simulate_growth(cfg: GrowthConfig, record: bool = True) -> GrowthResult:
    """RK4 for ``X' = X (diag(-1,0,1) + G(t))`` over all trials at once.

    ``G`` is frozen over each step (piecewise-random and constant generators)
    or evaluated at the stage times (sinusoidal). The reported margin per
    trial is ``min_t (|x3| - k|x~|) exp(-C t) / (|x3(0)| - k|x~(0)|)``.
    """
    const = k_and_C(cfg.delta)
    k, C = const.k, const.C
    X0 = np.asarray(default_X0(k) if cfg.X0 is None else cfg.X0, complex)
    m0 = float(_margin_quantity(X0, k))
    if not m0 > 0:
        raise ValueError(f"initial condition violates |x3| > k|x~| (k = {k:.6g})")
    X = np.broadcast_to(X0, (cfg.trials, 3)).copy()
    h = cfg.T / cfg.steps
    gen = _Generator(cfg)
    margins = np.ones(cfg.trials)
    traj = np.empty((cfg.steps + 1, 3), complex) if record else None
    if record:
        traj[0] = X[0]
    frozen = cfg.generator != "sinusoidal"
    for n in range(cfg.steps):
        t = n * h
        if frozen:
            M = DIAG + gen(n, t)
            k1 = X[:, None, :] @ M
            k2 = (X + 0.5 * h * k1[:, 0])[:, None, :] @ M
            k3 = (X + 0.5 * h * k2[:, 0])[:, None, :] @ M
            k4 = (X + h * k3[:, 0])[:, None, :] @ M
        else:
            M0, Mh, M1 = DIAG + gen(n, t), DIAG + gen(n, t + 0.5 * h), DIAG + gen(n, t + h)
            k1 = X[:, None, :] @ M0
            k2 = (X + 0.5 * h * k1[:, 0])[:, None, :] @ Mh
            k3 = (X + 0.5 * h * k2[:, 0])[:, None, :] @ Mh
            k4 = (X + h * k3[:, 0])[:, None, :] @ M1
        X = X + (h / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)[:, 0]
        tn = (n + 1) * h
        margins = np.minimum(margins, _margin_quantity(X, k) * math.exp(-C * tn) / m0)
        if record:
            traj[n + 1] = X[0]
    t = np.linspace(0.0, cfg.T, cfg.steps + 1) if record else None
    return GrowthResult(const, cfg, margins, t, traj)


# -- reduction of the U = 0 frame equation --------------------------------------------

P_INV = np.array([[1j, -1j, SQRT2],
                  [1, 1, 0],
                  [-1j, 1j, SQRT2]], dtype=complex)
P = np.array([[-0.25j, 0.5, 0.25j],
              [0.25j, 0.5, -0.25j],
              [1 / (2 * SQRT2), 0, 1 / (2 * SQRT2)]], dtype=complex)
Y0_PRINTED = np.array([[0, 1 / SQRT2, 0],
                       [-1 / (2 * SQRT2), 0, 1 / (2 * SQRT2)],
                       [1 / (2 * SQRT2), 0, 1 / (2 * SQRT2)]], dtype=complex)


@dataclass
class Reduction:
    L: np.ndarray
    K: np.ndarray
    P: np.ndarray
    P_inv: np.ndarray
    F0: np.ndarray
    Y0: np.ndarray
    conjugation_residual: float   # max |P^-1 K P - diag(-1,0,1)|
    inverse_residual: float       # max |P^-1 P - I|
    Y0_residual: float            # max |F0 P - printed Y0|
    eigenvalues: np.ndarray


def reduction_matrices() -> Reduction:
    D = P_INV @ K_U0 @ P
    Y0 = F0_U0 @ P
    eig = np.sort(np.linalg.eigvals(K_U0).real)
    return Reduction(
        L=L_U0.copy(), K=K_U0.copy(), P=P.copy(), P_inv=P_INV.copy(), F0=F0_U0.copy(), Y0=Y0,
        conjugation_residual=float(np.max(np.abs(D - DIAG))),
        inverse_residual=float(np.max(np.abs(P_INV @ P - np.eye(3)))),
        Y0_residual=float(np.max(np.abs(Y0 - Y0_PRINTED))),
        eigenvalues=eig,
    )


def f33_from_row(X):
    """``f33 = sqrt2 (x1 + x3)`` for the bottom row ``X`` of ``Y = F P``."""
    X = np.asarray(X)
    return SQRT2 * (X[..., 0] + X[..., 2])


# -- gradient bound ------------------------------------------------------------------

@dataclass
class GradientBound:
    lhs: float   # max (1/4) ||grad u||_h^2
    rhs: float   # max ||exp(-2u) grad ||U||_h^2 ||_h^2
    tol: float

    @property
    def verdict(self) -> bool:
        return self.lhs <= self.rhs + self.tol

    @property
    def margin(self) -> float:
        return self.rhs - self.lhs

    def to_dict(self) -> dict:
        return {"lhs": self.lhs, "rhs": self.rhs, "margin": self.margin, "verdict": self.verdict}


def _grad_sq_h(f: np.ndarray, domain) -> np.ndarray:
    """``||grad f||_h^2 = |grad f|^2 / gamma`` by second-order differences."""
    if isinstance(domain, RadialDisc):
        fr = np.gradient(f, domain.r, edge_order=2)
        return fr * fr / domain.gamma()
    fx, fy = np.gradient(f, domain.hx, domain.hy, edge_order=2)
    return (fx * fx + fy * fy) / domain.gamma()


def gradient_bound_check(u: ScalarField, Q: CubicDiff, tol: float = 1e-8) -> GradientBound:
    """Compare ``max (1/4)||grad u||^2`` with ``max ||exp(-2u) grad ||U||^2||^2`` (both in ``h``)."""
    d = u.domain
    N = norm_U_sq_h(Q, d).values
    lhs = 0.25 * _grad_sq_h(u.values, d)
    rhs = np.exp(-4.0 * u.values) * _grad_sq_h(N, d)
    return GradientBound(float(lhs.max()), float(rhs.max()), tol)
