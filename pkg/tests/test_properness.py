import math

import mpmath
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from titeica_lab import frames as fr
from titeica_lab.domain import CubicDiff, HalfPlanePatch, RadialDisc
from titeica_lab.properness import (DELTA_MAX, GrowthConfig, adversarial_G, default_X0,
                                    f33_from_row, gradient_bound_check, k_and_C,
                                    reduction_matrices, simulate_growth)
from titeica_lab.titeica import NEWTON, TiteicaProblem, constant_Q_for_M, solve

SQ2 = math.sqrt(2.0)


# -- growth constants -----------------------------------------------------------------

def test_k_at_delta_max():
    c = k_and_C(DELTA_MAX)
    assert c.b == pytest.approx(2.0, abs=1e-12)
    assert c.k == pytest.approx(1.0, abs=1e-7)


def test_k_and_C_against_high_precision():
    mpmath.mp.dps = 40
    d = mpmath.mpf("0.05")
    b = (1 - 3 * d) / (2 * d * mpmath.sqrt(2))
    k = (b + mpmath.sqrt(b * b - 4)) / 2
    C = 1 - d - k * d * mpmath.sqrt(2)
    c = k_and_C(0.05)
    assert c.b == pytest.approx(float(b), abs=1e-13)
    assert c.b == pytest.approx(6.0104, abs=1e-4)
    assert c.k == pytest.approx(float(k), abs=1e-12)
    assert c.C == pytest.approx(float(C), abs=1e-12)
    assert c.k == pytest.approx(5.839, abs=1e-3) and c.C == pytest.approx(0.5371, abs=1e-4)
    assert abs(c.quadratic_residual()) < 1e-12


def test_k_blows_up_as_delta_vanishes():
    ks = [k_and_C(d).k for d in (0.001, 0.01, 0.05)]
    assert ks[0] > ks[1] > ks[2] and ks[0] > 100


def test_k_decreasing_on_grid():
    deltas = np.linspace(1e-3, DELTA_MAX, 100)
    ks = np.array([k_and_C(d).k for d in deltas])
    assert np.all(np.diff(ks) < 0)
    assert np.all(ks >= 1 - 1e-7)
    # no jumps: midpoint values fall strictly between their neighbours
    mids = np.array([k_and_C(d).k for d in 0.5 * (deltas[1:] + deltas[:-1])])
    assert np.all((mids < ks[:-1]) & (mids > ks[1:]))


@settings(max_examples=100, deadline=None)
@given(st.floats(1e-4, DELTA_MAX))
def test_growth_constants_properties(delta):
    c = k_and_C(delta)
    assert c.C > 0
    assert abs(c.quadratic_residual()) <= 1e-9 * c.k * c.k
    # what the growth argument consumes: C k >= delta sqrt2 + 2 k delta
    assert c.inequality_slack() >= -1e-12


def test_balancing_identity_does_not_hold():
    # the balancing equality delta sqrt2 + 2 k delta = C k fails for this k and C
    c = k_and_C(0.05)
    assert c.balancing_residual() == pytest.approx(-2.4816, abs=1e-4)
    # with b = (1 - 3 delta)/(delta sqrt2) the identity holds exactly
    d = 0.05
    b = (1 - 3 * d) / (d * SQ2)
    k = 0.5 * (b + math.sqrt(b * b - 4))
    C = 1 - d - k * d * SQ2
    assert d * SQ2 + 2 * k * d - C * k == pytest.approx(0, abs=1e-12)


def test_delta_out_of_range():
    for d in (0.0, -0.1, 0.2):
        with pytest.raises(ValueError):
            k_and_C(d)


# -- simulation ------------------------------------------------------------------------

def test_zero_perturbation_is_diagonal():
    cfg = GrowthConfig(0.05, T=2.0, steps=2000, trials=1, generator="constant",
                       G=np.zeros((3, 3)))
    res = simulate_growth(cfg)
    x3 = 1 / (2 * SQ2)
    x1 = x3 / (2 * res.constants.k)
    assert np.allclose(res.trajectory[:, 2], x3 * np.exp(res.t), rtol=1e-12)
    assert np.allclose(res.trajectory[:, 0], x1 * np.exp(-res.t), rtol=1e-12)
    assert res.verdict and res.margins[0] >= 1


def test_printed_initial_condition_is_rejected():
    # (1/(2 sqrt2), 0, 1/(2 sqrt2)) has |x3| = |x~|, so it fails |x3| > k|x~| for k > 1
    x = 1 / (2 * SQ2)
    with pytest.raises(ValueError, match="initial condition"):
        simulate_growth(GrowthConfig(0.05, trials=1, steps=10, X0=(x, 0, x)))
    assert simulate_growth(GrowthConfig(DELTA_MAX * 0.999999, T=1, steps=100, trials=1,
                                        X0=(0, 0, x))).verdict


@pytest.mark.parametrize("generator", ["piecewise-random", "constant", "sinusoidal"])
def test_growth_bound_holds(generator):
    res = simulate_growth(GrowthConfig(0.05, T=10, steps=10_000, trials=100, seed=1,
                                       generator=generator), record=True)
    assert res.verdict, res.margins.min()
    # discrete form of d/dt m >= C m along the recorded trial
    m = np.abs(res.trajectory[:, 2]) - res.constants.k * np.linalg.norm(res.trajectory[:, :2], axis=1)
    h = res.t[1] - res.t[0]
    assert np.all(m[1:] >= m[:-1] * math.exp(res.constants.C * h) * (1 - 1e-9))


def test_adversarial_G_is_admissible():
    G = adversarial_G(0.05)
    assert np.max(np.abs(G)) <= 0.05 + 1e-15
    assert G[2, 2] == -0.05 and G[2, 0] == pytest.approx(0.05 / SQ2)
    with pytest.raises(ValueError):
        simulate_growth(GrowthConfig(0.05, generator="constant", G=np.full((3, 3), 0.1)))


def test_seeding():
    cfg = GrowthConfig(0.05, T=2, steps=500, trials=5, seed=9)
    a = simulate_growth(cfg)
    b = simulate_growth(cfg)
    assert np.array_equal(a.trajectory, b.trajectory) and np.array_equal(a.margins, b.margins)
    c = simulate_growth(GrowthConfig(0.05, T=2, steps=500, trials=5, seed=10))
    assert not np.array_equal(a.trajectory, c.trajectory)
    # trial 0 does not depend on the number of trials
    d = simulate_growth(GrowthConfig(0.05, T=2, steps=500, trials=2, seed=9))
    assert np.array_equal(a.trajectory, d.trajectory)
    rows = list(simulate_growth(cfg, record=False).rows())
    assert len(rows) == 5 and set(rows[0]) == {"seed", "trial", "delta", "k", "C", "min_margin"}


def test_config_validation():
    with pytest.raises(ValueError):
        GrowthConfig(0.05, generator="brownian")
    with pytest.raises(ValueError):
        GrowthConfig(0.05, steps=0)
    cfg = GrowthConfig.from_dict({"delta": 0.05, "X0": [[0, 0], [0, 0], [1, 0]]})
    assert cfg.X0 == (0j, 0j, 1 + 0j)
    assert default_X0(2.0)[0] == pytest.approx(1 / (8 * SQ2))


# -- reduction ---------------------------------------------------------------------------

def test_reduction_matrices():
    red = reduction_matrices()
    assert red.conjugation_residual <= 1e-14
    assert red.inverse_residual <= 1e-14
    assert red.Y0_residual <= 1e-14
    assert np.allclose(red.eigenvalues, [-1, 0, 1], atol=1e-14)
    assert red.Y0[1, 0] == pytest.approx(-1 / (2 * SQ2))


@pytest.mark.parametrize("y", [0.5, 1.0, 3.0, 20.0])
def test_f33_tracks_closed_form(y):
    F, f = fr.closed_form_U0(0.0, y)
    X = (F @ reduction_matrices().P)[2]
    # exp(D log y) on the bottom row of Y0
    assert X[2] == pytest.approx(y / (2 * SQ2), rel=1e-12)
    assert f33_from_row(X) == pytest.approx(f[2], rel=1e-12)
    assert f[2].real == pytest.approx((1 + y * y) / (2 * y), rel=1e-12)


# -- gradient bound --------------------------------------------------------------------

def test_gradient_bound_zero_cubic():
    d = RadialDisc(n_r=256)
    rep = solve(TiteicaProblem(d))
    g = gradient_bound_check(rep.u, CubicDiff.constant(0))
    assert g.lhs <= 1e-20 and g.rhs == 0 and g.verdict


def test_gradient_bound_at_threshold(disc_solution_54):
    rep, Q = disc_solution_54
    g = gradient_bound_check(rep.u, Q)
    assert g.verdict and g.margin > 0
    assert set(g.to_dict()) == {"lhs", "rhs", "margin", "verdict"}
    d = HalfPlanePatch(nx=65, ny=65)
    Qp = constant_Q_for_M(d, 1 / 54)
    assert gradient_bound_check(solve(TiteicaProblem(d, Qp, method=NEWTON)).u, Qp).verdict


def test_gradient_lhs_vanishes_with_cubic():
    d = RadialDisc(n_r=512)
    cmax = constant_Q_for_M(d, 1 / 54)
    lhs = []
    for t in (1e-2, 1e-3, 1e-4):
        Q = cmax.scaled(t)
        lhs.append(gradient_bound_check(solve(TiteicaProblem(d, Q, method=NEWTON)).u, Q).lhs)
    assert lhs[0] > lhs[1] > lhs[2]
    assert lhs[2] < 1e-12
