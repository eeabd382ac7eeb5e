import json
import math
import warnings

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from titeica_lab import frames as fr
from titeica_lab.domain import CubicDiff, HalfPlanePatch
from titeica_lab.geometry import Q_FORM, herm, unitarity_residual
from titeica_lab.titeica import NEWTON, TiteicaProblem, constant_Q_for_M, solve

SQ2 = math.sqrt(2.0)
U0 = fr.build_AB_minimal(fr.HalfPlaneU0Factor(), CubicDiff.constant(0))


def _grid(cx, cy, h, n):
    xs = np.arange(-n, n + 1) * h
    return np.meshgrid(cx + xs, cy + xs, indexing="ij")


# -- connection matrices ----------------------------------------------------------

def test_normalised_point_matrices():
    Q = 0.7
    A, B = fr.build_AB_minimal(fr.ConstantFactor(1.0), CubicDiff.constant(Q)).AB(0.3 + 0.1j)
    assert np.allclose(A, [[0, 0, 1], [-Q, 0, 0], [0, 1, 0]], atol=0)
    assert np.allclose(B, [[0, Q, 0], [0, 0, 1], [1, 0, 0]], atol=0)


def test_half_plane_matrices_match_printed():
    y = 1.7
    A, B = U0.AB(0.4 + 1j * y)
    c = 1 / (y * SQ2)
    A_ref = np.array([[1j / (2 * y), 0, c], [0, -1j / (2 * y), 0], [0, c, 0]])
    B_ref = np.array([[1j / (2 * y), 0, 0], [0, -1j / (2 * y), c], [c, 0, 0]])
    assert np.max(np.abs(A - A_ref)) < 1e-15
    assert np.max(np.abs(B - B_ref)) < 1e-15
    # x and y parts of the form are constant multiples of 1/y
    assert np.allclose(y * (A + B), fr.L_U0, atol=1e-15)
    assert np.allclose(y * (1j * A - 1j * B), fr.K_U0, atol=1e-15)


@settings(max_examples=50, deadline=None)
@given(st.complex_numbers(max_magnitude=2, allow_nan=False, allow_infinity=False),
       st.complex_numbers(max_magnitude=1, allow_nan=False, allow_infinity=False),
       st.complex_numbers(max_magnitude=1, allow_nan=False, allow_infinity=False),
       st.floats(0.2, 3.0))
def test_u21_structure(Q, p, pt, y):
    conn = fr.build_AB_general(fr.HalfPlaneU0Factor(), CubicDiff.constant(Q), p, pt)
    A, B = conn.AB(np.array([0.1 + 1j * y]))
    assert np.max(np.abs(B + Q_FORM @ A.conj().swapaxes(-1, -2) @ Q_FORM)) < 1e-14
    # every combination X A + conj(X) B is in u(2,1)
    M = 0.3 * A[0] + 0.3 * B[0] + 1j * 0.8 * (A[0] - B[0])
    assert np.max(np.abs(M.conj().T @ Q_FORM + Q_FORM @ M)) < 1e-13


def test_general_reduces_to_minimal():
    Q = CubicDiff.constant(0.3 - 0.1j)
    z = np.array([0.2 + 1j, -0.1 + 2j])
    a = fr.build_AB_minimal(fr.HalfPlaneU0Factor(), Q).AB(z)
    b = fr.build_AB_general(fr.HalfPlaneU0Factor(), Q, 0.0, 0.0).AB(z)
    assert np.array_equal(a[0], b[0]) and np.array_equal(a[1], b[1])
    trA, trB = fr.trace_form(fr.build_AB_minimal(fr.HalfPlaneU0Factor(), Q), z)
    assert np.all(trA == 0) and np.all(trB == 0)


def test_trace_with_synthetic_pairings():
    p, pt = 0.1, 0.2j
    conn = fr.build_AB_general(fr.HalfPlaneU0Factor(), CubicDiff.constant(0.5), p, pt)
    trA, trB = fr.trace_form(conn, np.array([0.3 + 1.2j]))
    # diagonal entries l_z - conj(p), pt - l_z
    assert trA[0] == pytest.approx(pt - np.conj(p), abs=1e-15)
    assert trB[0] == pytest.approx(-np.conj(trA[0]), abs=1e-15)


# -- Maurer-Cartan residuals --------------------------------------------------------

def test_mc_residual_half_plane():
    X, Y = _grid(0.0, 1.0, 0.02, 5)
    assert np.max(fr.mc_residual(U0, X, Y, "analytic")) <= 1e-10
    errs = []
    for h in (0.02, 0.01):
        X, Y = _grid(0.0, 1.0, h, 5)
        errs.append(fr.mc_residual(U0, X, Y, "fd")[5, 5])
    assert 3.5 <= errs[0] / errs[1] <= 4.5
    R = fr.mc_residual(U0, X, Y, "fd")
    assert np.all(np.isnan(R[0])) and np.all(np.isnan(R[:, -1]))
    with pytest.raises(ValueError):
        fr.mc_residual(U0, X, Y, "spectral")


def test_mc_residual_detects_non_solution():
    conn = fr.build_AB_minimal(fr.ConstantFactor(1.0), CubicDiff.constant(1.0))
    X, Y = _grid(0.0, 0.0, 0.1, 3)
    # the diagonal picks up s^2 + |Q|^2 s^-4 = 2
    assert np.nanmin(fr.mc_residual(conn, X, Y, "fd")) >= 1.0
    assert np.min(fr.mc_residual(conn, X, Y, "analytic")) >= 1.0


def test_mc_residual_patch_solution_second_order():
    errs = []
    X, Y = _grid(0.0, 1.0, 0.05, 4)
    for n in (33, 65, 129):
        d = HalfPlanePatch(nx=n, ny=n)
        Q = constant_Q_for_M(d, 1 / 54)
        rep = solve(TiteicaProblem(d, Q, method=NEWTON))
        conn = fr.build_AB_minimal(fr.PatchFactor(rep.u), Q)
        errs.append(np.max(fr.mc_residual(conn, X, Y, "analytic")))
    assert errs[0] / errs[1] >= 3.5 and errs[1] / errs[2] >= 3.5


def test_mc_residuals_general_examples(disc_solution_54):
    X, Y = _grid(0.0, 1.0, 0.1, 3)
    g, c, k = fr.mc_residuals_general(fr.HalfPlaneU0Factor(), CubicDiff.polynomial([1, 2, 3]), X, Y)
    assert np.all(k == 0) and np.all(c == 0)
    # flat metric on a hyperbolic patch: the s^2 term is left over
    g, _, _ = fr.mc_residuals_general(fr.ConstantFactor(1.0), CubicDiff.constant(0), X, Y)
    assert np.allclose(g, -1.0)
    g, _, _ = fr.mc_residuals_general(fr.HalfPlaneU0Factor(), CubicDiff.constant(0), X, Y)
    assert np.max(np.abs(g)) < 1e-13
    rep, Q = disc_solution_54
    Xd, Yd = _grid(0.3, 0.2, 0.05, 3)
    g, _, _ = fr.mc_residuals_general(fr.RadialFactor(rep.u), Q, Xd, Yd)
    assert np.max(np.abs(g)) <= 1e-5


def test_mc_residuals_general_with_pairings():
    X, Y = _grid(0.0, 1.0, 0.01, 3)
    p = lambda z: 0.1 * z
    pt = lambda z: 0.2j * np.conj(z)
    g, c, k = fr.mc_residuals_general(fr.HalfPlaneU0Factor(), CubicDiff.constant(0), X, Y, p, pt)
    # |p|^2 shows up in the Gauss residual, d/dz pt - d/dzbar p = 0 - 0
    assert np.allclose(g, np.abs(0.1 * (X + 1j * Y)) ** 2, atol=1e-12)
    assert np.nanmax(c) < 1e-12
    # pt s^-2 = 0.4i conj(z) y^2, so (pt s^-2)_z = 0.4 conj(z) y, up to O(h^2) stencil error
    errs = []
    for h in (0.01, 0.005):
        X, Y = _grid(0.0, 1.0, h, 3)
        _, _, k = fr.mc_residuals_general(fr.HalfPlaneU0Factor(), CubicDiff.constant(0), X, Y, p, pt)
        Z = X + 1j * Y
        errs.append(np.nanmax(np.abs(k - np.abs(0.4 * np.conj(Z) * Y))))
    assert errs[0] < 1e-4 and errs[0] / errs[1] >= 3.5


# -- frame integration ---------------------------------------------------------------

def test_zero_connection_gives_identity():
    res = fr._rk4_batch(_ZeroConn(), np.eye(3), 0j, 0.01, 50)
    assert np.array_equal(res, np.eye(3))


class _ZeroConn:
    def AB(self, z):
        z = np.asarray(z)
        return np.zeros(z.shape + (3, 3), complex), np.zeros(z.shape + (3, 3), complex)


@pytest.mark.parametrize("route", [[1j, 1 + 1j, 1 + 2j], [1j, 2j, 1 + 2j]])
def test_closed_form_reproduced(route):
    F0, _ = fr.closed_form_U0(0.0, 1.0)
    res = fr.integrate_frame(U0, fr.PathSpec(route, max_step=1e-2, F0=F0))
    F_ref, f_ref = fr.closed_form_U0(1.0, 2.0)
    assert np.max(np.abs(res.F - F_ref)) <= 1e-6
    assert np.max(np.abs(res.f - f_ref)) <= 1e-6


def test_closed_form_lattice():
    F0, _ = fr.closed_form_U0(0.0, 1.0)
    worst = 0.0
    for x in np.linspace(0, 2, 10):
        for y in np.linspace(1, 3, 10):
            res = fr.integrate_frame(U0, fr.PathSpec([1j, x + 1j, x + 1j * y], 1e-2, F0))
            worst = max(worst, np.max(np.abs(res.F - fr.closed_form_U0(x, y)[0])))
    assert worst <= 1e-6


LOOP = [0.1, 0.6, 0.6 + 0.5j, 0.1 + 0.5j, 0.1]


def test_holonomy_of_contractible_loop(disc_solution_54_coarse):
    rep, Q = disc_solution_54_coarse
    conn = fr.build_AB_minimal(fr.RadialFactor(rep.u), Q)
    errs = []
    for step in (0.1, 0.05, 0.025):
        res = fr.integrate_frame(conn, fr.PathSpec(LOOP, max_step=step))
        errs.append(np.max(np.abs(res.F - np.eye(3))))
    assert errs[0] / errs[1] >= 12 and errs[1] / errs[2] >= 12
    assert errs[-1] < 1e-6
    res = fr.integrate_frame(U0, fr.PathSpec([0.3 + 1j, 0.8 + 1j, 0.8 + 1.5j, 0.3 + 1.5j, 0.3 + 1j]))
    assert np.max(np.abs(res.F - np.eye(3))) < 1e-12


def test_drift_linear_and_reprojection(disc_solution_54_coarse):
    rep, Q = disc_solution_54_coarse
    conn = fr.build_AB_minimal(fr.RadialFactor(rep.u), Q)
    drift = [fr.integrate_frame(conn, fr.PathSpec(LOOP * m, max_step=0.1)).drift[-1]
             for m in (1, 2, 4)]
    assert drift[0] < 1e-3
    assert drift[1] / drift[0] == pytest.approx(2, rel=0.05)
    assert drift[2] / drift[0] == pytest.approx(4, rel=0.05)
    fixed = fr.integrate_frame(conn, fr.PathSpec(LOOP * 4, max_step=0.1), reproject=True)
    assert max(fixed.drift) <= 1e-9
    # a det = i start keeps its determinant under reprojection
    F0, _ = fr.closed_form_U0(0.0, 1.0)
    res = fr.integrate_frame(U0, fr.PathSpec([1j, 2 + 1j, 2 + 3j], 0.05, F0), reproject=True)
    assert abs(np.linalg.det(res.F) - 1j) <= 1e-9 and max(res.drift) <= 1e-9


def test_identity_start_stays_special(disc_solution_54_coarse):
    rep, Q = disc_solution_54_coarse
    conn = fr.build_AB_minimal(fr.RadialFactor(rep.u), Q)
    res = fr.integrate_frame(conn, fr.PathSpec([0, 0.4, 0.4 + 0.4j], max_step=1e-3))
    assert abs(np.linalg.det(res.F) - 1) <= 1e-9
    assert unitarity_residual(res.F) <= 1e-9


def test_non_flat_data_warns():
    conn = fr.build_AB_minimal(fr.ConstantFactor(1.0), CubicDiff.constant(1.0))
    with pytest.warns(RuntimeWarning, match="not flat"):
        fr.integrate_frame(conn, fr.PathSpec([0, 0.1]))
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        fr.integrate_frame(U0, fr.PathSpec([1j, 1.1j]))


def test_integration_errors():
    with pytest.raises(ValueError, match="underflow"):
        fr.PathSpec([0, 1], max_step=0.0)
    with pytest.raises(ValueError):
        fr.PathSpec([])
    with pytest.raises(ValueError, match="leaves"):
        fr.integrate_frame(U0, fr.PathSpec([1j, -1j]))
    with pytest.raises(fr.FrameDegeneracy):
        F0 = np.outer([1, 0, 1], [1, 1, 1]).astype(complex)
        fr.integrate_frame(U0, fr.PathSpec([1j, 1.01j], F0=F0))


# -- closed form ---------------------------------------------------------------------

def test_closed_form_examples():
    _, f = fr.closed_form_U0(0.0, 1.0)
    assert np.allclose(f, [0, 0, 1], atol=1e-15)
    _, f = fr.closed_form_U0(1.0, 1.0)
    assert np.allclose(f, [1, 0.5, 1.5], atol=1e-14)
    with pytest.raises(ValueError):
        fr.closed_form_U0(0.0, 0.0)
    assert abs(np.linalg.det(fr.F0_U0) - 1j) < 1e-15


@settings(max_examples=60, deadline=None)
@given(st.floats(-3, 3), st.floats(0.1, 5))
def test_closed_form_on_real_hyperboloid(x, y):
    F, f = fr.closed_form_U0(x, y)
    assert np.max(np.abs(f.imag)) < 1e-12
    assert f[0].real ** 2 + f[1].real ** 2 - f[2].real ** 2 == pytest.approx(-1, abs=1e-10 * (1 + abs(f) .max() ** 2))
    assert np.allclose(f, fr.closed_form_U0_f(x, y), atol=1e-12 * (1 + np.abs(f).max()))
    assert unitarity_residual(F) < 1e-11 * (1 + np.abs(F).max() ** 2)


def test_frame_json_roundtrip():
    F, _ = fr.closed_form_U0(0.3, 1.7)
    back = fr.frame_from_dict(json.loads(json.dumps(fr.frame_to_dict(F))))
    assert np.array_equal(back, F)


# -- recovery diagnostics ------------------------------------------------------------

def test_diagnostics_on_closed_form():
    h, n = 1e-3, 8
    offs = np.arange(-n, n + 1) * h
    X, Y = np.meshgrid(offs, 1 + offs, indexing="ij")
    d = fr.extract_and_verify(fr.closed_form_U0_f(X, Y), h, 1 / SQ2, 0.0)
    assert d.speed == pytest.approx(1 / SQ2, abs=1e-9)
    assert abs(d.recovered_Q) <= 1e-6
    assert d.worst() <= 1e-6
    with pytest.raises(ValueError):
        fr.extract_and_verify(fr.closed_form_U0_f(X[5:-5, 5:-5], Y[5:-5, 5:-5]), h, 1.0, 0.0)


def test_diagnostics_on_integrated_frame(disc_solution_54):
    rep, Q = disc_solution_54
    fac = fr.RadialFactor(rep.u)
    conn = fr.build_AB_minimal(fac, Q)
    zc = 0.3 + 0.2j
    P, _ = fr.frame_patch(conn, np.eye(3), zc, 1e-3, 12)
    d = fr.extract_and_verify(P, 1e-3, float(fac(zc)), complex(Q(zc)))
    assert d.worst() <= 1e-4
    assert abs(herm(P[12, 12, :, 2], P[12, 12, :, 2]) + 1) < 1e-12
