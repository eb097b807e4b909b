import numpy as np
import pytest
import scipy.linalg
from hypothesis import given, settings, strategies as st

from mslab import dynsys, fields, lyapunov
from mslab.expr import Expr
from mslab.mesh import build_grid, sample


@pytest.fixture(scope="module")
def cycles_recurrent(torus64):
    return dynsys.classify(fields.torus_cycles(), torus64)


def test_psi_closed_form(torus64):
    psi = lyapunov.psi_field(Expr("4*(1 - cos(y))"), fields.torus_cycles(), torus64)
    y = torus64.coords()[1]
    assert np.max(np.abs(psi.values - 2 * np.sin(y) ** 2)) <= 1e-12


def test_psi_from_samples(torus64):
    L = sample(torus64, lambda x, y: 4 * (1 - np.cos(y)))
    psi = lyapunov.psi_field(L, fields.torus_cycles(), torus64)
    y = torus64.coords()[1]
    assert np.max(np.abs(psi.values - 2 * np.sin(y) ** 2)) <= 1e-4


def test_psi_constant_L(torus64):
    psi = lyapunov.psi_field(Expr("3"), fields.torus_cycles(), torus64)
    assert np.all(psi.values == 0)


def test_gradient_case_psi_nonpositive(torus64):
    phi = "-(cos(x) + cos(y))"
    omega = fields.gradient(phi, 2, sign=-1.0)
    psi = lyapunov.psi_field(Expr(phi), omega, torus64)
    x, y = torus64.coords()
    assert np.allclose(psi.values, -(np.sin(x) ** 2 + np.sin(y) ** 2) / 4, atol=1e-12)


def test_verify_pass(torus64, cycles_recurrent):
    rep = lyapunov.verify_lyapunov(Expr("4*(1 - cos(y))"), fields.torus_cycles(),
                                   cycles_recurrent, torus64, tol=1e-8)
    assert rep.passed
    assert rep.psi_min <= 1e-10
    delta = 3 * torus64.h[0]
    # grid oracle of 2 sin^2 y off the 2*delta tubes
    y = torus64.axes()[1]
    dy = np.minimum(np.abs(y), np.minimum(np.abs(y - np.pi), np.abs(y - 2 * np.pi)))
    assert rep.margin == pytest.approx(np.min(2 * np.sin(y[dy > 2 * delta]) ** 2), rel=1e-12)


def test_verify_fail_small_kappa(torus64, cycles_recurrent):
    rep = lyapunov.verify_lyapunov(Expr("1 - cos(y)"), fields.torus_cycles(),
                                   cycles_recurrent, torus64)
    assert not rep.passed and not rep.nonnegative
    assert rep.psi_min == pytest.approx(-0.25, abs=1e-3)
    assert rep.offending


def test_zero_omega_passes_nonnegativity(torus64, cycles_recurrent):
    rep = lyapunov.verify_lyapunov(Expr("sin(x) + cos(2*y)"), None, cycles_recurrent, torus64)
    assert rep.nonnegative


def test_sink_identity():
    q = lyapunov.quadratic_local_lyapunov(-np.eye(2))
    assert np.allclose(q.M, 0.5 * np.eye(2))


def test_saddle_blocks():
    q = lyapunov.quadratic_local_lyapunov(np.diag([-1.0, 2.0]))
    assert np.allclose(q.M, np.diag([0.5, 0.25]))


def test_circle_sink():
    fp = dynsys.find_fixed_points(fields.circle_sine(), build_grid(1, 64))[0]
    assert np.allclose(lyapunov.quadratic_local_lyapunov(fp).M, [[0.5]])


@settings(max_examples=40, deadline=None)
@given(st.lists(st.floats(-3, 3), min_size=4, max_size=4), st.floats(0.3, 2.0))
def test_sink_matches_scipy(entries, shift):
    A = np.array(entries).reshape(2, 2)
    A = A - (np.max(np.linalg.eigvals(A).real) + shift) * np.eye(2)
    ref = scipy.linalg.solve_continuous_lyapunov(A.T, -np.eye(2))
    assert np.allclose(lyapunov.solve_lyapunov_direct(A), ref, atol=1e-10)


@settings(max_examples=40, deadline=None)
@given(st.floats(0.2, 3), st.floats(0.2, 3), st.floats(-2, 2), st.floats(-2, 2))
def test_general_saddle(s, u, a, b):
    P = np.array([[1.0, a], [b, 1.0 + a * b + 1.0]])
    A = P @ np.diag([-s, u]) @ np.linalg.inv(P)
    q = lyapunov.quadratic_local_lyapunov(A)
    assert np.all(np.linalg.eigvalsh(q.M) > 0)
    assert q.residual(A) <= 1e-8 * max(1.0, np.linalg.norm(A) ** 2)
    # decreasing along the stable eigenvector, increasing along the unstable one
    vs, vu = P[:, 0], P[:, 1]
    assert vs @ (A.T @ q.M + q.M @ A) @ vs < 0
    assert vu @ (A.T @ q.M + q.M @ A) @ vu > 0
