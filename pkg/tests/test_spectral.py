import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from mslab import dynsys, fields, spectral
from mslab.errors import PreconditionError, SweepError
from mslab.expr import Expr
from mslab.mesh import build_grid
from oracles import dense_principal, fd_laplacian_1d, fourier_schrodinger


def test_pure_diffusion_is_scaled_laplacian(circle64):
    A = spectral.assemble(circle64, 0.3, None, 0.0)
    assert np.allclose(A.matrix.toarray(), 0.3 * fd_laplacian_1d(64, 2 * np.pi), atol=1e-12)
    assert np.max(np.abs(A.matrix.sum(axis=1))) <= 1e-10


def test_small_peclet_fitted_weights_approach_central():
    # fitted face weight B(z) against the central weight 1 - z/2 for the same face drift
    errs = []
    for z in (1e-2, 5e-3, 2.5e-3):
        zz = np.array([z, -z])
        errs.append(np.max(np.abs(spectral.bernoulli(zz) - (1 - zz / 2))))
    assert errs[0] <= 1e-5
    assert errs[0] / errs[1] == pytest.approx(4.0, rel=1e-3)
    assert errs[1] / errs[2] == pytest.approx(4.0, rel=1e-3)


def test_bernoulli():
    z = np.array([-30.0, -1e-12, 0.0, 1e-12, 2.0, 800.0])
    B = spectral.bernoulli(z)
    assert B[2] == 1.0
    assert B[4] == pytest.approx(2 / np.expm1(2))
    assert B[5] == 0.0 and B[0] == pytest.approx(30.0)
    # B(-z) = B(z) + z
    zz = np.linspace(-5, 5, 11)
    assert np.allclose(spectral.bernoulli(-zz), spectral.bernoulli(zz) + zz)


def test_m_matrix_circle(circle64):
    A = spectral.assemble(circle64, 0.05, fields.circle_sine(), Expr("2 + cos(x)"))
    assert A.m_matrix_check()
    ones = np.ones(64)
    assert np.max(np.abs(A.transport_part @ ones)) <= 1e-12


def test_m_matrix_tiny_epsilon(torus64):
    A = spectral.assemble(torus64, 1e-4, fields.torus_morse(), 1.0)
    assert A.m_matrix_check()


def test_central_refused_at_high_peclet(circle64):
    with pytest.raises(PreconditionError):
        spectral.assemble(circle64, 0.01, fields.circle_sine(), 1.0, scheme="central")
    spectral.assemble(circle64, 0.01, fields.circle_sine(), 1.0, scheme="central",
                      allow_nonmonotone=True)


def test_bad_inputs(circle64):
    with pytest.raises(PreconditionError):
        spectral.assemble(circle64, 0.0)
    with pytest.raises(PreconditionError):
        spectral.assemble(circle64, 0.1, scheme="upwind")


@pytest.mark.parametrize("eps", [1.0, 0.1, 0.01])
def test_constant_potential(circle64, eps):
    r = spectral.principal_eigenpair(spectral.assemble(circle64, eps, None, 5.0))
    assert r.lam == pytest.approx(5.0, abs=1e-10)
    assert np.ptp(r.u.values) <= 1e-10


def test_harmonic_approximation(circle64):
    eps = 0.01
    r = spectral.principal_eigenpair(spectral.assemble(circle64, eps, None, Expr("2 + cos(x)")))
    pred = 1 + np.sqrt(eps / 2)
    assert abs(r.lam - pred) <= 0.2 * pred


@pytest.mark.parametrize("eps", [0.2, 0.05, 0.01])
def test_matches_dense_oracle(circle64, eps):
    A = spectral.assemble(circle64, eps, fields.circle_sine(), Expr("2 + cos(x)"))
    r = spectral.principal_eigenpair(A)
    lam, v, _ = dense_principal(A.matrix, circle64.cell_volume)
    assert r.lam == pytest.approx(lam, abs=1e-8)
    assert np.max(np.abs(r.u.values - v)) <= 1e-6


def test_fine_grid_matches_fourier_oracle(circle256):
    # independent discretization: Fourier-Galerkin for -eps u'' + (2 + cos x) u
    for eps in (0.1, 0.01):
        r = spectral.principal_eigenpair(spectral.assemble(circle256, eps, None,
                                                           Expr("2 + cos(x)")))
        ref = fourier_schrodinger(eps, {0: 2.0, 1: 0.5, -1: 0.5}, n_modes=128)
        assert r.lam == pytest.approx(ref, rel=2e-3)


def test_adjoint_shares_eigenvalue(torus64):
    A = spectral.assemble(torus64, 0.1, fields.torus_morse(), Expr("1.5 + 0.25*cos(x)"))
    r = spectral.principal_eigenpair(A)
    rt = spectral.principal_eigenpair(A.transpose())
    assert rt.lam == pytest.approx(r.lam, abs=1e-9)
    assert np.all(rt.u.values > 0)


def test_rayleigh_quotient_is_eigenvalue_without_drift(torus64):
    c = Expr("1 + 0.5*cos(x)*sin(y)")
    r = spectral.principal_eigenpair(spectral.assemble(torus64, 0.07, None, c))
    assert spectral.rayleigh_quotient(torus64, 0.07, c, r.u) == pytest.approx(r.lam, abs=1e-10)


def test_decomposed_cycles_small_eps_lambda(torus64):
    b = fields.decomposed(fields.torus_cycles(), "4*(1 - cos(y))")
    r = spectral.principal_eigenpair(spectral.assemble(torus64, 0.05, b, 1.0))
    assert r.lam > 0
    assert 0.05 * r.lam <= 0.1


def test_sweep_constant_and_decreasing(circle256):
    res = spectral.epsilon_sweep(spectral.EigenProblem(circle256, None, 3.0), [1.0, 0.1])
    assert [r.lam for r in res] == pytest.approx([3.0, 3.0], abs=1e-10)
    res = spectral.epsilon_sweep(spectral.EigenProblem(circle256, None, Expr("2 + cos(x)")),
                                 [0.2, 0.1, 0.05, 0.02, 0.01])
    lams = [r.lam for r in res]
    assert all(b < a for a, b in zip(lams, lams[1:]))
    assert lams[-1] > 1


def test_gradient_case_eps_lambda_vanishes(torus64):
    b = fields.gradient("-(cos(x) + cos(y))", 2)
    res = spectral.epsilon_sweep(spectral.EigenProblem(torus64, b, Expr("1.5 + 0.25*cos(x)")),
                                 [0.2, 0.1, 0.05])
    el = [r.eps * r.lam for r in res]
    assert all(b_ < a for a, b_ in zip(el, el[1:]))


def test_sweep_rejects_order(circle64):
    with pytest.raises(PreconditionError):
        spectral.epsilon_sweep(spectral.EigenProblem(circle64, None, 1.0), [0.1, 0.2])


def test_sweep_error_carries_epsilon(circle64):
    prob = spectral.EigenProblem(circle64, fields.circle_sine(), 1.0, scheme="central")
    with pytest.raises(SweepError) as info:
        spectral.epsilon_sweep(prob, [0.5, 0.001])
    assert info.value.epsilon == 0.001
    assert isinstance(info.value.cause, PreconditionError)


def test_gradient_transform_example(circle64):
    a = spectral.gradient_transform("cos(x)", 0.1, 1.0, circle64)
    x = circle64.coords()[0]
    # positive Laplacian of cos x is +cos x, so the last term is +eps cos(x)/2
    assert np.allclose(a.values, 0.1 + np.sin(x) ** 2 / 4 + 0.05 * np.cos(x), atol=1e-14)


def test_gradient_transform_constant_phi(circle64):
    a = spectral.gradient_transform("3", 0.2, Expr("1 + cos(x)"), circle64)
    assert np.allclose(a.values, 0.2 * (1 + np.cos(circle64.coords()[0])))


def test_transformed_min_vanishes():
    g = build_grid(2, 64)
    mins = [spectral.gradient_transform("-(cos(x) + cos(y))", e, Expr("1.5 + 0.25*cos(x)"),
                                        g).values.min() for e in (0.1, 0.01, 0.001)]
    assert mins[-1] < mins[0] and mins[-1] <= 1e-2


def test_transformed_eigenvalue_is_eps_lambda(circle256):
    phi, c, eps = "cos(x)", Expr("1 + 0.3*sin(x)"), 0.1
    direct = spectral.principal_eigenpair(
        spectral.assemble(circle256, eps, fields.gradient(phi, 1), c))
    tr = spectral.transformed_eigenpair(phi, eps, c, circle256)
    assert tr.lam == pytest.approx(eps * direct.lam, rel=1e-3)


def test_pressure_single_sink():
    fp = dynsys.make_fixed_point(fields.torus_morse(), np.array([np.pi, np.pi]))
    rep = spectral.pressure_prediction(dynsys.RecurrentSet([fp], []), 0.7)
    assert rep.max_value == rep.min_value == pytest.approx(0.7)


def test_pressure_circle_sine(circle64):
    rec = dynsys.classify(fields.circle_sine(), circle64)
    rep = spectral.pressure_prediction(rec, 2.0, sweep_limit=2.0)
    assert sorted(d["value"] for d in rep.candidates) == pytest.approx([1.0, 2.0])
    assert rep.matched == "max"


def test_pressure_torus_cycles(torus64):
    rec = dynsys.classify(fields.torus_cycles(), torus64)
    rep = spectral.pressure_prediction(rec, 1.0)
    assert sorted(d["value"] for d in rep.candidates) == pytest.approx([0.0, 1.0], abs=1e-8)


def test_extrapolate_limit():
    assert spectral.extrapolate_limit([0.2, 0.1], [3.0, 2.0]) == pytest.approx(1.0)


@settings(max_examples=25, deadline=None)
@given(st.floats(0.01, 1.0), st.floats(-2, 2), st.floats(-1, 1), st.floats(0, 3))
def test_principal_pair_properties(eps, beta, gamma, c0):
    # M-matrix structure, positive eigenvector and min c <= lambda <= max c
    g = build_grid(1, 32)
    b = fields.expression([f"{beta}*sin(x) + {gamma}"])
    c = Expr(f"{c0} + cos(x)^2")
    A = spectral.assemble(g, eps, b, c)
    assert A.m_matrix_check()
    r = spectral.principal_eigenpair(A)
    cv = spectral.coefficient_values(c, g)
    assert cv.min() - 1e-9 <= r.lam <= cv.max() + 1e-9
    assert np.all(r.u.values > 0)
    lam, v, _ = dense_principal(A.matrix, g.cell_volume)
    assert r.lam == pytest.approx(lam, abs=1e-8)


def test_eigenvector_normalized_and_positive(torus64):
    r = spectral.principal_eigenpair(spectral.assemble(torus64, 0.05, fields.torus_morse(),
                                                       Expr("1 + sin(x)^2")))
    assert np.sum(r.u.values ** 2) * torus64.cell_volume == pytest.approx(1.0, abs=1e-10)
    assert np.all(r.u.values > 0)
    assert r.residual <= 1e-9


@pytest.mark.parametrize("eps", [0.2, 0.02])
def test_comparison_principle_in_c(torus64, eps):
    b = fields.decomposed(fields.torus_cycles(), "4*(1 - cos(y))")
    hi = spectral.principal_eigenpair(spectral.assemble(torus64, eps, b, Expr("2 + cos(x)")))
    lo = spectral.principal_eigenpair(spectral.assemble(torus64, eps, b,
                                                        Expr("2 + cos(x) - 0.5*sin(y)^2")))
    assert lo.lam <= hi.lam


def test_admissibility_warning(circle64, caplog):
    with caplog.at_level("WARNING", logger="mslab.spectral"):
        spectral.gradient_transform("cos(x)", 0.1, -2.0, circle64)
    assert "critical point" in caplog.text
    checks = spectral.admissibility("cos(x)", 1.0, circle64)
    assert [ok for _, ok in checks] == [True, True]
