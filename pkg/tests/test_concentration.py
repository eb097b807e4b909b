import numpy as np
import pytest

from mslab import concentration as conc
from mslab import dynsys, fields, spectral
from mslab.errors import PreconditionError
from mslab.expr import Expr
from mslab.mesh import ScalarSamples, build_grid, integrate, sample


def _uniform(grid, eps=1.0):
    return spectral.EigenResult(eps, 1.0, ScalarSamples(grid, np.ones(grid.shape)), 0.0, 0)


@pytest.fixture(scope="module")
def cycles_setup():
    g = build_grid(2, 64)
    b = fields.decomposed(fields.torus_cycles(), "4*(1 - cos(y))")
    res = spectral.epsilon_sweep(spectral.EigenProblem(g, b, 1.0), [0.2, 0.1, 0.05])
    orbits = dynsys.find_periodic_orbits(fields.torus_cycles())
    return g, b, res, orbits


def test_uniform_measure(torus64):
    m = conc.weighted_measure(_uniform(torus64))
    assert np.allclose(m.density.values, 1 / (2 * np.pi) ** 2)
    assert m.total() == pytest.approx(1.0)


def test_weighted_measure_needs_potential(torus64):
    with pytest.raises(PreconditionError):
        conc.weighted_measure(_uniform(torus64), "exp_L")
    with pytest.raises(PreconditionError):
        conc.weighted_measure(_uniform(torus64), "exp_psi", Expr("x"))


def test_weight_does_not_underflow(torus64):
    m = conc.weighted_measure(_uniform(torus64, eps=1e-3), "exp_L", Expr("4*(1 - cos(y))"))
    assert m.total() == pytest.approx(1.0)


def test_uniform_ball_mass_proportional_to_area():
    g = build_grid(2, 256)
    m = conc.weighted_measure(_uniform(g))
    delta = 1.0
    assert conc.ball_mass(m, [1.0, 2.0], delta) == pytest.approx(
        np.pi * delta ** 2 / (2 * np.pi) ** 2, rel=0.01)


def test_ball_mass_preconditions(torus64):
    m = conc.weighted_measure(_uniform(torus64))
    with pytest.raises(PreconditionError):
        conc.ball_mass(m, [0, 0], torus64.h[0])
    with pytest.raises(PreconditionError):
        conc.ball_mass(m, [0, 0], 0.4, others=[[0, 0], [0.5, 0]])


def test_double_well_splits_mass(circle256):
    r = spectral.principal_eigenpair(spectral.assemble(circle256, 0.01, None,
                                                       Expr("2 + cos(2*x)")))
    m = conc.weighted_measure(r)
    wells = [[np.pi / 2], [3 * np.pi / 2]]
    masses = [conc.ball_mass(m, P, 0.5, wells) for P in wells]
    assert masses == pytest.approx([0.5, 0.5], abs=0.03)
    assert sum(masses) >= 0.95


def test_segment_integral_exact_for_bilinear():
    g = build_grid(2, 16, 1.0)
    s = sample(g, lambda x, y: 1 + 2 * x + 3 * y + 5 * x * y)
    c, d, hw = np.array([0.41, 0.37]), np.array([0.6, 0.8]), 0.2
    # closed form of the quadratic along the line
    a0 = 1 + 2 * c[0] + 3 * c[1] + 5 * c[0] * c[1]
    a2 = 5 * d[0] * d[1]
    exact = 2 * hw * a0 + a2 * 2 * hw ** 3 / 3
    assert conc.segment_integral(s, c, d, hw) == pytest.approx(exact, rel=1e-12)


def test_cycle_density_off_tube_is_zero(cycles_setup):
    g, _, _, orbits = cycles_setup
    y = g.coords()[1]
    dens = np.where(np.abs(y - np.pi / 2) < 0.3, 1.0, 0.0)
    m = conc.Measure(ScalarSamples(g, dens / integrate(ScalarSamples(g, dens))))
    for o in orbits:
        _, f2 = conc.cycle_density(m, o, 16, 0.3)
        assert np.all(f2 == 0)


def test_cycle_density_uniform_value(cycles_setup):
    g, _, _, orbits = cycles_setup
    m = conc.weighted_measure(_uniform(g))
    l, f2 = conc.cycle_density(m, orbits[0], 16, 0.3)
    assert np.allclose(f2, 0.6 / (2 * np.pi) ** 2, rtol=1e-12)
    assert len(l) == 16


def test_cycle_density_translation_symmetric(cycles_setup):
    g, _, res, orbits = cycles_setup
    m = conc.weighted_measure(res[-1], "exp_L", Expr("4*(1 - cos(y))"))
    for o in orbits:
        _, f2 = conc.cycle_density(m, o, 16, 0.3)
        assert np.ptp(f2) <= 0.1 * np.mean(f2) + 1e-14


def test_cycle_density_rejects_wide_segments(cycles_setup):
    g, _, res, orbits = cycles_setup
    m = conc.weighted_measure(res[-1])
    with pytest.raises(PreconditionError):
        conc.cycle_density(m, orbits[0], 16, 2.0, other_orbits=[orbits[1]])


def test_simplex_single_well(circle256):
    res = spectral.epsilon_sweep(spectral.EigenProblem(circle256, None, Expr("2 + cos(x)")),
                                 [0.2, 0.05, 0.01])
    rep = conc.concentration_report(res, "none", None, [[np.pi]], delta=0.5)
    v = conc.simplex_check(rep)
    assert v.passed
    masses = rep.ball_masses["(3.14159)"]
    assert masses[-1] >= 0.9 and masses == sorted(masses)
    assert rep.residual_mass[-1] == pytest.approx(1 - masses[-1], abs=1e-14)


def test_uniform_residual_near_one(circle256):
    rep = conc.concentration_report([_uniform(circle256)], "none", None, [[0.0]], delta=0.1)
    assert rep.residual_mass[0] == pytest.approx(1 - 0.2 / (2 * np.pi), abs=0.01)


def test_cycles_report_bookkeeping(cycles_setup):
    g, _, res, orbits = cycles_setup
    rep = conc.concentration_report(res, "exp_L", Expr("4*(1 - cos(y))"), [], orbits,
                                    n_stations=16, half_width=0.3)
    v = conc.simplex_check(rep)
    assert v.bookkeeping_ok and v.residual_decreasing
    loops = [sum(vals[k] for vals in rep.cycle_integrals.values()) for k in range(len(res))]
    assert loops == sorted(loops)
    assert rep.ball_masses == {}
    # tube quadrature agrees with the loop integrals
    for lab in rep.cycle_integrals:
        assert rep.tube_masses[lab][-1] == pytest.approx(rep.cycle_integrals[lab][-1], rel=0.05)
