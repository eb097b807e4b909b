import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from mslab.errors import PreconditionError
from mslab.mesh import (ScalarSamples, VectorSamples, build_grid, gradient_fd, integrate,
                        interpolate, laplacian_fd, sample)


def test_circle_grid_spacing():
    g = build_grid(1, 64, 2 * np.pi)
    assert g.h == (2 * np.pi / 64,)
    assert np.allclose(g.points()[:, 0], np.arange(64) * 2 * np.pi / 64)


def test_torus_grid_size():
    g = build_grid(2, 64)
    assert g.size == 4096
    assert g.points().shape == (4096, 2)


def test_anisotropic_axes():
    g = build_grid(2, (32, 16), (2.0, 1.0))
    assert g.shape == (32, 16)
    assert g.h == (2.0 / 32, 1.0 / 16)


@pytest.mark.parametrize("dim,n,period", [(1, 8, 2 * np.pi), (1, 64, 0.0), (1, 64, -1.0),
                                          (3, 64, 1.0)])
def test_build_grid_rejects(dim, n, period):
    with pytest.raises(PreconditionError):
        build_grid(dim, n, period)


def test_integrate_constant_is_volume():
    for g in (build_grid(1, 64), build_grid(2, 32, (1.0, 3.0))):
        assert integrate(sample(g, lambda *c: np.ones_like(c[0]))) == pytest.approx(g.volume,
                                                                                  rel=1e-14)


def test_integrate_sin_squared():
    g = build_grid(1, 64)
    assert abs(integrate(sample(g, lambda x: np.sin(x) ** 2)) - np.pi) <= 1e-10


def test_integrate_cos_mean_zero():
    g = build_grid(1, 64)
    assert abs(integrate(sample(g, np.cos))) <= 1e-12


def test_gradient_fourth_order():
    errs = []
    for n in (32, 64):
        g = build_grid(1, n)
        d = gradient_fd(sample(g, np.cos))
        errs.append(np.max(np.abs(d.components[0] + np.sin(g.coords()[0]))))
    assert errs[1] < 1e-5
    assert errs[0] / errs[1] == pytest.approx(16, rel=0.1)


def test_gradient_constant_is_zero(torus64):
    d = gradient_fd(sample(torus64, lambda x, y: 3 + 0 * x))
    assert np.max(np.abs(d.components)) <= 1e-12


def test_gradient_torus_sin_y(torus64):
    d = gradient_fd(sample(torus64, lambda x, y: np.sin(y)))
    x, y = torus64.coords()
    assert np.max(np.abs(d.components[0])) <= 1e-12
    assert np.max(np.abs(d.components[1] - np.cos(y))) <= 1e-5


def test_laplacian_positive_convention():
    g = build_grid(1, 128)
    lap = laplacian_fd(sample(g, np.cos))
    assert np.max(np.abs(lap.values - np.cos(g.coords()[0]))) < 1e-3


def test_scalar_samples_validation(circle64):
    with pytest.raises(PreconditionError):
        ScalarSamples(circle64, np.zeros(10))
    bad = np.zeros(64)
    bad[3] = np.nan
    with pytest.raises(PreconditionError):
        ScalarSamples(circle64, bad)
    with pytest.raises(PreconditionError):
        VectorSamples(circle64, np.zeros((2, 64)))


def test_mask_samples_keep_bool(circle64):
    s = ScalarSamples(circle64, np.arange(64) < 5)
    assert s.values.dtype == bool


def test_interpolation_reproduces_linear_in_cell():
    g = build_grid(2, 16, 1.0)
    s = sample(g, lambda x, y: 2 * x + 3 * y)
    pts = np.array([[0.31, 0.42], [0.5, 0.77]])
    assert np.allclose(interpolate(s, pts), 2 * pts[:, 0] + 3 * pts[:, 1])


def test_periodic_distance():
    g = build_grid(2, 16)
    assert g.distance([0.1, 0.1], [2 * np.pi - 0.1, 0.1]) == pytest.approx(0.2)


@settings(max_examples=40, deadline=None)
@given(st.integers(min_value=16, max_value=80), st.floats(min_value=0.5, max_value=20))
def test_trig_polynomials_integrate_exactly(n, period):
    # rectangle rule is exact for frequencies below n
    g = build_grid(1, n, period)
    k = 2 * np.pi / period
    s = sample(g, lambda x: 1 + np.cos(k * x) + np.sin(3 * k * x) ** 2)
    assert integrate(s) == pytest.approx(1.5 * period, rel=1e-12)
