import numpy as np
import pytest

from mslab import fields, kernels
from mslab.expr import Expr
from oracles import characteristic_value_1d

needs_cython = pytest.mark.skipif("cython" not in kernels.BACKENDS,
                                  reason="compiled kernels not built")


def test_backend_names():
    assert kernels.BACKEND in ("cython", "python")
    assert "python" in kernels.BACKENDS


def test_unknown_backend():
    from mslab.errors import PreconditionError
    with pytest.raises(PreconditionError):
        kernels.rk4_flow(np.zeros((1, 1)), [Expr("1")], (1.0,), 0.1, 1, backend="fortran")


@pytest.mark.parametrize("backend", sorted(kernels.BACKENDS))
def test_rk4_exact_for_constant_field(backend):
    pts = np.array([[0.1, 0.2], [3.0, 6.0]])
    out, _ = kernels.rk4_flow(pts, [Expr("1"), Expr("0.5")], (2 * np.pi, 2 * np.pi), 0.01,
                              100, backend=backend)
    assert np.allclose(out, np.mod(pts + [1.0, 0.5], 2 * np.pi))


@pytest.mark.parametrize("backend", sorted(kernels.BACKENDS))
def test_rk4_logistic_phase_line(backend):
    # x' = -sin x has the closed form tan(x/2) = tan(x0/2) e^{-t}
    x0, t = 1.0, 2.0
    out, _ = kernels.rk4_flow(np.array([[x0]]), [Expr("-sin(x)")], (2 * np.pi,), 1e-3,
                              2000, backend=backend)
    assert out[0, 0] == pytest.approx(2 * np.arctan(np.tan(x0 / 2) * np.exp(-t)), abs=1e-12)


@pytest.mark.parametrize("backend", sorted(kernels.BACKENDS))
def test_characteristic_integrals_against_oracle(backend):
    b = fields.circle_sine()
    x0 = 1.3
    u, C, _ = kernels.characteristic_integrals(
        np.array([[x0]]), b.components, Expr("2"), Expr("3 + cos(x)"), b.period, 1e-3, 20000,
        backend=backend)
    ref = characteristic_value_1d(lambda x: np.sin(x), lambda x: 2.0,
                                  lambda x: 3 + np.cos(x), x0, t_max=20.0)
    assert u[0] == pytest.approx(ref, abs=1e-6)
    assert C[0] == pytest.approx(40.0)


@needs_cython
def test_backends_agree_on_torus():
    rng = np.random.default_rng(0)
    pts = rng.uniform(0, 2 * np.pi, (50, 2))
    b = fields.torus_morse()
    args = (pts, b.components, b.period, 2e-3, 500)
    py, rp = kernels.rk4_flow(*args, record_stride=100, backend="python")
    cy, rc = kernels.rk4_flow(*args, record_stride=100, backend="cython")
    assert np.max(np.abs(py - cy)) <= 1e-12
    assert np.max(np.abs(rp - rc)) <= 1e-12
    c, f = Expr("1.5 + 0.25*cos(x)"), Expr("1 + sin(y)")
    up, Cp, recp = kernels.characteristic_integrals(pts, b.components, c, f, b.period, 2e-3,
                                                    500, record_stride=50, backend="python")
    uc, Cc, recc = kernels.characteristic_integrals(pts, b.components, c, f, b.period, 2e-3,
                                                    500, record_stride=50, backend="cython")
    assert np.max(np.abs(up - uc)) <= 1e-12
    assert np.max(np.abs(Cp - Cc)) <= 1e-12
    assert np.max(np.abs(recp - recc)) <= 1e-12


@needs_cython
def test_backends_agree_with_lambda_table():
    from mslab.mesh import build_grid
    g = build_grid(1, 32)
    table = (1 + np.cos(g.coords()[0])).reshape(32, 1)
    pts = np.linspace(0, 6, 7)[:, None]
    e = [Expr("-(1 + 0.1*sin(lam))*sin(x)")]
    a, _ = kernels.rk4_flow(pts, e, g.period, 1e-2, 300, lam_table=table, backend="python")
    b_, _ = kernels.rk4_flow(pts, e, g.period, 1e-2, 300, lam_table=table, backend="cython")
    assert np.max(np.abs(a - b_)) <= 1e-12


def test_pure_python_fallback_selected_by_env():
    import os
    import subprocess
    import sys
    env = dict(os.environ, MSLAB_PURE_PYTHON="1")
    code = ("from mslab import kernels, fields, dynsys; "
            "import numpy as np; "
            "t, x = dynsys.flow(fields.circle_sine(), [1.0], 2.0); "
            "print(kernels.BACKEND, sorted(kernels.BACKENDS), "
            "abs(x[-1, 0] - 2 * np.arctan(np.tan(0.5) * np.exp(-2))) < 1e-10)")
    out = subprocess.run([sys.executable, "-c", code], env=env, capture_output=True,
                         text=True, check=True).stdout.split()
    assert out == ["python", "['python']", "True"]
