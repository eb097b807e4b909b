"""Analytic vector-field families.

A :class:`FieldSpec` holds one closed-form expression per component, so it
can be evaluated anywhere (not only at grid nodes) and differentiated
exactly.  Components may depend on the parameter ``lam`` for the
solution-dependent fields of the nonlinear transport problem.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import PreconditionError
from .expr import Expr, as_expr

TWO_PI = 2 * np.pi


@dataclass(frozen=True)
class FieldSpec:
    family: str
    params: tuple
    components: tuple
    period: tuple = (TWO_PI, TWO_PI)
    lyapunov: Expr | None = field(default=None, compare=False)
    omega: "FieldSpec | None" = field(default=None, compare=False)

    @property
    def dim(self):
        return len(self.components)

    @property
    def takes_lambda(self):
        return any("lam" in c.variables for c in self.components)

    def __call__(self, pts, lam=None):
        """Field values at ``(m, dim)`` points, shape ``(m, dim)``."""
        pts = np.atleast_2d(np.asarray(pts, dtype=float))
        return np.stack([np.broadcast_to(c.at(pts, lam), (pts.shape[0],))
                         for c in self.components], axis=1)

    def jacobian_exprs(self):
        names = ("x", "y")[: self.dim]
        return [[c.diff(v) for v in names] for c in self.components]

    def jacobian(self, pts, lam=None):
        """Analytic Jacobian ``Db`` at points, shape ``(m, dim, dim)``."""
        pts = np.atleast_2d(np.asarray(pts, dtype=float))
        m = pts.shape[0]
        jac = np.empty((m, self.dim, self.dim))
        for i, row in enumerate(self.jacobian_exprs()):
            for j, d in enumerate(row):
                jac[:, i, j] = np.broadcast_to(d.at(pts, lam), (m,))
        return jac

    def dlam(self, pts, lam=None):
        """Parameter derivative ``d b / d lam`` at points, shape ``(m, dim)``."""
        pts = np.atleast_2d(np.asarray(pts, dtype=float))
        return np.stack([np.broadcast_to(c.diff("lam").at(pts, lam), (pts.shape[0],))
                         for c in self.components], axis=1)

    def divergence(self, pts, lam=None):
        return np.trace(self.jacobian(pts, lam), axis1=1, axis2=2)

    def on_grid(self, grid, lam=None):
        return self(grid.points(), lam).T.reshape((self.dim,) + grid.shape)

    def describe(self):
        return {"family": self.family, "params": dict(self.params),
                "components": [str(c) for c in self.components]}


def _spec(family, comps, params, dim, period, **extra):
    exprs = tuple(as_expr(c, params) for c in comps)
    if len(exprs) != dim:
        raise PreconditionError(f"{family}: expected {dim} components")
    for e in exprs:
        if dim == 1 and "y" in e.variables:
            raise PreconditionError(f"{family}: 1-D field uses coordinate y")
    per = tuple(np.broadcast_to(np.asarray(period, dtype=float), (dim,)).tolist())
    return FieldSpec(family, tuple(sorted(params.items())), exprs, per, **extra)


def circle_sine(period=TWO_PI):
    """``b = -sin x`` on the circle: sink at 0, source at pi."""
    return _spec("circle_sine", ["-sin(x)"], {}, 1, period)


def torus_morse(period=TWO_PI):
    """``b = -grad(cos x + cos y)``: one source, two saddles, one sink."""
    return _spec("torus_morse", ["sin(x)", "sin(y)"], {}, 2, period)


def torus_cycles(period=TWO_PI):
    """``b = (1, -sin y)``: attracting cycle y=0, repelling cycle y=pi."""
    return _spec("torus_cycles", ["1", "-sin(y)"], {}, 2, period)


def shifted_torus_cycles(kappa=5.0, period=TWO_PI):
    return _spec("shifted_torus_cycles", ["1", "-kappa*sin(y)"],
                 {"kappa": float(kappa)}, 2, period)


def gradient(phi, dim, sign=1.0, period=TWO_PI, params=None):
    """``b = sign * grad(phi)`` for a closed-form potential ``phi``."""
    pot = as_expr(phi, params)
    names = ("x", "y")[:dim]
    comps = [f"{float(sign)!r}*({pot.diff(v)})" for v in names]
    return _spec("gradient", comps, {"sign": float(sign), **(params or {})}, dim, period,
                 lyapunov=pot)


def decomposed(omega, lyapunov, params=None):
    """``b = -grad(L) + Omega`` assembled from a field/Lyapunov pair."""
    L = as_expr(lyapunov, params)
    names = ("x", "y")[: omega.dim]
    comps = [f"({oc}) - ({L.diff(v)})" for oc, v in zip(omega.components, names)]
    return _spec("decomposed", comps, {**dict(omega.params), **(params or {})},
                 omega.dim, omega.period, lyapunov=L, omega=omega)


def expression(components, params=None, period=TWO_PI):
    """User closed-form field, one expression per component."""
    comps = list(components)
    return _spec("expression", comps, dict(params or {}), len(comps), period)


FAMILIES = {
    "circle_sine": circle_sine,
    "torus_morse": torus_morse,
    "torus_cycles": torus_cycles,
    "shifted_torus_cycles": shifted_torus_cycles,
    "gradient": gradient,
    "expression": expression,
}


def make_field(family, **params):
    """Build a registered field family by name."""
    try:
        factory = FAMILIES[family]
    except KeyError:
        raise PreconditionError(
            f"unknown field family {family!r}; known: {sorted(FAMILIES)}") from None
    return factory(**params)
