"""Discrete operators ``eps*Delta + b.grad + c`` and their principal eigenpairs.

``Delta`` is the positive Laplacian ``-sum d^2/dx_k^2``.  The principal
eigenvalue is the one with smallest real part; for the exponentially fitted
scheme the matrix is an M-matrix and the eigenvector is positive.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .errors import ConvergenceError, PreconditionError, SweepError
from .expr import Expr, as_expr
from .fields import FieldSpec, gradient
from .mesh import ScalarSamples, VectorSamples

log = logging.getLogger(__name__)

SCHEMES = ("central", "exponential_fitted")
LAMBDA_TOL = 1e-12
RESIDUAL_TOL = 1e-9
MAX_ITER = 500


def coefficient_values(coef, grid):
    """Node values of a coefficient given as number, Expr, samples or callable."""
    if coef is None:
        return np.zeros(grid.shape)
    if isinstance(coef, ScalarSamples):
        return np.asarray(coef.values, dtype=float)
    if isinstance(coef, (int, float)):
        return np.full(grid.shape, float(coef))
    if isinstance(coef, str):
        coef = Expr(coef)
    if isinstance(coef, Expr):
        return np.broadcast_to(coef.at(grid.points()), (grid.size,)).reshape(grid.shape).copy()
    return np.asarray(coef(grid.points()), dtype=float).reshape(grid.shape)


def point_values(coef, pts):
    """Coefficient values at arbitrary points."""
    pts = np.atleast_2d(np.asarray(pts, dtype=float))
    if isinstance(coef, (int, float)):
        return np.full(len(pts), float(coef))
    if isinstance(coef, str):
        coef = Expr(coef)
    if isinstance(coef, Expr):
        return np.broadcast_to(coef.at(pts), (len(pts),)).astype(float)
    if isinstance(coef, ScalarSamples):
        from .mesh import interpolate
        return interpolate(coef, pts)
    return np.asarray(coef(pts), dtype=float)


def face_drift(b, grid, axis):
    """Drift component ``axis`` at the faces ``x + h_axis/2 e_axis``."""
    if b is None:
        return np.zeros(grid.shape)
    if isinstance(b, VectorSamples):
        comp = b.components[axis]
        return 0.5 * (comp + np.roll(comp, -1, axis=axis))
    pts = grid.points().copy()
    pts[:, axis] += 0.5 * grid.h[axis]
    return b(pts)[:, axis].reshape(grid.shape)


def node_drift(b, grid, axis):
    if b is None:
        return np.zeros(grid.shape)
    if isinstance(b, VectorSamples):
        return np.asarray(b.components[axis])
    return b(grid.points())[:, axis].reshape(grid.shape)


def bernoulli(z):
    """``B(z) = z / (e^z - 1)`` with ``B(0) = 1``."""
    z = np.asarray(z, dtype=float)
    out = np.ones_like(z)
    nz = np.abs(z) > 1e-10
    with np.errstate(over="ignore"):
        out[nz] = z[nz] / np.expm1(z[nz])
    small = ~nz
    out[small] = 1.0 - 0.5 * z[small]
    return out


@dataclass
class OperatorAssembly:
    matrix: sp.csr_matrix
    eps: float
    scheme: str
    grid: object
    c: np.ndarray = field(repr=False)

    @property
    def transport_part(self):
        """The matrix without the zeroth-order term."""
        return self.matrix - sp.diags(self.c.ravel())

    def m_matrix_check(self, tol=1e-12):
        """Non-positive off-diagonals and vanishing row sums of the transport part."""
        T = self.transport_part.tocoo()
        off = T.row != T.col
        scale = max(1.0, float(np.max(np.abs(T.data))) if T.nnz else 1.0)
        offdiag_ok = bool(np.all(T.data[off] <= tol * scale))
        rows = np.asarray(T.sum(axis=1)).ravel()
        return offdiag_ok and bool(np.all(np.abs(rows) <= tol * scale))

    def transpose(self):
        return OperatorAssembly(self.matrix.T.tocsr(), self.eps, self.scheme, self.grid, self.c)


def _index(grid):
    return np.arange(grid.size).reshape(grid.shape)


def assemble(grid, eps, b=None, c=None, scheme="exponential_fitted", allow_nonmonotone=False):
    """Assemble ``eps*Delta + b.grad + c`` on a periodic grid.

    ``central`` uses second-order differences with node drift;
    ``exponential_fitted`` weights each face flux by the Bernoulli function
    of the cell Peclet number ``z = b_face h / eps``, which keeps an
    M-matrix for every ``eps``.  The central scheme is refused when
    ``max|b| h / (2 eps) > 1`` unless ``allow_nonmonotone`` is set.
    """
    if not eps > 0:
        raise PreconditionError(f"epsilon must be positive, got {eps}")
    if scheme not in SCHEMES:
        raise PreconditionError(f"unknown scheme {scheme!r}; choose from {SCHEMES}")
    cvals = coefficient_values(c, grid)
    idx = _index(grid)
    rows, cols, data = [], [], []
    diag = np.zeros(grid.shape)
    for ax in range(grid.dim):
        h = grid.h[ax]
        k = eps / h ** 2
        plus = np.roll(idx, -1, axis=ax)
        minus = np.roll(idx, 1, axis=ax)
        if scheme == "central":
            bn = node_drift(b, grid, ax)
            peclet = float(np.max(np.abs(bn))) * h / (2 * eps)
            if peclet > 1 and not allow_nonmonotone:
                raise PreconditionError(
                    f"central scheme not monotone: cell Peclet {peclet:.3g} > 1")
            w_plus = -k + bn / (2 * h)
            w_minus = -k - bn / (2 * h)
        else:
            bf = face_drift(b, grid, ax)
            z_right = bf * h / eps
            z_left = np.roll(z_right, 1, axis=ax)
            w_plus = -k * bernoulli(z_right)
            w_minus = -k * bernoulli(-z_left)
        rows += [idx.ravel(), idx.ravel()]
        cols += [plus.ravel(), minus.ravel()]
        data += [w_plus.ravel(), w_minus.ravel()]
        diag -= w_plus + w_minus
    rows.append(idx.ravel())
    cols.append(idx.ravel())
    data.append((diag + cvals).ravel())
    A = sp.csr_matrix((np.concatenate(data), (np.concatenate(rows), np.concatenate(cols))),
                      shape=(grid.size, grid.size))
    A.sum_duplicates()
    return OperatorAssembly(A, float(eps), scheme, grid, cvals)


@dataclass
class EigenResult:
    eps: float
    lam: float
    u: ScalarSamples
    residual: float
    iterations: int
    min_entry: float = 0.0

    def to_dict(self):
        return {"epsilon": self.eps, "lambda": self.lam, "residual": self.residual,
                "iterations": self.iterations}


def _normalize(v, grid):
    return v / math.sqrt(float(np.sum(v * v)) * grid.cell_volume)


def principal_eigenpair(A, v0=None, maxiter=MAX_ITER, lambda_tol=LAMBDA_TOL,
                        residual_tol=RESIDUAL_TOL, accelerate=True):
    """Principal eigenpair by shifted inverse iteration.

    The initial shift ``min c - 1`` lies below every eigenvalue real part of
    an M-matrix operator.  With ``accelerate`` the shift is moved once after
    the convergence ratio settles: to a quarter of the estimated spectral gap
    below the eigenvalue, capped by the Collatz-Wielandt lower bound
    ``min (A v)_i / v_i`` so it stays strictly below.
    """
    try:
        return _inverse_iteration(A, v0, maxiter, lambda_tol, residual_tol, accelerate)
    except ConvergenceError:
        if not accelerate:
            raise
        log.info("retrying inverse iteration with a fixed shift (eps=%g)", A.eps)
        return _inverse_iteration(A, v0, maxiter, lambda_tol, residual_tol, False)


def _inverse_iteration(A, v0, maxiter, lambda_tol, residual_tol, accelerate):
    M = A.matrix.tocsc()
    grid = A.grid
    n = M.shape[0]
    sigma = float(np.min(A.c)) - 1.0
    eye = sp.identity(n, format="csc")
    lu = spla.splu(M - sigma * eye)
    v = np.ones(n) if v0 is None else np.abs(np.asarray(v0, dtype=float).ravel()) + 1e-300
    v /= np.linalg.norm(v)
    lam_old = np.inf
    ratios = []
    prev_diff = None
    shifted = not accelerate
    res = np.inf
    for it in range(1, maxiter + 1):
        w = lu.solve(v)
        w /= np.linalg.norm(w)
        if w.sum() < 0:
            w = -w
        diff = np.linalg.norm(w - v)
        if prev_diff:
            ratios.append(diff / prev_diff)
        prev_diff = diff
        v = w
        mv = M @ v
        lam = float(v @ mv)
        res = float(np.linalg.norm(mv - lam * v))
        if abs(lam - lam_old) <= lambda_tol * max(1.0, abs(lam)) and res <= residual_tol:
            break
        lam_old = lam
        if not shifted and len(ratios) >= 3 and np.all(v > 0):
            r = ratios[-1]
            if abs(r - ratios[-2]) <= 0.01 * r and 0.3 < r < 0.999:
                gap = (lam - sigma) * (1.0 / r - 1.0)
                lower = float(np.min(mv / v))
                new_sigma = min(lam - 0.25 * gap, lower - 1e-8 * max(1.0, abs(lower)))
                if new_sigma > sigma:
                    sigma = new_sigma
                    lu = spla.splu(M - sigma * eye)
                    prev_diff = None
                    ratios = []
                shifted = True
    else:
        raise ConvergenceError(
            f"inverse iteration did not converge in {maxiter} iterations "
            f"(eps={A.eps}, residual={res:.3g})")
    vmax = float(np.max(np.abs(v)))
    vmin = float(np.min(v))
    if vmin < -1e-12 * vmax:
        raise ConvergenceError(
            f"principal eigenvector has negative entries (min {vmin / vmax:.3g}); "
            "monotonicity lost")
    v = np.abs(v)
    u = _normalize(v, grid)
    res_rel = float(np.linalg.norm(M @ u - lam * u) / np.linalg.norm(u))
    return EigenResult(A.eps, lam, ScalarSamples(grid, u.reshape(grid.shape)), res_rel, it,
                       min_entry=vmin / vmax)


@dataclass
class EigenProblem:
    grid: object
    b: object = None
    c: object = 0.0
    scheme: str = "exponential_fitted"

    def assemble(self, eps):
        return assemble(self.grid, eps, self.b, self.c, self.scheme)


def epsilon_sweep(problem, eps_list, warm_start=True):
    """Principal eigenpairs along a strictly decreasing list of epsilons."""
    eps_list = [float(e) for e in eps_list]
    if any(e <= 0 for e in eps_list):
        raise PreconditionError("epsilons must be positive")
    if any(b >= a for a, b in zip(eps_list, eps_list[1:])):
        raise PreconditionError("epsilons must be strictly decreasing")
    out = []
    v0 = None
    for eps in eps_list:
        try:
            res = principal_eigenpair(problem.assemble(eps), v0=v0)
        except Exception as exc:  # noqa: BLE001 - re-raised with epsilon attached
            raise SweepError(eps, exc) from exc
        out.append(res)
        if warm_start:
            v0 = res.u.values
    return out


def rayleigh_quotient(grid, eps, c, u):
    """``(eps*int|grad u|^2 + int c u^2) / int u^2`` with forward differences.

    With ``b = 0`` this is the quadratic form of the assembled operator, so
    it reproduces the eigenvalue of a principal eigenpair exactly.
    """
    vals = u.values if isinstance(u, ScalarSamples) else np.asarray(u).reshape(grid.shape)
    cvals = coefficient_values(c, grid)
    grad2 = sum(((np.roll(vals, -1, ax) - vals) / grid.h[ax]) ** 2 for ax in range(grid.dim))
    num = eps * np.sum(grad2) + np.sum(cvals * vals ** 2)
    return float(num / np.sum(vals ** 2))


# -- gradient case ----------------------------------------------------------

def _laplacian_pos(phi, dim):
    names = ("x", "y")[:dim]
    out = Expr.constant(0.0)
    for v in names:
        out = out - phi.diff(v).diff(v)
    return out


def gradient_transform(phi, eps, c, grid, params=None, check=True):
    """Transformed potential ``a_eps = c*eps + |grad phi|^2/4 + eps*Delta(phi)/2``.

    With ``u = exp(phi/(2 eps)) v`` the principal problem for
    ``eps*Delta + grad(phi).grad + c`` becomes
    ``eps^2 Delta v + a_eps v = eps*lambda v``.
    A warning is logged when ``c + Delta(phi)/2 < 0`` at a critical point.
    """
    phi = as_expr(phi, params)
    pts = grid.points()
    names = ("x", "y")[:grid.dim]
    grad = np.stack([np.broadcast_to(phi.diff(v).at(pts), (grid.size,)) for v in names], axis=1)
    lap = np.broadcast_to(_laplacian_pos(phi, grid.dim).at(pts), (grid.size,))
    cvals = coefficient_values(c, grid).ravel()
    a = cvals * eps + 0.25 * np.sum(grad ** 2, axis=1) + 0.5 * eps * lap
    if check:
        for P, ok in admissibility(phi, c, grid):
            if not ok:
                log.warning("c + Delta(phi)/2 < 0 at critical point %s", P.tolist())
    return ScalarSamples(grid, a.reshape(grid.shape))


def admissibility(phi, c, grid):
    """``(P, c(P) + Delta(phi)(P)/2 >= 0)`` for every critical point P of phi."""
    from .dynsys import find_fixed_points
    phi = as_expr(phi)
    field_ = gradient(phi, grid.dim, period=grid.period)
    lap = _laplacian_pos(phi, grid.dim)
    out = []
    for fp in find_fixed_points(field_, grid):
        P = fp.position
        val = float(point_values(c, P[None, :])[0]) + 0.5 * float(np.ravel(lap.at(P[None, :]))[0])
        out.append((P, val >= 0))
    return out


def transformed_eigenpair(phi, eps, c, grid, params=None):
    """Principal pair of ``eps^2 Delta + a_eps``; its eigenvalue is ``eps*lambda``."""
    a = gradient_transform(phi, eps, c, grid, params, check=False)
    return principal_eigenpair(assemble(grid, eps * eps, None, a, scheme="exponential_fitted"))


# -- pressure diagnostic ----------------------------------------------------

@dataclass
class PressureReport:
    candidates: list
    max_value: float
    min_value: float
    harmonic_value: float
    sweep_limit: float = None
    matched: str = None

    def to_dict(self):
        return {"candidates": self.candidates, "max": self.max_value, "min": self.min_value,
                "harmonic": self.harmonic_value, "sweep_limit": self.sweep_limit,
                "matched": self.matched}


def pressure_prediction(recurrent, c, sweep_limit=None, match_tol=0.1):
    """Morse-Smale pressure candidates and the convention that fits a sweep.

    Per fixed point: ``c(P)`` minus the unstable trace of ``Db(P)``.  Per
    cycle: the time average of ``c`` minus the positive part of the Floquet
    exponent.  The harmonic candidate ``c(P) + sum|stable exponents|`` is
    reported alongside as the small-noise prediction for the eigenvalue.
    """
    if not recurrent.morse_smale:
        raise PreconditionError("pressure prediction needs a hyperbolic recurrent set")
    cands = []
    harmonic = []
    for fp in recurrent.fixed_points:
        cp = float(point_values(c, fp.position[None, :])[0])
        re = fp.eigen_real_parts
        cands.append({"element": "fixed_point", "kind": fp.kind,
                      "position": fp.position.tolist(),
                      "value": cp - float(np.sum(re[re > 0]))})
        harmonic.append(cp + float(np.sum(-re[re < 0])))
    for orbit in recurrent.orbits:
        cbar = float(np.mean(point_values(c, orbit.samples[:-1])))
        cands.append({"element": "orbit", "section_point": orbit.section_point.tolist(),
                      "value": cbar - max(orbit.floquet_log, 0.0)})
        harmonic.append(cbar + max(-orbit.floquet_log, 0.0))
    if not cands:
        raise PreconditionError("empty recurrent set")
    vals = [d["value"] for d in cands]
    rep = PressureReport(cands, max(vals), min(vals), min(harmonic))
    if sweep_limit is not None:
        rep.sweep_limit = float(sweep_limit)
        d_max = abs(rep.max_value - sweep_limit)
        d_min = abs(rep.min_value - sweep_limit)
        scale = match_tol * max(1.0, abs(sweep_limit))
        if min(d_max, d_min) > scale:
            rep.matched = "neither"
        elif rep.max_value == rep.min_value:
            rep.matched = "both"
        else:
            rep.matched = "max" if d_max <= d_min else "min"
    return rep


def extrapolate_limit(eps, values):
    """Linear extrapolation to ``eps = 0`` from the last two entries."""
    e1, e2 = eps[-2], eps[-1]
    v1, v2 = values[-2], values[-1]
    return float(v2 - (v2 - v1) / (e2 - e1) * e2)
