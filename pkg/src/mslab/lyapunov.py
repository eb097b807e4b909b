"""Lyapunov functions for a rotational field and the effective potential Psi.

For a field ``b = -grad L + Omega`` the potential

    Psi = |grad L|^2 / 4 + <grad L, Omega> / 2

must be non-negative and vanish only near the recurrent set of ``Omega``.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.linalg

from .dynsys import HYPERBOLIC_TOL, _polyline_distance
from .errors import PreconditionError
from .expr import Expr
from .mesh import ScalarSamples, gradient_fd

DEFAULT_TOL = 1e-8


def _grad_L(L, grid):
    if isinstance(L, ScalarSamples):
        return gradient_fd(L).components.reshape(grid.dim, -1).T
    if not isinstance(L, Expr):
        L = Expr(str(L))
    pts = grid.points()
    names = ("x", "y")[:grid.dim]
    return np.stack([np.broadcast_to(L.diff(v).at(pts), (grid.size,)) for v in names], axis=1)


def _omega_values(omega, grid):
    if omega is None:
        return np.zeros((grid.size, grid.dim))
    return omega(grid.points())


def psi_field(L, omega, grid):
    """Pointwise ``|grad L|^2/4 + <grad L, Omega>/2`` on the grid.

    ``L`` may be an :class:`Expr` (analytic gradient) or grid samples
    (fourth-order differences); ``omega`` is a FieldSpec or None.
    """
    g = _grad_L(L, grid)
    w = _omega_values(omega, grid)
    psi = 0.25 * np.sum(g * g, axis=1) + 0.5 * np.sum(g * w, axis=1)
    return ScalarSamples(grid, psi.reshape(grid.shape))


@dataclass
class LyapunovReport:
    nonnegative: bool
    zero_near_recurrent: bool
    margin: float
    margin_positive: bool
    psi_min: float
    min_locations: list
    offending: list = field(default_factory=list)

    @property
    def passed(self):
        return self.nonnegative and self.zero_near_recurrent and self.margin_positive

    def to_dict(self):
        return {"passed": self.passed, "nonnegative": self.nonnegative,
                "zero_near_recurrent": self.zero_near_recurrent, "margin": self.margin,
                "margin_positive": self.margin_positive, "psi_min": self.psi_min,
                "min_locations": self.min_locations, "offending": self.offending[:20]}


@dataclass
class LyapunovSpec:
    L: object
    psi: ScalarSamples
    report: LyapunovReport


def recurrent_distance(recurrent, grid):
    """Distance from every node to each recurrent element (list of arrays)."""
    pts = grid.points()
    period = np.asarray(grid.period)
    out = [grid.distance(pts, p.position) for p in recurrent.fixed_points]
    out += [_polyline_distance(pts, o, period) for o in recurrent.orbits]
    return out


def verify_lyapunov(L, omega, recurrent, grid, tol=DEFAULT_TOL, delta=None):
    """Check Psi >= -tol everywhere, Psi reaches ~0 near every recurrent
    element, and Psi is bounded away from zero outside the 2*delta tubes.

    ``delta`` defaults to three grid spacings.  Failures are reported in
    the returned :class:`LyapunovReport`, never raised.
    """
    delta = 3 * max(grid.h) if delta is None else delta
    psi = psi_field(L, omega, grid).values.ravel()
    pts = grid.points()
    dists = recurrent_distance(recurrent, grid)

    bad = np.flatnonzero(psi < -tol)
    offending = [{"point": pts[i].tolist(), "psi": float(psi[i])} for i in bad]

    near_ok = True
    for d in dists:
        near = d <= delta
        if not near.any() or psi[near].min() > tol:
            near_ok = False
    if dists:
        far = np.min(np.stack(dists), axis=0) > 2 * delta
    else:
        far = np.ones(grid.size, dtype=bool)
    margin = float(psi[far].min()) if far.any() else float("inf")

    i_min = np.flatnonzero(psi <= psi.min() + tol)
    return LyapunovReport(
        nonnegative=len(bad) == 0, zero_near_recurrent=near_ok, margin=margin,
        margin_positive=margin > tol, psi_min=float(psi.min()),
        min_locations=[pts[i].tolist() for i in i_min[:64]], offending=offending)


def lyapunov_spec(L, omega, recurrent, grid, tol=DEFAULT_TOL, delta=None):
    return LyapunovSpec(L, psi_field(L, omega, grid),
                        verify_lyapunov(L, omega, recurrent, grid, tol, delta))


# -- local quadratic Lyapunov functions -------------------------------------

def solve_lyapunov_direct(A):
    """Solve ``A^T M + M A = -I`` through the dim^2 Kronecker system."""
    A = np.asarray(A, dtype=float)
    d = A.shape[0]
    eye = np.eye(d)
    K = np.kron(eye, A.T) + np.kron(A.T, eye)
    m = np.linalg.solve(K, -eye.ravel(order="F"))
    M = m.reshape(d, d, order="F")
    return 0.5 * (M + M.T)


@dataclass
class LocalLyapunov:
    center: np.ndarray
    M: np.ndarray
    n_stable: int
    basis: np.ndarray

    def __call__(self, pts):
        d = np.atleast_2d(pts) - self.center
        return np.einsum("ij,jk,ik->i", d, self.M, d)

    def residual(self, A):
        """Norm of ``A^T M + M A + S`` with S = -I on the unstable block."""
        W = np.linalg.inv(self.basis)
        k = self.n_stable
        S = np.diag([1.0] * k + [-1.0] * (len(self.center) - k))
        return float(np.linalg.norm(A.T @ self.M + self.M @ A + W.T @ S @ W))


def quadratic_local_lyapunov(fixed_point, center=None):
    """Quadratic ``(x-P)^T M (x-P)`` near a hyperbolic fixed point.

    For a sink ``M`` solves ``A^T M + M A = -I``.  Otherwise the stable and
    unstable subspaces are split by an ordered real Schur form followed by a
    Sylvester decoupling, and each block gets its own equation (with ``-A_u``
    on the unstable block) so that M stays positive definite.
    """
    if hasattr(fixed_point, "jacobian"):
        A = np.asarray(fixed_point.jacobian, dtype=float)
        center = fixed_point.position
    else:
        A = np.atleast_2d(np.asarray(fixed_point, dtype=float))
    d = A.shape[0]
    center = np.zeros(d) if center is None else np.asarray(center, dtype=float)
    re = np.linalg.eigvals(A).real
    if np.any(np.abs(re) < HYPERBOLIC_TOL):
        raise PreconditionError("non-hyperbolic Jacobian: eigenvalue real part near zero")
    k = int(np.sum(re < 0))
    if k == d:
        return LocalLyapunov(center, solve_lyapunov_direct(A), k, np.eye(d))
    T, Q, _ = scipy.linalg.schur(A, output="real", sort="lhp")
    X = np.zeros((k, d - k))
    if 0 < k < d:
        X = scipy.linalg.solve_sylvester(T[:k, :k], -T[k:, k:], -T[:k, k:])
    V = np.eye(d)
    V[:k, k:] = X
    B = Q @ V
    D = np.linalg.solve(B, A @ B)
    blocks = np.zeros((d, d))
    if k:
        blocks[:k, :k] = solve_lyapunov_direct(D[:k, :k])
    blocks[k:, k:] = solve_lyapunov_direct(-D[k:, k:])
    W = np.linalg.inv(B)
    M = W.T @ blocks @ W
    return LocalLyapunov(center, 0.5 * (M + M.T), k, B)
