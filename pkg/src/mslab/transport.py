"""First-order transport ``<b, grad u> + c u = f`` by backward characteristics.

The bounded solution is

    u(x) = int_0^inf f(chi_t x) exp(-int_0^t c(chi_s x) ds) dt,

with ``chi`` the flow of ``-b``.  The nonlinear variant ``b(u,x)``,
``c(u,x)`` is handled by Picard iteration on this linear solve.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse.linalg as spla
from scipy.optimize import bisect

from . import kernels
from .dynsys import compute_b0, default_dt, separatrix_mask
from .errors import ConvergenceError, PreconditionError
from .expr import Expr, as_expr
from .mesh import ScalarSamples, gradient_fd
from .spectral import assemble

log = logging.getLogger(__name__)

TAIL_TOL = 1e-10
PICARD_MAXITER = 50
GROWTH_RUN = 6


@dataclass
class TransportSolution:
    u: ScalarSamples
    residual: ScalarSamples
    grad_max: float
    mask: ScalarSamples
    c0: float
    b0: float
    horizon: float

    def residual_off_mask(self):
        off = ~np.asarray(self.mask.values, dtype=bool)
        return float(np.max(self.residual.values[off])) if off.any() else 0.0

    def to_dict(self):
        return {"c0": self.c0, "b0": self.b0, "horizon": self.horizon,
                "grad_max": self.grad_max, "residual_off_mask": self.residual_off_mask(),
                "u_min": float(self.u.values.min()), "u_max": float(self.u.values.max())}


def _coef_on_grid(expr, grid, lam=None):
    vals = expr.at(grid.points(), lam)
    return np.broadcast_to(vals, (grid.size,)).astype(float)


def _lam_arg(lam_table):
    return None if lam_table is None else np.asarray(lam_table, dtype=float).ravel()


def _kernel_table(lam_table, grid):
    if lam_table is None:
        return None
    t = np.asarray(lam_table, dtype=float).reshape(grid.shape)
    return t.reshape(grid.n[0], 1) if grid.dim == 1 else t


def solve_linear(b, c, f, grid, dt=None, tail_tol=TAIL_TOL, lam_table=None, mask=None,
                 tube_radius=0.2, backend=None):
    """Characteristics solution on every grid node.

    The integral is truncated at ``T = ln(1/tail_tol)/c0`` and accumulated
    with an exponentially fitted trapezoid rule along an RK4 trajectory.
    ``lam_table`` (grid values of the current iterate) feeds ``lam`` in
    ``b``, ``c`` and ``f`` for the nonlinear problem.  The residual
    ``|<b, grad u> + c u - f|`` uses fourth-order differences.
    """
    c = as_expr(c)
    f = as_expr(f)
    lam = _lam_arg(lam_table)
    cvals = _coef_on_grid(c, grid, lam)
    c0 = float(cvals.min())
    if not c0 > 0:
        raise PreconditionError(f"need inf c > 0, got {c0}")
    if lam is not None and b.takes_lambda:
        b0 = compute_b0(b, grid, (float(lam.min()), float(lam.max()) + 1e-12), n_lambda=16,
                        polish=False)
    else:
        b0 = compute_b0(b, grid, polish=False)
    if c0 - b0 <= 0:
        log.warning("c0 - b0 = %.3g <= 0: gradient bound not guaranteed", c0 - b0)
    dt = default_dt(b) if dt is None else dt
    horizon = math.log(1.0 / tail_tol) / c0
    n_steps = max(1, int(math.ceil(horizon / dt)))
    u, _, _ = kernels.characteristic_integrals(
        grid.points(), b.components, c, f, b.period, horizon / n_steps, n_steps,
        lam_table=_kernel_table(lam_table, grid), backend=backend)
    u_s = ScalarSamples(grid, u.reshape(grid.shape))
    grad = gradient_fd(u_s).components.reshape(grid.dim, -1).T
    bvals = b(grid.points(), lam)
    fvals = _coef_on_grid(f, grid, lam)
    resid = np.abs(np.sum(bvals * grad, axis=1) + cvals * u - fvals)
    if mask is None:
        mask = separatrix_mask(b if not b.takes_lambda else _frozen(b, lam_table, grid),
                               grid, tube_radius, backend=backend)
    return TransportSolution(u_s, ScalarSamples(grid, resid.reshape(grid.shape)),
                             float(np.max(np.linalg.norm(grad, axis=1))), mask, c0, b0,
                             horizon)


def _frozen(b, lam_table, grid):
    """Field with ``lam`` replaced by a constant (mean of the table); used only
    to locate separatrices of the current iterate."""
    from .fields import expression
    lam_bar = float(np.mean(lam_table))
    comps = [str(cmp).replace("lam", f"({lam_bar!r})") for cmp in b.components]
    return expression(comps, period=b.period)


def viscous_solve(eps, b, c, f, grid):
    """Direct solve of the exponentially fitted ``(eps Delta + b.grad + c) u = f``."""
    A = assemble(grid, eps, b, c, scheme="exponential_fitted")
    if not float(np.min(A.c)) > 0:
        raise PreconditionError("c must be positive for a nonsingular assembly")
    fvals = _coef_on_grid(as_expr(f), grid)
    u = spla.spsolve(A.matrix.tocsc(), fvals)
    return ScalarSamples(grid, u.reshape(grid.shape))


@dataclass
class Oscillation:
    T: np.ndarray
    partial: np.ndarray
    osc: np.ndarray
    window: float


def oscillation_indicator(b, c, f, x, T_list, dt=None, window=None, backend=None):
    """Partial integrals ``u_T(x)`` and their spread over the trailing window.

    ``osc(T)`` is ``max - min`` of ``u_t(x)`` for ``t`` in
    ``[T - window, T]``; ``window`` defaults to the largest period.
    """
    c = as_expr(c)
    f = as_expr(f)
    T_list = np.sort(np.asarray(T_list, dtype=float))
    dt = default_dt(b) if dt is None else dt
    window = max(b.period) if window is None else window
    n_steps = int(math.ceil(T_list[-1] / dt))
    step = T_list[-1] / n_steps
    pt = np.atleast_2d(np.asarray(x, dtype=float)).reshape(1, b.dim)
    _, _, rec = kernels.characteristic_integrals(pt, b.components, c, f, b.period, step,
                                                 n_steps, record_stride=1, backend=backend)
    series = rec[0]
    times = np.arange(n_steps + 1) * step
    partial = np.interp(T_list, times, series)
    osc = np.empty(len(T_list))
    for k, T in enumerate(T_list):
        sel = (times >= T - window - 1e-12) & (times <= T + 1e-12)
        osc[k] = float(series[sel].max() - series[sel].min())
    return Oscillation(T_list, partial, osc, window)


# -- nonlinear problem ------------------------------------------------------

@dataclass
class HyperbolicityConstants:
    b0: float
    gamma: float
    a0: float
    A: float
    beta: float
    Lambda: float
    c_inf: float
    sup_grad_f: float
    sup_f_over_c: float
    sup_f_cprime: float

    def to_dict(self):
        return dict(self.__dict__)


def _grid_lam(grid, lam_range, n_lambda):
    lams = np.linspace(lam_range[0], lam_range[1], n_lambda)
    pts = grid.points()
    P = np.repeat(pts, len(lams), axis=0)
    L = np.tile(lams, len(pts))
    return P, L


def hyperbolicity_constants(b, c, f, grid, lam_range, n_lambda=64):
    """Sup/inf sweeps over grid nodes and ``n_lambda`` samples of ``lam_range``."""
    if n_lambda < 64:
        raise PreconditionError("sample lam_range at 64 points or more")
    lo, hi = map(float, lam_range)
    if not (math.isfinite(lo) and math.isfinite(hi) and hi > lo):
        raise PreconditionError("lam_range must be a finite interval")
    c = as_expr(c)
    f = as_expr(f)
    names = ("x", "y")[:grid.dim]
    P, L = _grid_lam(grid, (lo, hi), n_lambda)
    m = len(L)

    def ev(e, pts, lam):
        return np.broadcast_to(e.at(pts, lam), (len(pts),)).astype(float)

    b0 = compute_b0(b, grid, (lo, hi), n_lambda=n_lambda,
                    polish=False) if b.takes_lambda else compute_b0(b, grid, polish=False)
    gamma = float(np.max(np.linalg.norm(b.dlam(P, L), axis=1))) if b.takes_lambda else 0.0
    cv = ev(c, P, L)
    cprime = ev(c.diff("lam"), P, L)
    dcx = np.stack([ev(c.diff(v), P, L) for v in names], axis=1)
    fv = ev(f, P, L)
    pts = grid.points()
    grad_f = np.stack([ev(f.diff(v), pts, None) for v in names], axis=1)
    c_inf = float(cv.min())
    sup_f_c = float(np.max(fv / cv))
    sup_gf = float(np.max(np.linalg.norm(grad_f, axis=1)))
    return HyperbolicityConstants(
        b0=b0, gamma=gamma, a0=c_inf - b0,
        A=sup_gf + sup_f_c * float(np.max(np.linalg.norm(dcx, axis=1))),
        beta=float(np.max(np.abs(cprime))) * sup_f_c,
        Lambda=float(np.min(cv + L * cprime)) - b0,
        c_inf=c_inf, sup_grad_f=sup_gf, sup_f_over_c=sup_f_c,
        sup_f_cprime=float(np.max(np.abs(fv * cprime))))


def check_conditions(k):
    """The three hyperbolicity assumptions, evaluated literally.

    1. ``a0 > beta``
    2. ``a0^2 + beta^2 >= 2 a0 beta + 4 gamma sup|grad f|``
    3. ``Lambda^2 - 4 A gamma >= 0``
    """
    return (k.a0 > k.beta,
            k.a0 ** 2 + k.beta ** 2 >= 2 * k.a0 * k.beta + 4 * k.gamma * k.sup_grad_f,
            k.Lambda ** 2 - 4 * k.A * k.gamma >= 0)


def existence_margin(k):
    """``c0 (c0 - b0) - sup(f |c'|)``; positive when the existence bound holds."""
    return k.c_inf * (k.c_inf - k.b0) - k.sup_f_cprime


@dataclass
class NonlinearResult:
    solution: TransportSolution
    history: list
    iterations: int
    conditions: tuple = None
    flagged: bool = False
    ratio: float = field(default=float("nan"))

    def to_dict(self):
        return {"iterations": self.iterations, "history": self.history,
                "contraction_ratio": self.ratio, "flagged": self.flagged,
                "conditions": list(self.conditions) if self.conditions else None,
                "solution": self.solution.to_dict()}


def contraction_ratio(history):
    """Geometric mean of successive update ratios (NaN when undefined)."""
    h = [v for v in history if v > 0]
    if len(h) < 2:
        return float("nan")
    r = [b / a for a, b in zip(h, h[1:])]
    return float(np.exp(np.mean(np.log(r))))


def solve_nonlinear(b, c, f, grid, u0, tol=1e-8, maxiter=PICARD_MAXITER, lam_range=None,
                    dt=None, tube_radius=0.2, backend=None):
    """Picard iteration ``u_{k+1} = solve_linear(b(u_k), c(u_k), f)``.

    ``u0`` is a scalar or grid values.  When ``lam_range`` is given the
    hyperbolicity assumptions are checked first; failures are logged and
    the result is flagged but the iteration still runs.
    """
    c = as_expr(c)
    f = as_expr(f)
    conditions = None
    flagged = False
    if lam_range is not None:
        conditions = check_conditions(hyperbolicity_constants(b, c, f, grid, lam_range))
        if not all(conditions):
            log.warning("hyperbolicity assumptions fail: %s", conditions)
            flagged = True
    u = np.broadcast_to(np.asarray(u0, dtype=float), grid.shape).astype(float)
    fvals = _coef_on_grid(f, grid, u.ravel())
    depends = b.takes_lambda or "lam" in c.variables or "lam" in f.variables
    # the mask only matters for the reported solution; skip it inside the loop
    mask = None if not depends else ScalarSamples(grid, np.zeros(grid.shape, dtype=bool))
    history = []
    sol = None
    for it in range(1, maxiter + 1):
        sol = solve_linear(b, c, f, grid, dt=dt, lam_table=u if depends else None,
                           mask=mask, tube_radius=tube_radius, backend=backend)
        new = np.asarray(sol.u.values)
        if not depends:
            return NonlinearResult(sol, [0.0], 1, conditions, flagged)
        diff = float(np.max(np.abs(new - u)))
        history.append(diff)
        c0 = float(_coef_on_grid(c, grid, new.ravel()).min())
        bound = 10 * float(np.max(np.abs(fvals))) / max(c0, 1e-300)
        if not np.all(np.isfinite(new)) or float(np.max(np.abs(new))) > bound:
            raise ConvergenceError(f"Picard iterate diverged at iteration {it}")
        u = new
        if len(history) > GROWTH_RUN and all(
                b > a for a, b in zip(history[-GROWTH_RUN - 1:], history[-GROWTH_RUN:])):
            raise ConvergenceError(f"Picard updates grew for {GROWTH_RUN} consecutive "
                                   f"iterations (last {diff:.3g}); unstable branch")
        if diff <= tol:
            frozen = b if not b.takes_lambda else _frozen(b, u, grid)
            sol.mask = separatrix_mask(frozen, grid, tube_radius, backend=backend)
            return NonlinearResult(sol, history, it, conditions, flagged,
                                   contraction_ratio(history))
    raise ConvergenceError(f"Picard iteration did not converge in {maxiter} iterations "
                           f"(last update {history[-1]:.3g})")


# -- branches ---------------------------------------------------------------

@dataclass
class BranchTable:
    entries: list

    @property
    def counts(self):
        return [len(e["roots"]) for e in self.entries]

    @property
    def total(self):
        return int(np.prod(self.counts)) if self.entries else 0

    def to_dict(self):
        return {"entries": self.entries, "counts": self.counts, "total": self.total}


def count_branches(c, f, fixed_points, lam_bracket, n_sub=1024):
    """Simple roots of ``g(u) = c(u, P) u - f(P)`` at each fixed point."""
    c = as_expr(c)
    f = as_expr(f)
    dc = c.diff("lam")
    lo, hi = map(float, lam_bracket)
    grid_u = np.linspace(lo, hi, n_sub + 1)
    entries = []
    for fp in fixed_points:
        P = np.atleast_2d(getattr(fp, "position", fp)).astype(float)
        fP = float(np.ravel(f.at(P))[0])

        def g(u, P=P, fP=fP):
            return float(np.ravel(c.at(P, np.array([u])))[0]) * u - fP

        vals = np.array([g(u) for u in grid_u])
        roots, degenerate = [], []
        for k in range(n_sub):
            a, bnd = grid_u[k], grid_u[k + 1]
            if vals[k] == 0.0:
                r = a
            elif vals[k] * vals[k + 1] < 0:
                r = bisect(g, a, bnd, xtol=1e-15, rtol=4 * np.finfo(float).eps, maxiter=200)
            else:
                continue
            slope = float(np.ravel(dc.at(P, np.array([r])))[0]) * r + \
                float(np.ravel(c.at(P, np.array([r])))[0])
            (degenerate if abs(slope) < 1e-8 else roots).append(float(r))
        if vals[-1] == 0.0:
            roots.append(float(grid_u[-1]))
        entries.append({"position": P[0].tolist(), "f": fP, "roots": roots,
                        "degenerate": degenerate})
    return BranchTable(entries)


def branch_seed(grid, fixed_points, values, width=None):
    """Smooth seed equal to ``values[i]`` near ``P_i`` (Gaussian partition of unity)."""
    pos = [np.asarray(getattr(p, "position", p), dtype=float) for p in fixed_points]
    if width is None:
        dmin = min((float(grid.distance(a, b)) for i, a in enumerate(pos) for b in pos[i + 1:]),
                   default=max(grid.period))
        width = 0.25 * dmin
    w = np.stack([np.exp(-(grid.node_distance(p) / width) ** 2) for p in pos])
    w /= np.sum(w, axis=0, keepdims=True)
    return np.tensordot(np.asarray(values, dtype=float), w, axes=1)


def realize_branches(b, c, f, grid, fixed_points, table, tol=1e-8, distinct_tol=1e-3,
                     backend=None):
    """Try every branch combination as a Picard seed; return distinct limits.

    Returns ``(combinations, solutions)`` where each solution entry records
    the seed combination and the converged field (failed seeds are listed
    with ``converged = False``).
    """
    import itertools

    combos = list(itertools.product(*[e["roots"] for e in table.entries]))
    attempts = []
    found = []
    for combo in combos:
        seed = branch_seed(grid, fixed_points, combo)
        try:
            res = solve_nonlinear(b, c, f, grid, seed, tol=tol, backend=backend)
        except ConvergenceError as exc:
            attempts.append({"seed": list(combo), "converged": False, "reason": str(exc)})
            continue
        u = np.asarray(res.solution.u.values)
        values_at = [float(np.ravel(res.solution.u.values)[np.argmin(grid.node_distance(
            getattr(p, "position", p)).ravel())]) for p in fixed_points]
        new = all(float(np.max(np.abs(u - v))) > distinct_tol for v in found)
        if new:
            found.append(u)
        attempts.append({"seed": list(combo), "converged": True, "values_at_points": values_at,
                         "distinct": new, "iterations": res.iterations})
    return attempts, found
