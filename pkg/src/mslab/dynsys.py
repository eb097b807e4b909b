"""Flows, recurrent-set detection and basin geometry for analytic fields."""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import solve_ivp
from scipy.optimize import minimize
from scipy.spatial import cKDTree

from . import kernels
from .errors import PreconditionError
from .mesh import ScalarSamples

log = logging.getLogger(__name__)

NEWTON_TOL = 1e-12
NEWTON_MAXITER = 50
RESIDUAL_TOL = 1e-10
HYPERBOLIC_TOL = 1e-8
CLOSURE_TOL = 1e-8
MATCH_TOL = 1e-3


def default_dt(spec):
    return 1e-3 * max(spec.period)


@dataclass
class FixedPoint:
    position: np.ndarray
    jacobian: np.ndarray
    eigenvalues: np.ndarray
    kind: str

    @property
    def eigen_real_parts(self):
        return self.eigenvalues.real

    @property
    def hyperbolic(self):
        return bool(np.all(np.abs(self.eigen_real_parts) >= HYPERBOLIC_TOL))

    @property
    def unstable_trace(self):
        re = self.eigen_real_parts
        return float(np.sum(re[re > 0]))

    @property
    def contraction_rate(self):
        re = self.eigen_real_parts
        return float(np.min(np.abs(re)))

    def to_dict(self):
        return {"position": self.position.tolist(), "kind": self.kind,
                "eigen_real_parts": self.eigen_real_parts.tolist(),
                "hyperbolic": self.hyperbolic}


@dataclass
class PeriodicOrbit:
    samples: np.ndarray
    period: float
    arclength: np.ndarray
    floquet_log: float
    section_point: np.ndarray
    closure_gap: float
    times: np.ndarray = field(repr=False, default=None)

    @property
    def length(self):
        return float(self.arclength[-1])

    @property
    def hyperbolic(self):
        return abs(self.floquet_log) >= HYPERBOLIC_TOL

    @property
    def attracting(self):
        return self.floquet_log < 0

    def point_at(self, l):
        """Interpolated orbit point(s) at arclength ``l`` (taken mod length)."""
        l = np.mod(np.atleast_1d(np.asarray(l, dtype=float)), self.length)
        unwrapped = _unwrap_path(self.samples, self._period_vec)
        pts = np.stack([np.interp(l, self.arclength, unwrapped[:, k])
                        for k in range(unwrapped.shape[1])], axis=1)
        return np.mod(pts, self._period_vec)

    def to_dict(self):
        return {"period": self.period, "length": self.length,
                "floquet_log": self.floquet_log,
                "section_point": self.section_point.tolist(),
                "closure_gap": self.closure_gap, "hyperbolic": self.hyperbolic}

    _period_vec: np.ndarray = field(repr=False, default=None)


@dataclass
class RecurrentSet:
    fixed_points: list
    orbits: list

    @property
    def morse_smale(self):
        return all(p.hyperbolic for p in self.fixed_points) and \
            all(o.hyperbolic for o in self.orbits)

    def to_dict(self):
        return {"morse_smale": self.morse_smale,
                "fixed_points": [p.to_dict() for p in self.fixed_points],
                "orbits": [o.to_dict() for o in self.orbits]}


def _unwrap_path(pts, period):
    d = np.diff(pts, axis=0)
    d -= period * np.round(d / period)
    return np.concatenate([pts[:1], pts[:1] + np.cumsum(d, axis=0)])


# -- flow -------------------------------------------------------------------

def flow(spec, x0, t_final, dt=None, direction="forward", lam_table=None, backend=None):
    """Classical RK4 trajectory of ``x' = +-b(x)`` from ``x0``.

    Returns ``(times, positions)`` with positions wrapped into the periodic
    cell; the last step is shortened so the trajectory ends at ``t_final``.
    """
    if direction not in ("forward", "backward"):
        raise PreconditionError(f"direction must be forward or backward, got {direction!r}")
    dt = default_dt(spec) if dt is None else dt
    if dt <= 0:
        raise PreconditionError("dt must be positive")
    n_steps = max(1, int(math.ceil(t_final / dt - 1e-12)))
    step = t_final / n_steps
    sign = 1.0 if direction == "forward" else -1.0
    x0 = np.atleast_2d(np.asarray(x0, dtype=float)).reshape(1, spec.dim)
    _, rec = kernels.rk4_flow(x0, spec.components, spec.period, step, n_steps, sign,
                              lam_table=lam_table, record_stride=1, backend=backend)
    return np.linspace(0.0, t_final, n_steps + 1), rec[0]


def advance(spec, points, t_final, dt=None, direction="forward", backend=None):
    """Endpoints of the RK4 flow for a batch of points."""
    dt = default_dt(spec) if dt is None else dt
    n_steps = max(1, int(math.ceil(t_final / dt - 1e-12)))
    sign = 1.0 if direction == "forward" else -1.0
    out, _ = kernels.rk4_flow(points, spec.components, spec.period, t_final / n_steps,
                              n_steps, sign, backend=backend)
    return out


# -- fixed points -----------------------------------------------------------

def _classify_kind(eigs):
    re = eigs.real
    if np.all(re < 0):
        return "sink"
    if np.all(re > 0):
        return "source"
    return "saddle"


def make_fixed_point(spec, position, lam=None):
    pos = np.asarray(position, dtype=float)
    jac = spec.jacobian(pos[None, :], lam)[0]
    eigs = np.linalg.eigvals(jac)
    return FixedPoint(pos, jac, eigs, _classify_kind(eigs))


def _local_minima(grid, speed):
    is_min = np.ones(grid.shape, dtype=bool)
    for ax in range(grid.dim):
        for shift in (1, -1):
            is_min &= speed <= np.roll(speed, shift, axis=ax)
    return np.argwhere(is_min)


def _newton(spec, x, lam=None):
    period = np.asarray(spec.period)
    for _ in range(NEWTON_MAXITER):
        bx = spec(x[None, :], lam)[0]
        if np.linalg.norm(bx) <= NEWTON_TOL:
            return x
        jac = spec.jacobian(x[None, :], lam)[0]
        try:
            step = np.linalg.solve(jac, bx)
        except np.linalg.LinAlgError:
            return None
        if not np.all(np.isfinite(step)) or np.linalg.norm(step) > max(period):
            return None
        x = x - step
    bx = spec(x[None, :], lam)[0]
    return x if np.linalg.norm(bx) <= RESIDUAL_TOL else None


def find_fixed_points(spec, grid, lam=None):
    """Zeros of ``b`` by Newton from grid nodes where ``|b|`` is locally minimal.

    Candidates within one grid spacing of an accepted point are merged.
    Non-hyperbolic points are returned (``hyperbolic`` is False) and logged.
    """
    speed = np.linalg.norm(spec(grid.points(), lam), axis=1).reshape(grid.shape)
    coords = [ax for ax in grid.axes()]
    period = np.asarray(spec.period)
    merge_radius = max(grid.h)
    found = []
    for idx in _local_minima(grid, speed):
        x0 = np.array([coords[k][i] for k, i in enumerate(idx)])
        x = _newton(spec, x0, lam)
        if x is None:
            continue
        x = np.mod(x, period)
        x[np.isclose(x, period, rtol=0, atol=1e-13)] = 0.0
        if np.linalg.norm(spec(x[None, :], lam)[0]) > RESIDUAL_TOL:
            continue
        if any(grid.distance(x, p.position) < merge_radius for p in found):
            continue
        fp = make_fixed_point(spec, x, lam)
        if not fp.hyperbolic:
            log.warning("non-hyperbolic fixed point at %s violates Morse-Smale", x.tolist())
        found.append(fp)
    found.sort(key=lambda p: tuple(np.round(p.position, 9)))
    return found


# -- periodic orbits --------------------------------------------------------

def _augmented_rhs(spec):
    dim = spec.dim

    def rhs(t, z):
        x = z[:dim][None, :]
        bx = spec(x)[0]
        jac = spec.jacobian(x)[0]
        M = z[dim:dim + dim * dim].reshape(dim, dim)
        dM = jac @ M
        return np.concatenate([bx, dM.ravel(), [np.linalg.norm(bx), np.trace(jac)]])

    return rhs


def _return_map(spec, v, axis, s0, t_max, rtol):
    """First return to the section ``x_axis = s0`` from the transversal value ``v``."""
    dim = spec.dim
    other = 1 - axis
    period = spec.period
    x0 = np.zeros(dim)
    x0[axis] = s0
    x0[other] = v
    b0 = spec(x0[None, :])[0]
    if abs(b0[axis]) < 1e-8:
        return None
    direction = math.copysign(1.0, b0[axis])
    target = s0 + direction * period[axis]

    def crossed(t, z):
        return z[axis] - target

    crossed.terminal = True
    z0 = np.concatenate([x0, np.eye(dim).ravel(), [0.0, 0.0]])
    sol = solve_ivp(_augmented_rhs(spec), (0.0, t_max), z0, method="DOP853",
                    events=crossed, rtol=rtol, atol=rtol, dense_output=True)
    if sol.status != 1 or len(sol.t_events[0]) == 0:
        return None
    T = float(sol.t_events[0][0])
    zT = sol.y_events[0][0]
    M = zT[dim:dim + dim * dim].reshape(dim, dim)
    bT = spec(zT[None, :dim])[0]
    # derivative of the return map including the crossing-time correction
    dP = M[other, other] - bT[other] / bT[axis] * M[axis, other]
    disp = zT[other] - v
    disp -= period[other] * np.round(disp / period[other])
    return {"T": T, "disp": float(disp), "dP": float(dP), "sol": sol, "z": zT}


def find_periodic_orbits(spec, section_axis=0, n_sections=8, section_value=0.0,
                         t_max=None, n_samples=512, rtol=1e-12):
    """Hyperbolic periodic orbits crossing a coordinate section once per period.

    Seeds are ``n_sections`` equally spaced transversal values on the
    section ``x[section_axis] = section_value``; Newton is run on the return
    displacement with the derivative of the linearised return map.
    """
    if spec.dim != 2:
        raise PreconditionError("periodic orbit search needs a 2-D field")
    if spec.takes_lambda:
        raise PreconditionError("periodic orbit search needs a parameter-free field")
    axis = int(section_axis)
    other = 1 - axis
    per = spec.period[other]
    t_max = 50 * max(spec.period) if t_max is None else t_max
    orbits = []
    for v in np.arange(n_sections) * per / n_sections:
        res = None
        for _ in range(NEWTON_MAXITER):
            res = _return_map(spec, v, axis, section_value, t_max, rtol)
            if res is None:
                break
            if abs(res["disp"]) <= 1e-11:
                break
            denom = res["dP"] - 1.0
            if abs(denom) < 1e-14:
                res = None
                break
            step = res["disp"] / denom
            if abs(step) > per / 2:
                step = math.copysign(per / 4, step)
            v = float(np.mod(v - step, per))
        if res is None or abs(res["disp"]) > CLOSURE_TOL:
            continue
        v = float(np.mod(v, per))
        if any(abs(_wrapdiff(v, o.section_point[other], per)) < 1e-6 for o in orbits):
            continue
        orbit = _refine_orbit(spec, res, v, axis, section_value, n_samples)
        if orbit.closure_gap > CLOSURE_TOL:
            log.info("rejecting orbit candidate at %g: closure gap %g", v, orbit.closure_gap)
            continue
        if not orbit.hyperbolic:
            log.warning("non-hyperbolic periodic orbit through %g", v)
        orbits.append(orbit)
    orbits.sort(key=lambda o: tuple(np.round(o.section_point, 9)))
    return orbits


def _wrapdiff(a, b, p):
    d = a - b
    return d - p * np.round(d / p)


def _refine_orbit(spec, res, v, axis, s0, n_samples):
    dim = spec.dim
    period = np.asarray(spec.period)
    T = res["T"]
    sol = res["sol"]
    t = np.linspace(0.0, T, n_samples + 1)
    z = sol.sol(t)
    unwrapped = z[:dim].T
    samples = np.mod(unwrapped, period)
    arclength = z[-2]
    start = np.zeros(dim)
    start[axis] = s0
    start[1 - axis] = v
    gap_vec = unwrapped[-1] - unwrapped[0]
    gap_vec -= period * np.round(gap_vec / period)
    # det of the monodromy is exp(int div b) and its tangent multiplier is 1,
    # so the transversal exponent is the divergence average; this stays
    # accurate when |P'| underflows the variational tolerance.
    floquet = float(res["z"][-1]) / T
    if res["dP"] > 0 and abs(math.log(res["dP"]) / T - floquet) > 1e-3 * max(1.0, abs(floquet)):
        log.info("return-map exponent %g differs from divergence average %g",
                 math.log(res["dP"]) / T, floquet)
    orbit = PeriodicOrbit(samples=samples, period=T, arclength=np.asarray(arclength),
                          floquet_log=float(floquet), section_point=start,
                          closure_gap=float(np.linalg.norm(gap_vec)), times=t)
    orbit._period_vec = period
    return orbit


def classify(spec, grid, section_axis=0, n_sections=8):
    """Detect fixed points and (in 2-D) periodic orbits."""
    fps = find_fixed_points(spec, grid)
    orbits = []
    if spec.dim == 2 and not spec.takes_lambda:
        orbits = find_periodic_orbits(spec, section_axis, n_sections)
    return RecurrentSet(fps, orbits)


# -- hyperbolicity bound ----------------------------------------------------

def _sym_max_eig(spec, pts, lam):
    jac = spec.jacobian(pts, lam)
    sym = 0.5 * (jac + np.swapaxes(jac, 1, 2))
    return np.linalg.eigvalsh(sym)[:, -1]


def compute_b0(spec, grid, lambda_range=None, n_lambda=64, polish=True):
    """Sup of the largest eigenvalue of ``(Db + Db^T)/2`` over grid and lam samples."""
    pts = grid.points()
    if spec.takes_lambda:
        if lambda_range is None:
            raise PreconditionError("lambda_range required for a lam-dependent field")
        lams = np.linspace(lambda_range[0], lambda_range[1], n_lambda)
    else:
        lams = [None]
    best, best_arg = -np.inf, None
    for lam in lams:
        vals = _sym_max_eig(spec, pts, lam)
        i = int(np.argmax(vals))
        if vals[i] > best:
            best, best_arg = float(vals[i]), (pts[i], lam)
    if not polish:
        return best
    return max(best, _polish(lambda p, l: _sym_max_eig(spec, p[None, :], l)[0],
                             best_arg, lambda_range, maximize=True))


def _polish(func, start, lambda_range, maximize):
    """Local Nelder-Mead refinement of a grid extremum over (x[, lam])."""
    x0, lam0 = start
    sgn = -1.0 if maximize else 1.0
    dim = len(x0)
    if lam0 is None:
        def obj(z):
            return sgn * func(z, None)
        z0 = np.asarray(x0, dtype=float)
    else:
        lo, hi = lambda_range

        def obj(z):
            return sgn * func(z[:dim], float(np.clip(z[dim], lo, hi)))
        z0 = np.append(np.asarray(x0, dtype=float), lam0)
    res = minimize(obj, z0, method="Nelder-Mead",
                   options={"xatol": 1e-10, "fatol": 1e-14, "maxiter": 4000})
    return sgn * float(res.fun)


# -- separatrices -----------------------------------------------------------

def _polyline_distance(points, orbit, period):
    """Periodic distance from points to an orbit polyline."""
    samples = orbit.samples
    a = samples[:-1]
    seg = samples[1:] - a
    seg -= period * np.round(seg / period)
    out = np.full(points.shape[0], np.inf)
    for chunk in range(0, points.shape[0], 512):
        p = points[chunk:chunk + 512, None, :]
        d = p - a[None]
        d -= period * np.round(d / period)
        seg2 = np.maximum(np.sum(seg * seg, axis=1), 1e-300)
        t = np.clip(np.sum(d * seg[None], axis=2) / seg2, 0.0, 1.0)
        r = d - t[..., None] * seg[None]
        out[chunk:chunk + 512] = np.sqrt(np.min(np.sum(r * r, axis=2), axis=1))
    return out


def basin_labels(spec, grid, recurrent, dt=None, backend=None):
    """Index of the attractor reached by each node (-1 when unresolved)."""
    period = np.asarray(spec.period)
    attractors = [("point", p) for p in recurrent.fixed_points if p.kind == "sink"]
    attractors += [("orbit", o) for o in recurrent.orbits if o.attracting]
    labels = np.full(grid.size, -1, dtype=int)
    if not attractors:
        return labels.reshape(grid.shape), attractors
    rates = [p.contraction_rate if kind == "point" else abs(p.floquet_log)
             for kind, p in attractors]
    horizon = 20.0 / min(rates)
    # endpoints only need to land within MATCH_TOL of an attractor
    dt = 10 * default_dt(spec) if dt is None else dt
    ends = advance(spec, grid.points(), horizon, dt=dt, backend=backend)
    for k, (kind, att) in enumerate(attractors):
        if kind == "point":
            d = grid.distance(ends, att.position)
        else:
            d = _polyline_distance(ends, att, period)
        labels[(d <= MATCH_TOL) & (labels < 0)] = k
    return labels.reshape(grid.shape), attractors


def separatrix_mask(spec, grid, tube_radius, recurrent=None, dt=None, backend=None):
    """Nodes within ``tube_radius`` of basin boundaries or repellers.

    Seeds are (i) nodes whose attractor differs from a neighbour's or could
    not be resolved, (ii) traced stable manifolds of saddles, (iii) sources
    and repelling cycles.  Seeds are dilated by ``tube_radius``.
    """
    recurrent = classify(spec, grid) if recurrent is None else recurrent
    period = np.asarray(spec.period)
    labels, attractors = basin_labels(spec, grid, recurrent, dt=dt, backend=backend)
    seed = labels < 0
    for ax in range(grid.dim):
        for shift in (1, -1):
            seed |= labels != np.roll(labels, shift, axis=ax)
    seed_pts = [grid.points()[seed.ravel()]]

    for fp in recurrent.fixed_points:
        if fp.kind == "source":
            seed_pts.append(fp.position[None, :])
        elif fp.kind == "saddle":
            seed_pts.extend(_stable_manifold_traces(spec, fp, attractors, dt, backend))
    for orbit in recurrent.orbits:
        if orbit.floquet_log > 0:
            seed_pts.append(_dense_orbit(orbit, tube_radius))

    pts = np.concatenate([p for p in seed_pts if len(p)] or [np.empty((0, grid.dim))])
    mask = np.zeros(grid.size, dtype=bool)
    if len(pts):
        tree = cKDTree(np.mod(pts, period), boxsize=period)
        d, _ = tree.query(np.mod(grid.points(), period), distance_upper_bound=tube_radius + 1e-12)
        mask = np.isfinite(d)
    return ScalarSamples(grid, mask.reshape(grid.shape))


def _dense_orbit(orbit, spacing):
    n = max(16, int(math.ceil(4 * orbit.length / max(spacing, 1e-6))))
    return orbit.point_at(np.linspace(0.0, orbit.length, n, endpoint=False))


def _stable_manifold_traces(spec, saddle, attractors, dt, backend):
    dt = 10 * default_dt(spec) if dt is None else dt
    eigs, vecs = np.linalg.eig(saddle.jacobian)
    traces = []
    rates = [p.contraction_rate if kind == "point" else abs(p.floquet_log)
             for kind, p in attractors] or [1.0]
    for k in np.flatnonzero(eigs.real < 0):
        v = np.real(vecs[:, k])
        v /= np.linalg.norm(v)
        horizon = 20.0 / min(rates) + math.log(1e6) / abs(eigs[k].real)
        for sgn in (1.0, -1.0):
            _, path = flow(spec, saddle.position + sgn * 1e-6 * v, horizon, dt=dt,
                           direction="backward", backend=backend)
            traces.append(path)
    return traces
