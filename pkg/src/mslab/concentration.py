"""Normalized (weighted) eigenfunction measures and their concentration.

Masses near isolated points are read off by ball quadrature; densities along
periodic orbits by integrating over short transversal segments.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .dynsys import _polyline_distance
from .errors import PreconditionError
from .expr import as_expr
from .mesh import ScalarSamples, integrate, interpolate
from .spectral import coefficient_values, extrapolate_limit

WEIGHT_KINDS = ("none", "exp_phi", "exp_L")
MASS_TOL = 1e-8


@dataclass(frozen=True)
class Measure:
    density: ScalarSamples
    weight_kind: str = "none"
    eps: float = None

    @property
    def grid(self):
        return self.density.grid

    def total(self):
        return integrate(self.density)


def weighted_measure(result, weight_kind="none", W=None):
    """``exp(-W/eps) u^2`` normalized to unit mass.

    The weight is evaluated as ``exp((min W - W)/eps)`` so it never
    underflows at its maximum.  ``W`` is phi or L (expression or samples).
    """
    if weight_kind not in WEIGHT_KINDS:
        raise PreconditionError(f"unknown weight kind {weight_kind!r}")
    grid = result.u.grid
    u2 = np.asarray(result.u.values, dtype=float) ** 2
    if weight_kind == "none":
        dens = u2
    else:
        if W is None:
            raise PreconditionError("weighted measure needs phi or L")
        Wv = coefficient_values(W if not isinstance(W, str) else as_expr(W), grid)
        dens = np.exp((Wv.min() - Wv) / result.eps) * u2
    total = float(np.sum(dens)) * grid.cell_volume
    if not total > 1e-300:
        raise PreconditionError("measure mass underflows; epsilon too small for this grid")
    return Measure(ScalarSamples(grid, dens / total), weight_kind, result.eps)


def ball_mass(m, P, delta, others=()):
    """Mass of the periodic ball ``|x - P| <= delta``."""
    grid = m.grid
    if delta < 2 * max(grid.h) - 1e-12:
        raise PreconditionError(f"delta {delta} below two grid spacings")
    for Q in others:
        d = float(grid.distance(np.asarray(P, dtype=float), np.asarray(Q, dtype=float)))
        if 0 < d < 2 * delta:
            raise PreconditionError(f"balls of radius {delta} around distinct points overlap")
    inside = grid.node_distance(P) <= delta
    return float(np.sum(m.density.values[inside]) * grid.cell_volume)


def tube_mass(m, orbit, half_width):
    """Mass within ``half_width`` of an orbit."""
    d = _polyline_distance(m.grid.points(), orbit, np.asarray(m.grid.period))
    return float(np.sum(m.density.values.ravel()[d <= half_width]) * m.grid.cell_volume)


def _segments_cross(p1, d1, p2, d2, period):
    """Do segments ``p_i + s d_i, |s| <= 1`` intersect (nearest periodic image)?"""
    off = p2 - p1
    off -= period * np.round(off / period)
    mat = np.array([[d1[0], -d2[0]], [d1[1], -d2[1]]])
    det = np.linalg.det(mat)
    if abs(det) < 1e-14:
        # parallel: intersect only when collinear and overlapping
        cross = off[0] * d1[1] - off[1] * d1[0]
        if abs(cross) > 1e-12:
            return False
        t = off @ d1 / (d1 @ d1)
        return abs(t) <= 2
    s, t = np.linalg.solve(mat, off)
    return abs(s) <= 1 and abs(t) <= 1


def station_frames(orbit, n_stations):
    """Points and unit normals at equally spaced arclength stations."""
    L = orbit.length
    l = np.arange(n_stations) * L / n_stations
    dl = 1e-4 * L
    pts = orbit.point_at(l)
    fwd = orbit.point_at(l + dl)
    bwd = orbit.point_at(l - dl)
    period = orbit._period_vec
    tang = fwd - bwd
    tang -= period * np.round(tang / period)
    tang /= np.linalg.norm(tang, axis=1, keepdims=True)
    normal = np.stack([-tang[:, 1], tang[:, 0]], axis=1)
    return l, pts, normal


def segment_integral(samples, center, direction, half_width):
    """Exact integral of the bilinear interpolant along a straight segment.

    Along a line the interpolant is quadratic between consecutive grid-line
    crossings, so Simpson's rule on each piece is exact.
    """
    grid = samples.grid
    knots = [-half_width, half_width]
    for ax in range(grid.dim):
        d = direction[ax]
        if abs(d) < 1e-15:
            continue
        a = (center[ax] - half_width * d) / grid.h[ax]
        b = (center[ax] + half_width * d) / grid.h[ax]
        lo, hi = sorted((a, b))
        k = np.arange(math.ceil(lo), math.floor(hi) + 1)
        knots.extend((k * grid.h[ax] - center[ax]) / d)
    knots = np.unique(np.clip(knots, -half_width, half_width))
    left, right = knots[:-1], knots[1:]
    mid = 0.5 * (left + right)
    s = np.concatenate([left, mid, right])
    vals = interpolate(samples, center[None, :] + s[:, None] * direction[None, :])
    n = len(left)
    fl, fm, fr = vals[:n], vals[n:2 * n], vals[2 * n:]
    return float(np.sum((right - left) / 6.0 * (fl + 4 * fm + fr)))


def cycle_density(m, orbit, n_stations=16, half_width=0.3, other_orbits=()):
    """Section integrals ``f^2(l)`` of the measure density across an orbit.

    At each station the density's bilinear interpolant is integrated exactly
    over the normal segment of half-length ``half_width``.
    Returns ``(l, f2)``.
    """
    grid = m.grid
    if grid.dim != 2:
        raise PreconditionError("cycle densities need a 2-D grid")
    if not orbit.hyperbolic:
        raise PreconditionError("orbit is not hyperbolic")
    period = np.asarray(grid.period)
    l, pts, normal = station_frames(orbit, n_stations)
    for i in range(n_stations):
        for j in range(i + 1, n_stations):
            if _segments_cross(pts[i], half_width * normal[i], pts[j], half_width * normal[j],
                               period):
                raise PreconditionError("transversal segments intersect; reduce half_width")
    s = np.linspace(-half_width, half_width, 33)
    flat = (pts[:, None, :] + s[None, :, None] * normal[:, None, :]).reshape(-1, 2)
    for other in other_orbits:
        if np.min(_polyline_distance(flat, other, period)) < half_width:
            raise PreconditionError("transversal segment enters another orbit's tube")
    f2 = np.array([segment_integral(m.density, pts[i], normal[i], half_width)
                   for i in range(n_stations)])
    return l, f2


def loop_integral(l, f2, length):
    """Periodic trapezoid rule for ``\\oint f^2 dl`` on equally spaced stations."""
    return float(np.sum(f2) * length / len(l))


@dataclass
class ConcentrationReport:
    eps: list
    ball_masses: dict
    cycle_densities: dict
    cycle_integrals: dict
    tube_masses: dict
    residual_mass: list
    stations: dict = field(default_factory=dict)

    def bookkeeping(self):
        """``sum balls + sum loop integrals + residual`` per epsilon."""
        out = []
        for k in range(len(self.eps)):
            tot = sum(v[k] for v in self.ball_masses.values())
            tot += sum(v[k] for v in self.cycle_integrals.values())
            out.append(tot + self.residual_mass[k])
        return out

    def to_dict(self):
        return {
            "epsilons": self.eps,
            "per_epsilon": [
                {"epsilon": e,
                 "ball_masses": {k: v[i] for k, v in self.ball_masses.items()},
                 "cycle_integrals": {k: v[i] for k, v in self.cycle_integrals.items()},
                 "tube_masses": {k: v[i] for k, v in self.tube_masses.items()},
                 "cycle_densities": {k: list(map(float, v[i]))
                                     for k, v in self.cycle_densities.items()},
                 "residual_mass": self.residual_mass[i]}
                for i, e in enumerate(self.eps)],
        }


def _label(pos):
    return "(" + ", ".join(f"{v:.6g}" for v in np.atleast_1d(pos)) + ")"


def concentration_report(results, weight_kind="none", W=None, points=(), orbits=(),
                         delta=0.4, n_stations=16, half_width=0.3):
    """Ball masses, cycle densities and residual mass along an epsilon sweep.

    ``residual_mass = 1 - sum ball masses - sum loop integrals``, so the
    bookkeeping identity holds by construction; tube masses (direct
    quadrature over the tube) are reported next to the loop integrals.
    """
    points = [np.atleast_1d(np.asarray(p, dtype=float)) for p in points]
    rep = ConcentrationReport([], {}, {}, {}, {}, [])
    labels = [_label(p) for p in points]
    olabels = [f"orbit{_label(o.section_point)}" for o in orbits]
    for lab in labels:
        rep.ball_masses[lab] = []
    for lab in olabels:
        rep.cycle_densities[lab] = []
        rep.cycle_integrals[lab] = []
        rep.tube_masses[lab] = []
    for res in results:
        m = weighted_measure(res, weight_kind, W)
        rep.eps.append(res.eps)
        total = 0.0
        for lab, P in zip(labels, points):
            val = ball_mass(m, P, delta, others=points)
            rep.ball_masses[lab].append(val)
            total += val
        for lab, orbit in zip(olabels, orbits):
            others = [o for o in orbits if o is not orbit]
            l, f2 = cycle_density(m, orbit, n_stations, half_width, others)
            loop = loop_integral(l, f2, orbit.length)
            rep.stations[lab] = l.tolist()
            rep.cycle_densities[lab].append(f2)
            rep.cycle_integrals[lab].append(loop)
            rep.tube_masses[lab].append(tube_mass(m, orbit, half_width))
            total += loop
        rep.residual_mass.append(1.0 - total)
    return rep


@dataclass
class SimplexVerdict:
    bookkeeping_ok: bool
    residual_decreasing: bool
    trends: dict
    passed: bool

    def to_dict(self):
        return {"bookkeeping_ok": self.bookkeeping_ok,
                "residual_decreasing": self.residual_decreasing,
                "trends": self.trends, "passed": self.passed}


def simplex_check(report):
    """Verify mass bookkeeping, monotone residual and extrapolate each mass."""
    book = report.bookkeeping()
    book_ok = all(abs(v - 1.0) <= MASS_TOL for v in book)
    res = report.residual_mass
    decreasing = all(b <= a + 1e-12 for a, b in zip(res, res[1:]))
    trends = {}
    series = dict(report.ball_masses)
    series.update(report.cycle_integrals)
    series["residual"] = res
    for lab, vals in series.items():
        entry = {"values": list(vals)}
        if len(vals) >= 2:
            entry["extrapolated"] = extrapolate_limit(report.eps, vals)
            entry["monotone"] = bool(np.all(np.diff(vals) >= -1e-12)
                                     or np.all(np.diff(vals) <= 1e-12))
        trends[lab] = entry
    return SimplexVerdict(book_ok, decreasing, trends, book_ok and decreasing)
