"""Uniform periodic grids on the circle and the flat torus.

All discrete fields live on a :class:`PeriodicGrid`.  Node ``i`` along an
axis sits at ``i * h`` with ``h = period / n``; arrays are indexed ``[ix]``
in 1-D and ``[ix, iy]`` in 2-D.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import PreconditionError

MIN_POINTS = 16


@dataclass(frozen=True)
class PeriodicGrid:
    dim: int
    n: tuple
    period: tuple
    h: tuple = field(init=False)

    def __post_init__(self):
        if self.dim not in (1, 2):
            raise PreconditionError(f"dim must be 1 or 2, got {self.dim}")
        if len(self.n) != self.dim or len(self.period) != self.dim:
            raise PreconditionError("n and period need one entry per axis")
        for n_ax, p_ax in zip(self.n, self.period):
            if int(n_ax) < MIN_POINTS:
                raise PreconditionError(
                    f"need at least {MIN_POINTS} points per axis, got {n_ax}")
            if not p_ax > 0:
                raise PreconditionError(f"period must be positive, got {p_ax}")
        object.__setattr__(self, "n", tuple(int(v) for v in self.n))
        object.__setattr__(self, "period", tuple(float(v) for v in self.period))
        object.__setattr__(self, "h", tuple(p / k for p, k in zip(self.period, self.n)))

    @property
    def shape(self):
        return self.n

    @property
    def size(self):
        return int(np.prod(self.n))

    @property
    def cell_volume(self):
        return float(np.prod(self.h))

    @property
    def volume(self):
        return float(np.prod(self.period))

    def axes(self):
        """1-D coordinate arrays, one per axis."""
        return [np.arange(k) * hk for k, hk in zip(self.n, self.h)]

    def coords(self):
        """Coordinate arrays broadcast to the grid shape (``ij`` indexing)."""
        return np.meshgrid(*self.axes(), indexing="ij")

    def points(self):
        """Node coordinates as an ``(size, dim)`` array in C order."""
        return np.stack([c.ravel() for c in self.coords()], axis=1)

    def wrap(self, pts):
        return np.mod(pts, np.asarray(self.period))

    def displacement(self, a, b):
        """Shortest periodic displacement ``b - a`` (broadcasting)."""
        period = np.asarray(self.period)
        d = np.asarray(b, dtype=float) - np.asarray(a, dtype=float)
        return d - period * np.round(d / period)

    def distance(self, a, b):
        return np.linalg.norm(self.displacement(a, b), axis=-1)

    def node_distance(self, p):
        """Periodic distance from every node to the point ``p``, grid-shaped."""
        d = self.distance(self.points(), np.asarray(p, dtype=float))
        return d.reshape(self.shape)


@dataclass(frozen=True)
class ScalarSamples:
    grid: PeriodicGrid
    values: np.ndarray

    def __post_init__(self):
        vals = np.asarray(self.values)
        vals = np.array(vals, dtype=bool if vals.dtype == bool else float)
        if vals.size != self.grid.size:
            raise PreconditionError(
                f"expected {self.grid.size} values, got {vals.size}")
        vals = vals.reshape(self.grid.shape)
        if not np.all(np.isfinite(vals)):
            raise PreconditionError("non-finite sample values")
        vals.setflags(write=False)
        object.__setattr__(self, "values", vals)


@dataclass(frozen=True)
class VectorSamples:
    grid: PeriodicGrid
    components: np.ndarray

    def __post_init__(self):
        comps = np.asarray(self.components, dtype=float)
        if comps.shape != (self.grid.dim,) + self.grid.shape:
            raise PreconditionError(
                f"expected component array of shape {(self.grid.dim,) + self.grid.shape}")
        comps.setflags(write=False)
        object.__setattr__(self, "components", comps)

    def norm(self):
        return np.sqrt(np.sum(self.components ** 2, axis=0))


def build_grid(dim, n, period=2 * np.pi):
    """Build a periodic grid; scalar ``n``/``period`` apply to every axis."""
    if dim not in (1, 2):
        raise PreconditionError(f"dim must be 1 or 2, got {dim}")
    n_ax = tuple(np.broadcast_to(np.asarray(n), (dim,)).tolist())
    p_ax = tuple(np.broadcast_to(np.asarray(period, dtype=float), (dim,)).tolist())
    return PeriodicGrid(dim, n_ax, p_ax)


def sample(grid, func):
    """Evaluate ``func(*coords)`` on the grid and wrap the result."""
    vals = np.broadcast_to(np.asarray(func(*grid.coords()), dtype=float), grid.shape)
    return ScalarSamples(grid, np.array(vals))


def integrate(s):
    """Periodic rectangle rule; spectrally accurate for smooth periodic data."""
    return float(np.sum(s.values) * s.grid.cell_volume)


def _d1_4th(values, axis, h):
    f = values
    return (-np.roll(f, -2, axis) + 8 * np.roll(f, -1, axis)
            - 8 * np.roll(f, 1, axis) + np.roll(f, 2, axis)) / (12 * h)


def gradient_fd(s):
    """Fourth-order central-difference gradient with periodic wrap."""
    comps = [_d1_4th(s.values, ax, s.grid.h[ax]) for ax in range(s.grid.dim)]
    return VectorSamples(s.grid, np.stack(comps))


def laplacian_fd(s):
    """Positive Laplacian ``-sum d2/dx_k^2`` by second-order differences."""
    out = np.zeros_like(s.values)
    for ax in range(s.grid.dim):
        f = s.values
        out -= (np.roll(f, -1, ax) - 2 * f + np.roll(f, 1, ax)) / s.grid.h[ax] ** 2
    return ScalarSamples(s.grid, out)


def interpolate(s, pts):
    """Periodic (bi)linear interpolation of grid samples at arbitrary points.

    ``pts`` has shape ``(m, dim)``; returns ``m`` values.
    """
    grid = s.grid
    pts = np.atleast_2d(np.asarray(pts, dtype=float))
    idx = []
    frac = []
    for ax in range(grid.dim):
        t = np.mod(pts[:, ax], grid.period[ax]) / grid.h[ax]
        i0 = np.floor(t).astype(np.int64)
        idx.append(i0 % grid.n[ax])
        frac.append(t - i0)
    v = s.values
    if grid.dim == 1:
        i0 = idx[0]
        i1 = (i0 + 1) % grid.n[0]
        return (1 - frac[0]) * v[i0] + frac[0] * v[i1]
    i0, j0 = idx
    i1 = (i0 + 1) % grid.n[0]
    j1 = (j0 + 1) % grid.n[1]
    fx, fy = frac
    return ((1 - fx) * (1 - fy) * v[i0, j0] + fx * (1 - fy) * v[i1, j0]
            + (1 - fx) * fy * v[i0, j1] + fx * fy * v[i1, j1])
