"""Pure numpy kernels, vectorised across points.

Reference implementation of the compiled kernels in ``_ckernels.pyx``; the
two must produce the same numbers up to floating-point reassociation.
"""
import numpy as np

from .expr import run_program

BACKEND = "python"


def _wrap(p, period):
    r = np.mod(p, period)
    return np.where(r >= period, r - period, r)


def _lam_lookup(table, period, pts):
    nx, ny = table.shape
    tx = np.mod(pts[:, 0], period[0]) * (nx / period[0])
    i0 = np.floor(tx).astype(np.int64)
    fx = tx - i0
    i0 %= nx
    i1 = (i0 + 1) % nx
    if pts.shape[1] == 1:
        return (1 - fx) * table[i0, 0] + fx * table[i1, 0]
    ty = np.mod(pts[:, 1], period[1]) * (ny / period[1])
    j0 = np.floor(ty).astype(np.int64)
    fy = ty - j0
    j0 %= ny
    j1 = (j0 + 1) % ny
    return ((1 - fx) * (1 - fy) * table[i0, j0] + fx * (1 - fy) * table[i1, j0]
            + (1 - fx) * fy * table[i0, j1] + fx * fy * table[i1, j1])


def _evaluator(codes, vals, offsets, period, lam_table):
    progs = [(codes[offsets[k]:offsets[k + 1]], vals[offsets[k]:offsets[k + 1]])
             for k in range(len(offsets) - 1)]

    def evaluate(k, pts, lam):
        c, v = progs[k]
        y = pts[:, 1] if pts.shape[1] > 1 else None
        return np.broadcast_to(run_program(c, v, pts[:, 0], y, lam), (pts.shape[0],))

    def lam_at(pts):
        return None if lam_table is None else _lam_lookup(lam_table, period, pts)

    return evaluate, lam_at


def _rk4_step(vel, p, dt):
    k1 = vel(p)
    k2 = vel(p + 0.5 * dt * k1)
    k3 = vel(p + 0.5 * dt * k2)
    k4 = vel(p + dt * k3)
    return p + dt / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4)


def rk4_flow(points, codes, vals, offsets, period, dt, n_steps, sign,
             lam_table=None, record_stride=0):
    """Advance points along ``sign * b`` for ``n_steps`` classical RK4 steps.

    Returns the final wrapped points and, when ``record_stride > 0``, the
    wrapped positions every ``record_stride`` steps (including step 0).
    """
    period = np.asarray(period, dtype=float)
    p = _wrap(np.array(points, dtype=float), period)
    dim = p.shape[1]
    evaluate, lam_at = _evaluator(codes, vals, offsets, period, lam_table)

    def vel(q):
        lam = lam_at(q)
        return sign * np.stack([evaluate(k, q, lam) for k in range(dim)], axis=1)

    records = None
    if record_stride > 0:
        records = np.empty((p.shape[0], n_steps // record_stride + 1, dim))
        records[:, 0] = p
    for step in range(1, n_steps + 1):
        p = _wrap(_rk4_step(vel, p, dt), period)
        if record_stride > 0 and step % record_stride == 0:
            records[:, step // record_stride] = p
    return p, records


def _phi12(z):
    """(1 - e^-z)/z and (1 - (1+z)e^-z)/z^2 with series near zero."""
    small = np.abs(z) < 1e-2
    zs = np.where(small, 0.0, z)
    with np.errstate(divide="ignore", invalid="ignore"):
        em = np.exp(-zs)
        p1 = np.where(small, 0.0, (1 - em) / np.where(small, 1.0, zs))
        p2 = np.where(small, 0.0, (1 - (1 + zs) * em) / np.where(small, 1.0, zs * zs))
    s1 = 1 - z / 2 + z ** 2 / 6 - z ** 3 / 24 + z ** 4 / 120
    s2 = 0.5 - z / 3 + z ** 2 / 8 - z ** 3 / 30 + z ** 4 / 144
    return np.where(small, s1, p1), np.where(small, s2, p2)


def characteristic_integrals(points, codes, vals, offsets, period, dt, n_steps,
                             lam_table=None, record_stride=0):
    """Discounted integrals of f along the backward flow of b.

    Programs are ordered ``b_0 .. b_{dim-1}, c, f``.  Returns ``(u, C, records)``
    where ``C`` is the accumulated discount exponent and ``records`` holds the
    partial integrals every ``record_stride`` steps (including step 0).
    """
    period = np.asarray(period, dtype=float)
    p = _wrap(np.array(points, dtype=float), period)
    m, dim = p.shape
    evaluate, lam_at = _evaluator(codes, vals, offsets, period, lam_table)

    def vel(q):
        lam = lam_at(q)
        return -np.stack([evaluate(k, q, lam) for k in range(dim)], axis=1)

    def cf(q):
        lam = lam_at(q)
        return evaluate(dim, q, lam), evaluate(dim + 1, q, lam)

    u = np.zeros(m)
    C = np.zeros(m)
    c0, f0 = cf(p)
    records = None
    if record_stride > 0:
        records = np.empty((m, n_steps // record_stride + 1))
        records[:, 0] = 0.0
    for step in range(1, n_steps + 1):
        p = _wrap(_rk4_step(vel, p, dt), period)
        c1, f1 = cf(p)
        dC = 0.5 * dt * (c0 + c1)
        p1, p2 = _phi12(dC)
        u += np.exp(-C) * dt * (f0 * p1 + (f1 - f0) * p2)
        C += dC
        c0, f0 = c1, f1
        if record_stride > 0 and step % record_stride == 0:
            records[:, step // record_stride] = u
    return u, C, records
