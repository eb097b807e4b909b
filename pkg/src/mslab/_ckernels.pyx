# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled kernels: RK4 transport of points and discounted characteristic
integrals.  Mirrors ``_pykernels`` point by point; expressions arrive as the
postfix programs produced by ``mslab.expr``.
"""
import numpy as np
cimport numpy as cnp
from libc.math cimport sin, cos, exp, pow, floor, fabs

cnp.import_array()

BACKEND = "cython"

# opcodes, see mslab/expr.py
cdef enum:
    STACK = 64
    OP_CONST = 0
    OP_X = 1
    OP_Y = 2
    OP_LAM = 3
    OP_ADD = 10
    OP_SUB = 11
    OP_MUL = 12
    OP_DIV = 13
    OP_POW = 14
    OP_NEG = 20
    OP_SIN = 21
    OP_COS = 22
    OP_EXP = 23


cdef inline double run(const int* codes, const double* vals, int start, int stop,
                       double x, double y, double lam) noexcept nogil:
    cdef double stack[STACK]
    cdef int top = -1
    cdef int k, op
    cdef double a, b
    for k in range(start, stop):
        op = codes[k]
        if op == OP_CONST:
            top += 1
            stack[top] = vals[k]
        elif op == OP_X:
            top += 1
            stack[top] = x
        elif op == OP_Y:
            top += 1
            stack[top] = y
        elif op == OP_LAM:
            top += 1
            stack[top] = lam
        elif op == OP_NEG:
            stack[top] = -stack[top]
        elif op == OP_SIN:
            stack[top] = sin(stack[top])
        elif op == OP_COS:
            stack[top] = cos(stack[top])
        elif op == OP_EXP:
            stack[top] = exp(stack[top])
        else:
            b = stack[top]
            top -= 1
            a = stack[top]
            if op == OP_ADD:
                stack[top] = a + b
            elif op == OP_SUB:
                stack[top] = a - b
            elif op == OP_MUL:
                stack[top] = a * b
            elif op == OP_DIV:
                stack[top] = a / b
            else:
                stack[top] = pow(a, b)
    return stack[0]


cdef inline double wrap(double v, double p) noexcept nogil:
    cdef double r
    if v >= 0 and v < p:
        return v
    r = v - p * floor(v / p)
    if r < 0:
        r += p
    if r >= p:
        r -= p
    return r


cdef inline double lam_lookup(const double* table, int nx, int ny, double px, double py,
                              double periodx, double periody, int dim) noexcept nogil:
    cdef double tx = wrap(px, periodx) * (nx / periodx)
    cdef double ty
    cdef long i0 = <long>floor(tx)
    cdef long j0, i1, j1
    cdef double fx = tx - i0
    cdef double fy
    i0 = i0 % nx
    i1 = (i0 + 1) % nx
    if dim == 1:
        return (1 - fx) * table[i0] + fx * table[i1]
    ty = wrap(py, periody) * (ny / periody)
    j0 = <long>floor(ty)
    fy = ty - j0
    j0 = j0 % ny
    j1 = (j0 + 1) % ny
    return ((1 - fx) * (1 - fy) * table[i0 * ny + j0] + fx * (1 - fy) * table[i1 * ny + j0]
            + (1 - fx) * fy * table[i0 * ny + j1] + fx * fy * table[i1 * ny + j1])


cdef struct Ctx:
    int dim
    int has_lam
    double sign
    double px
    double py
    const int* codes
    const double* vals
    const int* offsets
    const double* table
    int nx
    int ny


cdef inline double lam_at(Ctx* ctx, double x, double y) noexcept nogil:
    if ctx.has_lam:
        return lam_lookup(ctx.table, ctx.nx, ctx.ny, x, y, ctx.px, ctx.py, ctx.dim)
    return 0.0


cdef inline double prog(Ctx* ctx, int k, double x, double y, double lam) noexcept nogil:
    return run(ctx.codes, ctx.vals, ctx.offsets[k], ctx.offsets[k + 1], x, y, lam)


cdef inline void velocity(Ctx* ctx, double x, double y, double* vx, double* vy) noexcept nogil:
    cdef double lam = lam_at(ctx, x, y)
    vx[0] = ctx.sign * prog(ctx, 0, x, y, lam)
    if ctx.dim == 2:
        vy[0] = ctx.sign * prog(ctx, 1, x, y, lam)
    else:
        vy[0] = 0.0


cdef inline void rk4_step(Ctx* ctx, double dt, double* x, double* y) noexcept nogil:
    cdef double k1x, k1y, k2x, k2y, k3x, k3y, k4x, k4y
    velocity(ctx, x[0], y[0], &k1x, &k1y)
    velocity(ctx, x[0] + 0.5 * dt * k1x, y[0] + 0.5 * dt * k1y, &k2x, &k2y)
    velocity(ctx, x[0] + 0.5 * dt * k2x, y[0] + 0.5 * dt * k2y, &k3x, &k3y)
    velocity(ctx, x[0] + dt * k3x, y[0] + dt * k3y, &k4x, &k4y)
    x[0] = wrap(x[0] + dt / 6.0 * (k1x + 2 * k2x + 2 * k3x + k4x), ctx.px)
    if ctx.dim == 2:
        y[0] = wrap(y[0] + dt / 6.0 * (k1y + 2 * k2y + 2 * k3y + k4y), ctx.py)


cdef inline void phi12(double z, double* p1, double* p2) noexcept nogil:
    cdef double em
    if fabs(z) < 1e-2:
        p1[0] = 1 - z / 2 + z * z / 6 - z * z * z / 24 + z * z * z * z / 120
        p2[0] = 0.5 - z / 3 + z * z / 8 - z * z * z / 30 + z * z * z * z / 144
    else:
        em = exp(-z)
        p1[0] = (1 - em) / z
        p2[0] = (1 - (1 + z) * em) / (z * z)


def _setup(points, codes, vals, offsets, period, lam_table, sign):
    pts = np.array(points, dtype=np.float64, order="C", copy=True)
    if pts.ndim != 2 or pts.shape[1] not in (1, 2):
        raise ValueError("points must have shape (m, 1) or (m, 2)")
    per = np.asarray(period, dtype=np.float64)
    table = np.zeros((1, 1)) if lam_table is None else np.ascontiguousarray(lam_table, dtype=np.float64)
    return (pts, np.ascontiguousarray(codes, dtype=np.int32),
            np.ascontiguousarray(vals, dtype=np.float64),
            np.ascontiguousarray(offsets, dtype=np.int32), per, table)


def rk4_flow(points, codes, vals, offsets, period, double dt, int n_steps, double sign,
             lam_table=None, int record_stride=0):
    pts, c_arr, v_arr, o_arr, per, table = _setup(points, codes, vals, offsets, period,
                                                  lam_table, sign)
    cdef int m = pts.shape[0]
    cdef int dim = pts.shape[1]
    cdef Ctx ctx
    ctx.dim = dim
    ctx.has_lam = lam_table is not None
    ctx.sign = sign
    ctx.px = per[0]
    ctx.py = per[1] if dim == 2 else 1.0
    cdef double[:, :] P = pts
    cdef const int[::1] cc = c_arr
    cdef const double[::1] vv = v_arr
    cdef const int[::1] oo = o_arr
    cdef const double[:, ::1] tt = table
    ctx.codes = &cc[0]
    ctx.vals = &vv[0]
    ctx.offsets = &oo[0]
    ctx.table = &tt[0, 0]
    ctx.nx = tt.shape[0]
    ctx.ny = tt.shape[1]
    cdef int nrec = n_steps // record_stride + 1 if record_stride > 0 else 1
    rec = np.empty((m, nrec, dim)) if record_stride > 0 else np.empty((1, 1, dim))
    cdef double[:, :, :] R = rec
    cdef int i, step
    cdef double x, y
    with nogil:
        for i in range(m):
            x = wrap(P[i, 0], ctx.px)
            y = wrap(P[i, 1], ctx.py) if dim == 2 else 0.0
            if record_stride > 0:
                R[i, 0, 0] = x
                if dim == 2:
                    R[i, 0, 1] = y
            for step in range(1, n_steps + 1):
                rk4_step(&ctx, dt, &x, &y)
                if record_stride > 0 and step % record_stride == 0:
                    R[i, step // record_stride, 0] = x
                    if dim == 2:
                        R[i, step // record_stride, 1] = y
            P[i, 0] = x
            if dim == 2:
                P[i, 1] = y
    return pts, (rec if record_stride > 0 else None)


def characteristic_integrals(points, codes, vals, offsets, period, double dt, int n_steps,
                             lam_table=None, int record_stride=0):
    pts, c_arr, v_arr, o_arr, per, table = _setup(points, codes, vals, offsets, period,
                                                  lam_table, -1.0)
    cdef int m = pts.shape[0]
    cdef int dim = pts.shape[1]
    cdef Ctx ctx
    ctx.dim = dim
    ctx.has_lam = lam_table is not None
    ctx.sign = -1.0
    ctx.px = per[0]
    ctx.py = per[1] if dim == 2 else 1.0
    cdef double[:, :] P = pts
    cdef const int[::1] cc = c_arr
    cdef const double[::1] vv = v_arr
    cdef const int[::1] oo = o_arr
    cdef const double[:, ::1] tt = table
    ctx.codes = &cc[0]
    ctx.vals = &vv[0]
    ctx.offsets = &oo[0]
    ctx.table = &tt[0, 0]
    ctx.nx = tt.shape[0]
    ctx.ny = tt.shape[1]
    u_arr = np.zeros(m)
    C_arr = np.zeros(m)
    cdef double[:] U = u_arr
    cdef double[:] CC = C_arr
    cdef int nrec = n_steps // record_stride + 1 if record_stride > 0 else 1
    rec = np.zeros((m, nrec)) if record_stride > 0 else np.zeros((1, 1))
    cdef double[:, :] R = rec
    cdef int i, step
    cdef double x, y, lam, c0, f0, c1, f1, dC, p1, p2, acc, C
    with nogil:
        for i in range(m):
            x = wrap(P[i, 0], ctx.px)
            y = wrap(P[i, 1], ctx.py) if dim == 2 else 0.0
            lam = lam_at(&ctx, x, y)
            c0 = prog(&ctx, dim, x, y, lam)
            f0 = prog(&ctx, dim + 1, x, y, lam)
            acc = 0.0
            C = 0.0
            for step in range(1, n_steps + 1):
                rk4_step(&ctx, dt, &x, &y)
                lam = lam_at(&ctx, x, y)
                c1 = prog(&ctx, dim, x, y, lam)
                f1 = prog(&ctx, dim + 1, x, y, lam)
                dC = 0.5 * dt * (c0 + c1)
                phi12(dC, &p1, &p2)
                acc = acc + exp(-C) * dt * (f0 * p1 + (f1 - f0) * p2)
                C = C + dC
                c0 = c1
                f0 = f1
                if record_stride > 0 and step % record_stride == 0:
                    R[i, step // record_stride] = acc
            U[i] = acc
            CC[i] = C
    return u_arr, C_arr, (rec if record_stride > 0 else None)
