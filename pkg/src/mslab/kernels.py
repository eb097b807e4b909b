"""Hot-loop kernels with backend selection at import.

The compiled extension ``_ckernels`` is used when it was built; otherwise
(or when ``MSLAB_PURE_PYTHON=1`` is set) the numpy implementation in
``_pykernels`` takes over.  Both expose ``rk4_flow`` and
``characteristic_integrals`` with identical signatures.
"""
import os

import numpy as np

from . import _pykernels
from .errors import PreconditionError
from .expr import max_stack_depth

try:
    if os.environ.get("MSLAB_PURE_PYTHON", "") not in ("", "0"):
        raise ImportError("pure-python backend forced")
    from . import _ckernels as _active
except ImportError:
    _active = _pykernels

BACKEND = _active.BACKEND
BACKENDS = {"python": _pykernels}
if _active is not _pykernels:
    BACKENDS["cython"] = _active

MAX_STACK = 64


def pack(exprs):
    """Concatenate postfix programs into ``(codes, vals, offsets)``."""
    codes, vals, offsets = [], [], [0]
    for e in exprs:
        if max_stack_depth(e.codes) > MAX_STACK:
            raise PreconditionError(f"expression too deeply nested: {e}")
        codes.append(e.codes)
        vals.append(e.vals)
        offsets.append(offsets[-1] + len(e.codes))
    return (np.concatenate(codes).astype(np.int32), np.concatenate(vals),
            np.asarray(offsets, dtype=np.int32))


def _backend(name):
    if name is None:
        return _active
    try:
        return BACKENDS[name]
    except KeyError:
        raise PreconditionError(f"backend {name!r} not available; have {sorted(BACKENDS)}") from None


def rk4_flow(points, exprs, period, dt, n_steps, sign=1.0, lam_table=None,
             record_stride=0, backend=None):
    codes, vals, offsets = pack(exprs)
    return _backend(backend).rk4_flow(points, codes, vals, offsets, period, float(dt),
                                      int(n_steps), float(sign), lam_table, int(record_stride))


def characteristic_integrals(points, b_exprs, c_expr, f_expr, period, dt, n_steps,
                             lam_table=None, record_stride=0, backend=None):
    codes, vals, offsets = pack(list(b_exprs) + [c_expr, f_expr])
    return _backend(backend).characteristic_integrals(
        points, codes, vals, offsets, period, float(dt), int(n_steps), lam_table,
        int(record_stride))
