"""Compare the compiled and numpy kernel backends.

    python3 benchmarks/bench_kernels.py [--points 4096] [--steps 2000] [--repeat 3]

Prints the best wall time per backend for the RK4 flow and for the
characteristic integrals on the torus_morse field, plus the max difference.
The single-trajectory case (one point, many steps) is where the numpy
backend cannot vectorize and the compiled loop matters most.
"""
import argparse
import time

import numpy as np

from mslab import fields, kernels
from mslab.expr import Expr


def _best(fn, repeat):
    out, best = None, np.inf
    for _ in range(repeat):
        t0 = time.perf_counter()
        out = fn()
        best = min(best, time.perf_counter() - t0)
    return best, out


def main(argv=None):
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--points", type=int, default=4096)
    p.add_argument("--steps", type=int, default=2000)
    p.add_argument("--repeat", type=int, default=3)
    args = p.parse_args(argv)

    b = fields.torus_morse()
    c, f = Expr("1.5 + 0.25*cos(x)"), Expr("1 + sin(y)")
    pts = np.random.default_rng(0).uniform(0, 2 * np.pi, (args.points, 2))
    dt = 1e-3

    jobs = {
        "rk4_flow": lambda be: kernels.rk4_flow(pts, b.components, b.period, dt, args.steps,
                                                backend=be)[0],
        "characteristic_integrals": lambda be: kernels.characteristic_integrals(
            pts, b.components, c, f, b.period, dt, args.steps, backend=be)[0],
        "single trajectory": lambda be: kernels.characteristic_integrals(
            pts[:1], b.components, c, f, b.period, dt, 20 * args.steps, record_stride=1,
            backend=be)[2],
    }
    print(f"backends available: {sorted(kernels.BACKENDS)} (default {kernels.BACKEND})")
    print(f"{args.points} points x {args.steps} steps, best of {args.repeat}")
    for name, job in jobs.items():
        times, outs = {}, {}
        for be in sorted(kernels.BACKENDS):
            times[be], outs[be] = _best(lambda: job(be), args.repeat)
        line = ", ".join(f"{be} {t:.3f} s" for be, t in times.items())
        if len(times) == 2:
            diff = float(np.max(np.abs(outs["cython"] - outs["python"])))
            line += f", speedup {times['python'] / times['cython']:.1f}x, max diff {diff:.1e}"
        print(f"{name:26s} {line}")


if __name__ == "__main__":
    main()
