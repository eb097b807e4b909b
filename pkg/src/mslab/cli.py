"""Command-line experiment runner.

    mslab <subcommand> [--fixture NAME] [--config PATH] [--set section.key=value ...]
                       [--out DIR]

Exit codes: 0 success, 2 precondition or configuration failure, 3 solver
non-convergence.  JSON and CSV outputs are deterministic; wall-times go to
a separate ``timings.log``.
"""
from __future__ import annotations

import argparse
import csv
import json
import logging
import math
import os
import sys
import time

import numpy as np

from . import concentration, config, dynsys, fixtures, lyapunov, spectral, transport
from .errors import ConvergenceError, MsLabError, PreconditionError, SweepError
from .mesh import interpolate

SUBCOMMANDS = ("eigen", "concentrate", "transport", "nonlinear", "verify", "pressure")
EXIT_OK, EXIT_PRECONDITION, EXIT_CONVERGENCE = 0, 2, 3

log = logging.getLogger("mslab")


# -- output helpers ---------------------------------------------------------

def _clean(obj):
    """JSON-safe copy: numpy scalars to Python, non-finite floats to None."""
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _clean(obj.tolist())
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        v = float(obj)
        return v if math.isfinite(v) else None
    return obj


def _fmt(v):
    if isinstance(v, (float, np.floating)):
        return "%.17g" % float(v)
    return str(v)


class Run:
    """Collects outputs of one subcommand and writes them at the end."""

    def __init__(self, name, cfg, out_dir):
        self.name = name
        self.cfg = cfg
        self.out_dir = out_dir
        self.report = {"subcommand": name, "config": cfg.raw}
        self.tables = {}
        self.fields = {}
        self.timings = []
        self._t0 = time.perf_counter()

    def phase(self, label):
        now = time.perf_counter()
        self.timings.append((label, now - self._t0))
        self._t0 = now

    def table(self, name, header, rows):
        self.tables[name] = (header, rows)

    def grid_field(self, name, samples):
        self.fields[name] = samples

    def write(self):
        os.makedirs(self.out_dir, exist_ok=True)
        formats = {f.strip() for f in
                   self.cfg.raw.get("output", {}).get("formats", "csv,json").split(",")}
        if "json" in formats:
            with open(os.path.join(self.out_dir, f"{self.name}.json"), "w",
                      encoding="utf-8", newline="\n") as fh:
                json.dump(_clean(self.report), fh, indent=2, sort_keys=True)
                fh.write("\n")
        if "csv" in formats:
            for name, (header, rows) in self.tables.items():
                self._csv(f"{name}.csv", header, rows)
            for name, s in self.fields.items():
                pts = s.grid.points()
                header = ["x", "y"][:s.grid.dim] + ["value"]
                vals = np.asarray(s.values, dtype=float).ravel()
                self._csv(f"{name}.csv", header,
                          [list(p) + [v] for p, v in zip(pts, vals)])
        with open(os.path.join(self.out_dir, "timings.log"), "a", encoding="utf-8") as fh:
            for label, dt in self.timings:
                fh.write(f"{self.name}\t{label}\t{dt:.6f}\n")

    def _csv(self, filename, header, rows):
        with open(os.path.join(self.out_dir, filename), "w", encoding="utf-8",
                  newline="") as fh:
            w = csv.writer(fh)
            w.writerow(header)
            for row in rows:
                w.writerow([_fmt(v) for v in row])


# -- helpers ----------------------------------------------------------------

def _problem(cfg):
    return spectral.EigenProblem(cfg.grid, cfg.field, cfg.c, cfg.scheme)


def _sweep(cfg):
    if not cfg.epsilons:
        raise PreconditionError("sweep.epsilons: required for this subcommand")
    return spectral.epsilon_sweep(_problem(cfg), cfg.epsilons)


def _coef_minima(cfg):
    vals = spectral.coefficient_values(cfg.c, cfg.grid)
    is_min = np.ones(cfg.grid.shape, dtype=bool)
    for ax in range(cfg.grid.dim):
        for shift in (1, -1):
            is_min &= vals < np.roll(vals, shift, axis=ax)
    pts = cfg.grid.points()
    return [pts[i] for i in np.flatnonzero(is_min.ravel())]


def _recurrent(cfg):
    if cfg.field is None or cfg.field.takes_lambda:
        return dynsys.RecurrentSet([], [])
    return dynsys.classify(cfg.field, cfg.grid)


def _weight(cfg):
    kind = cfg.text("weight", "none").strip()
    if kind == "none":
        return kind, None
    if kind == "exp_phi":
        W = cfg.phi if cfg.phi is not None else getattr(cfg.field, "lyapunov", None)
    elif kind == "exp_L":
        W = getattr(cfg.field, "lyapunov", None)
    else:
        raise PreconditionError(f"analysis.weight: unknown weight {kind!r}")
    if W is None:
        raise PreconditionError(f"analysis.weight: {kind} needs a potential")
    return kind, W


def _eigen_rows(results):
    return [[r.eps, r.lam, r.residual, r.iterations] for r in results]


# -- subcommands ------------------------------------------------------------

def cmd_eigen(run):
    results = _sweep(run.cfg)
    run.phase("sweep")
    run.report["results"] = [r.to_dict() for r in results]
    run.table("eigen", ["epsilon", "lambda", "residual", "iterations"], _eigen_rows(results))
    return EXIT_OK


def cmd_concentrate(run):
    cfg = run.cfg
    results = _sweep(cfg)
    run.phase("sweep")
    kind, W = _weight(cfg)
    rec = _recurrent(cfg)
    run.phase("recurrent set")
    if cfg.text("points", "auto").strip() == "auto":
        points = [p.position for p in rec.fixed_points] if cfg.field is not None \
            else _coef_minima(cfg)
    else:
        vals = cfg.numbers("points")
        points = [np.array(vals[i:i + cfg.grid.dim]) for i in range(0, len(vals), cfg.grid.dim)]
    rep = concentration.concentration_report(
        results, kind, W, points, rec.orbits, delta=cfg.number("delta", 0.4),
        n_stations=cfg.number("n_stations", 16, int),
        half_width=cfg.number("tube_half_width", 0.3))
    verdict = concentration.simplex_check(rep)
    run.phase("report")
    run.report["eigen"] = [r.to_dict() for r in results]
    run.report["concentration"] = rep.to_dict()
    run.report["simplex"] = verdict.to_dict()
    rows = []
    for k, e in enumerate(rep.eps):
        for lab, v in rep.ball_masses.items():
            rows.append([e, "ball", lab, v[k]])
        for lab, v in rep.cycle_integrals.items():
            rows.append([e, "loop", lab, v[k]])
        for lab, v in rep.tube_masses.items():
            rows.append([e, "tube", lab, v[k]])
        rows.append([e, "residual", "", rep.residual_mass[k]])
    run.table("concentration", ["epsilon", "kind", "label", "value"], rows)
    return EXIT_OK


def cmd_transport(run):
    cfg = run.cfg
    if cfg.field is None or cfg.f is None:
        raise PreconditionError("transport needs field.family and coefficients.f")
    sol = transport.solve_linear(cfg.field, cfg.c, cfg.f, cfg.grid,
                                 tube_radius=cfg.number("tube_radius", 0.2))
    run.phase("characteristics")
    rec = _recurrent(cfg)
    fp_rows = []
    for p in rec.fixed_points:
        P = p.position[None, :]
        uP = float(interpolate(sol.u, P)[0])
        target = float(np.ravel(cfg.f.at(P))[0] / np.ravel(cfg.c.at(P))[0])
        fp_rows.append(list(p.position) + [p.kind, uP, target, abs(uP - target)])
    off = ~np.asarray(sol.mask.values, dtype=bool)
    visc_rows = []
    for eps in cfg.epsilons:
        v = transport.viscous_solve(eps, cfg.field, cfg.c, cfg.f, cfg.grid)
        visc_rows.append([eps, float(np.max(np.abs(v.values - sol.u.values)[off]))])
    run.phase("viscous")
    report = {"solution": sol.to_dict(), "fixed_points": fp_rows, "viscous": visc_rows,
              "max_principle": _max_principle(cfg, sol)}
    osc_cycle = cfg.numbers("osc_cycle_point")
    if osc_cycle is not None:
        times = cfg.numbers("osc_times", [10, 20, 30, 40])
        report["oscillation"] = {}
        for label in ("osc_cycle_point", "osc_basin_point"):
            pt = cfg.numbers(label)
            if pt is None:
                continue
            o = transport.oscillation_indicator(cfg.field, cfg.c, cfg.f, pt, times)
            report["oscillation"][label] = {"point": pt, "T": o.T, "partial": o.partial,
                                            "osc": o.osc}
        run.phase("oscillation")
    run.report.update(report)
    names = ["x", "y"][:cfg.grid.dim]
    run.table("fixed_points", names + ["kind", "u", "f_over_c", "error"], fp_rows)
    run.table("viscous", ["epsilon", "sup_off_mask"], visc_rows)
    run.grid_field("transport_u", sol.u)
    run.grid_field("transport_residual", sol.residual)
    return EXIT_OK


def _max_principle(cfg, sol):
    ratio = spectral.coefficient_values(cfg.f, cfg.grid) / spectral.coefficient_values(cfg.c, cfg.grid)
    u = sol.u.values
    return {"min_f_over_c": float(ratio.min()), "max_f_over_c": float(ratio.max()),
            "u_min": float(u.min()), "u_max": float(u.max()),
            "holds": bool(u.min() >= ratio.min() - 1e-8 and u.max() <= ratio.max() + 1e-8)}


def cmd_nonlinear(run):
    cfg = run.cfg
    if cfg.field is None or cfg.f is None:
        raise PreconditionError("nonlinear needs field.family and coefficients.f")
    lam_range = cfg.numbers("lam_range")
    if lam_range is None or len(lam_range) != 2:
        raise PreconditionError("analysis.lam_range: need two numbers")
    k = transport.hyperbolicity_constants(cfg.field, cfg.c, cfg.f, cfg.grid, lam_range)
    conds = transport.check_conditions(k)
    run.report["constants"] = k.to_dict()
    run.report["conditions"] = list(conds)
    run.report["existence_margin"] = transport.existence_margin(k)
    run.phase("constants")
    res = transport.solve_nonlinear(cfg.field, cfg.c, cfg.f, cfg.grid,
                                    cfg.number("u0", 0.0), tol=cfg.number("tol", 1e-8))
    run.report["solution"] = res.to_dict()
    run.grid_field("nonlinear_u", res.solution.u)
    run.phase("picard")
    bracket = cfg.numbers("branch_bracket")
    if bracket is not None and not cfg.field.takes_lambda:
        fps = dynsys.find_fixed_points(cfg.field, cfg.grid)
        table = transport.count_branches(cfg.c, cfg.f, fps, bracket)
        run.report["branches"] = table.to_dict()
        run.table("branches", ["point", "root"],
                  [[str(e["position"]), r] for e in table.entries for r in e["roots"]])
        if cfg.text("realize", "none").strip() == "all":
            attempts, found = transport.realize_branches(cfg.field, cfg.c, cfg.f, cfg.grid,
                                                         fps, table)
            run.report["realized"] = {"attempts": attempts, "distinct": len(found),
                                      "combinatorial": table.total}
        run.phase("branches")
    return EXIT_OK


def cmd_verify(run):
    cfg = run.cfg
    if cfg.field is None:
        raise PreconditionError("verify needs a field")
    rec = _recurrent(cfg)
    run.report["recurrent_set"] = rec.to_dict()
    locals_ = []
    for p in rec.fixed_points:
        if p.hyperbolic:
            q = lyapunov.quadratic_local_lyapunov(p)
            locals_.append({"position": p.position, "M": q.M, "residual": q.residual(p.jacobian)})
    run.report["local_lyapunov"] = locals_
    L = getattr(cfg.field, "lyapunov", None)
    omega = getattr(cfg.field, "omega", None)
    if L is not None and omega is not None:
        orec = dynsys.classify(omega, cfg.grid)
        rep = lyapunov.verify_lyapunov(L, omega, orec, cfg.grid,
                                       tol=cfg.number("tol", lyapunov.DEFAULT_TOL),
                                       delta=cfg.number("lyap_delta", 3 * max(cfg.grid.h)))
        run.report["lyapunov"] = rep.to_dict()
        run.report["passed"] = rep.passed and rec.morse_smale
    else:
        run.report["passed"] = rec.morse_smale
    run.phase("verify")
    return EXIT_OK


def cmd_pressure(run):
    cfg = run.cfg
    results = _sweep(cfg)
    run.phase("sweep")
    rec = _recurrent(cfg)
    lams = [r.lam for r in results]
    limit = spectral.extrapolate_limit(cfg.epsilons, lams) if len(lams) >= 2 else lams[-1]
    rep = spectral.pressure_prediction(rec, cfg.c, sweep_limit=limit)
    run.phase("pressure")
    run.report["eigen"] = [r.to_dict() for r in results]
    run.report["pressure"] = rep.to_dict()
    run.table("pressure", ["quantity", "value"],
              [["max", rep.max_value], ["min", rep.min_value], ["harmonic", rep.harmonic_value],
               ["sweep_limit", limit], ["last_lambda", lams[-1]]])
    return EXIT_OK


COMMANDS = {"eigen": cmd_eigen, "concentrate": cmd_concentrate, "transport": cmd_transport,
            "nonlinear": cmd_nonlinear, "verify": cmd_verify, "pressure": cmd_pressure}


# -- entry point ------------------------------------------------------------

def _parser():
    p = argparse.ArgumentParser(prog="mslab", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)
    for name in SUBCOMMANDS:
        s = sub.add_parser(name)
        s.add_argument("--config", help="INI configuration file")
        s.add_argument("--fixture", help="start from a built-in fixture")
        s.add_argument("--set", action="append", default=[], metavar="SECTION.KEY=VALUE")
        s.add_argument("--out", help="output directory")
    lf = sub.add_parser("list-fixtures")
    lf.add_argument("--theorem", help="only fixtures exercising this theorem tag")
    return p


def load_config(fixture=None, path=None, overrides=()):
    layers = []
    if fixture:
        layers.append(fixtures.get(fixture).config)
    if path:
        layers.append(config.read_file(path))
    if not layers:
        raise PreconditionError("give --fixture and/or --config")
    raw = config.merge(*layers)
    for item in overrides:
        config.apply_override(raw, item)
    return config.build(raw)


def run(subcommand, fixture=None, config_path=None, overrides=(), out_dir=None):
    """Run one subcommand; returns the exit code."""
    cfg = load_config(fixture, config_path, overrides)
    out = out_dir or cfg.raw.get("output", {}).get("dir", "mslab_out")
    r = Run(subcommand, cfg, out)
    code = COMMANDS[subcommand](r)
    r.write()
    return code


def main(argv=None):
    logging.basicConfig(level=logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    args = _parser().parse_args(argv)
    if args.command == "list-fixtures":
        try:
            items = fixtures.list_fixtures(args.theorem)
        except MsLabError as exc:
            print(f"error: {exc}", file=sys.stderr)
            return EXIT_PRECONDITION
        print(json.dumps([fx.to_dict() for fx in items], indent=2, sort_keys=True))
        return EXIT_OK
    try:
        return run(args.command, args.fixture, args.config, args.set, args.out)
    except SweepError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONVERGENCE if isinstance(exc.cause, ConvergenceError) else EXIT_PRECONDITION
    except ConvergenceError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONVERGENCE
    except (PreconditionError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_PRECONDITION


if __name__ == "__main__":
    sys.exit(main())
