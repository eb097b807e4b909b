"""Built-in experiment fixtures.

Each fixture is a complete INI-style configuration (section -> key -> text)
plus the theorem tags it exercises.  The CLI loads a fixture as the base
configuration; ``--config`` files and ``--set`` overrides layer on top.
"""
from __future__ import annotations

from dataclasses import dataclass, field


@dataclass(frozen=True)
class Fixture:
    name: str
    theorems: tuple
    summary: str
    config: dict = field(compare=False)
    params: dict = field(default_factory=dict, compare=False)

    def to_dict(self):
        return {"name": self.name, "theorems": list(self.theorems), "summary": self.summary,
                "params": self.params}


def _cfg(grid, field_, coefficients, sweep=None, analysis=None):
    return {"grid": grid, "field": field_, "coefficients": coefficients,
            "sweep": sweep or {}, "analysis": analysis or {}}


_CIRCLE = {"dim": "1", "n": "256", "period": "2*pi"}
_TORUS64 = {"dim": "2", "n": "64", "period": "2*pi"}
_TORUS128 = {"dim": "2", "n": "128", "period": "2*pi"}

_FIXTURES = [
    Fixture(
        "constant_identity", ("1",),
        "b = 0, c = 5: eigenvalue 5 and constant eigenfunction for every epsilon",
        _cfg(_CIRCLE, {"family": "none"}, {"c": "5"},
             {"epsilons": "1, 0.1, 0.01"})),
    Fixture(
        "circle_potential", ("1",),
        "b = 0, a = 2 + cos x on the circle: eigenvalue tends to min a = 1, mass at pi",
        _cfg(_CIRCLE, {"family": "none"}, {"a": "2 + cos(x)"},
             {"epsilons": "0.2, 0.1, 0.05, 0.02, 0.01"},
             {"delta": "0.5", "points": "auto", "weight": "none"})),
    Fixture(
        "double_well", ("1",),
        "b = 0, a = 2 + cos 2x: two symmetric wells share the mass",
        _cfg(_CIRCLE, {"family": "none"}, {"a": "2 + cos(2*x)"},
             {"epsilons": "0.1, 0.05, 0.02, 0.01"},
             {"delta": "0.5", "points": "auto", "weight": "none"})),
    Fixture(
        "torus_morse", ("1", "prop"),
        "b = grad(phi), phi = -(cos x + cos y), admissible c; weighted mass at critical points",
        _cfg(_TORUS64, {"family": "gradient", "phi": "-(cos(x) + cos(y))"},
             {"c": "1.5 + 0.25*cos(x)", "phi": "-(cos(x) + cos(y))"},
             {"epsilons": "0.2, 0.1, 0.05, 0.02"},
             {"delta": "0.4", "points": "auto", "weight": "exp_phi"})),
    Fixture(
        "torus_cycles", ("2",),
        "b = -grad L + Omega with Omega = (1, -sin y), L = 4(1 - cos y), c = 1",
        _cfg(_TORUS128, {"family": "decomposed", "omega": "torus_cycles",
                         "lyapunov": "4*(1 - cos(y))"},
             {"c": "1"},
             {"epsilons": "0.2, 0.1, 0.05, 0.02"},
             {"weight": "exp_L", "tube_half_width": "0.3", "n_stations": "16",
              "points": "auto"})),
    Fixture(
        "shifted_torus_cycles", ("2",),
        "Omega = (1, -kappa sin y): the same two cycles with Floquet exponents -kappa, kappa",
        _cfg(_TORUS64, {"family": "shifted_torus_cycles", "params": "kappa=5"},
             {"c": "1"},
             {"epsilons": "0.2, 0.1, 0.05"}),
        {"kappa": "real, default 5"}),
    Fixture(
        "circle_sine", ("4",),
        "b = -sin x, c = 2, f = 3 + cos x: u(0) = 2, u(pi) = 1",
        _cfg(_CIRCLE, {"family": "circle_sine"}, {"c": "2", "f": "3 + cos(x)"},
             {"epsilons": "0.1, 0.05, 0.02"},
             {"tube_radius": "0.2"})),
    Fixture(
        "torus_cycles_transport", ("4",),
        "b = (1, -sin y), c = 2, f = 1 + sin y: transport near limit cycles",
        _cfg(_TORUS128, {"family": "torus_cycles"}, {"c": "2", "f": "1 + sin(y)"},
             {"epsilons": "0.1, 0.05, 0.02"},
             {"tube_radius": "0.2", "osc_cycle_point": "0, pi", "osc_basin_point": "0, 1",
              "osc_times": "10, 20, 30, 40"})),
    Fixture(
        "nonlinear_contractive", ("5",),
        "b = -(1 + 0.1 sin u) sin x, c = 3 + 0.1 sin u + 0.2 cos x, f = 2 + cos x",
        _cfg(_CIRCLE, {"family": "expression",
                       "components": "-(1 + 0.1*sin(lam))*sin(x)"},
             {"c": "3 + 0.1*sin(lam) + 0.2*cos(x)", "f": "2 + cos(x)"},
             analysis={"lam_range": "0, 2", "u0": "0.5"})),
    Fixture(
        "nonlinear_cubic", ("5",),
        "b = -sin x, c = 1 + (u - 2)^2, f = 1.9: three roots per fixed point, 9 branches",
        _cfg(_CIRCLE, {"family": "circle_sine"},
             {"c": "1 + (lam - 2)^2", "f": "1.9"},
             analysis={"lam_range": "0, 4", "branch_bracket": "0, 4", "u0": "0.7",
                       "realize": "all"})),
]

REGISTRY = {fx.name: fx for fx in _FIXTURES}
if not REGISTRY:
    raise RuntimeError("fixture registry is empty")


def get(name):
    from .errors import PreconditionError
    try:
        return REGISTRY[name]
    except KeyError:
        raise PreconditionError(f"unknown fixture {name!r}; known: {sorted(REGISTRY)}") from None


def list_fixtures(theorem=None):
    """Registry entries, optionally only those tagged with ``theorem``."""
    out = [fx for fx in REGISTRY.values()]
    if theorem is not None:
        out = [fx for fx in out if str(theorem) in fx.theorems]
    return sorted(out, key=lambda fx: fx.name)
