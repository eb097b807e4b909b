"""INI-style experiment configuration.

Sections: ``grid``, ``field``, ``coefficients``, ``sweep``, ``analysis``,
``output``.  Values are plain text; expressions use the mini-language of
:mod:`mslab.expr`.
"""
from __future__ import annotations

import configparser
from dataclasses import dataclass, field

import numpy as np

from . import fields
from .errors import ExpressionError, PreconditionError
from .expr import Expr
from .mesh import build_grid

SECTIONS = ("grid", "field", "coefficients", "sweep", "analysis", "output")


def read_file(path):
    """Parse an INI file into ``{section: {key: value}}`` (line-numbered errors)."""
    cp = configparser.ConfigParser(interpolation=None)
    try:
        with open(path, encoding="utf-8") as fh:
            cp.read_file(fh)
    except FileNotFoundError:
        raise PreconditionError(f"config file not found: {path}") from None
    except configparser.Error as exc:
        raise PreconditionError(f"{path}: {exc}") from None
    return {s: dict(cp[s]) for s in cp.sections()}


def apply_override(cfg, text):
    """Apply one ``section.key=value`` override in place."""
    if "=" not in text or "." not in text.split("=", 1)[0]:
        raise PreconditionError(f"override {text!r} must look like section.key=value")
    lhs, value = text.split("=", 1)
    section, key = lhs.strip().split(".", 1)
    cfg.setdefault(section, {})[key.strip()] = value.strip()


def merge(*layers):
    out = {}
    for layer in layers:
        for sec, items in (layer or {}).items():
            out.setdefault(sec, {}).update(items)
    return out


def _where(section, key):
    return f"{section}.{key}"


def _number(cfg, section, key, default=None, kind=float):
    raw = cfg.get(section, {}).get(key)
    if raw is None:
        if default is None:
            raise PreconditionError(f"{_where(section, key)}: missing")
        return default
    try:
        e = Expr(raw)
    except ExpressionError as exc:
        raise PreconditionError(f"{_where(section, key)}: {exc}") from None
    if not e.is_constant:
        raise PreconditionError(f"{_where(section, key)}: expected a number, got {raw!r}")
    val = float(e.node[1])
    if kind is int:
        if val != int(val):
            raise PreconditionError(f"{_where(section, key)}: expected an integer")
        return int(val)
    return val


def _numbers(cfg, section, key, default=None):
    raw = cfg.get(section, {}).get(key)
    if raw is None:
        return default
    out = []
    for part in raw.split(","):
        try:
            e = Expr(part)
        except ExpressionError as exc:
            raise PreconditionError(f"{_where(section, key)}: {exc}") from None
        if not e.is_constant:
            raise PreconditionError(f"{_where(section, key)}: {part.strip()!r} is not a number")
        out.append(float(e.node[1]))
    return out


def _expr(cfg, section, key, params=None):
    raw = cfg.get(section, {}).get(key)
    if raw is None:
        return None
    try:
        return Expr(raw, params)
    except ExpressionError as exc:
        raise PreconditionError(f"{_where(section, key)}: {exc}") from None


def _params(cfg):
    raw = cfg.get("field", {}).get("params", "")
    out = {}
    for item in filter(None, (p.strip() for p in raw.split(","))):
        if "=" not in item:
            raise PreconditionError(f"field.params: {item!r} must be name=value")
        k, v = item.split("=", 1)
        try:
            e = Expr(v)
        except ExpressionError as exc:
            raise PreconditionError(f"field.params: {exc}") from None
        if not e.is_constant:
            raise PreconditionError(f"field.params: {k.strip()} must be a number")
        out[k.strip()] = float(e.node[1])
    return out


def build_field(cfg, grid):
    sec = cfg.get("field", {})
    family = sec.get("family", "none").strip()
    params = _params(cfg)
    period = grid.period
    try:
        if family == "none":
            return None
        if family in ("circle_sine", "torus_morse", "torus_cycles"):
            spec = fields.make_field(family, period=period)
        elif family == "shifted_torus_cycles":
            spec = fields.shifted_torus_cycles(params.get("kappa", 5.0), period=period)
        elif family == "gradient":
            phi = _expr(cfg, "field", "phi", params)
            if phi is None:
                raise PreconditionError("field.phi: required for the gradient family")
            spec = fields.gradient(phi, grid.dim, params.pop("sign", 1.0), period, params)
        elif family == "decomposed":
            omega_name = sec.get("omega", "").strip()
            if omega_name not in fields.FAMILIES or omega_name in ("gradient", "expression"):
                raise PreconditionError(f"field.omega: unknown field {omega_name!r}")
            omega = fields.make_field(omega_name, period=period)
            L = _expr(cfg, "field", "lyapunov", params)
            if L is None:
                raise PreconditionError("field.lyapunov: required for the decomposed family")
            spec = fields.decomposed(omega, L, params)
        elif family == "expression":
            comps = [c.strip() for c in sec.get("components", "").split(";") if c.strip()]
            spec = fields.expression(comps, params, period)
        else:
            raise PreconditionError(
                f"field.family: unknown family {family!r}; known: "
                f"{sorted(set(fields.FAMILIES) | {'none', 'decomposed'})}")
    except ExpressionError as exc:
        raise PreconditionError(f"field: {exc}") from None
    if spec.dim != grid.dim:
        raise PreconditionError(f"field.family: {family} is {spec.dim}-D but grid.dim = {grid.dim}")
    return spec


@dataclass
class ExperimentConfig:
    raw: dict
    grid: object
    field: object
    c: Expr
    f: Expr
    phi: Expr
    epsilons: list
    scheme: str
    analysis: dict = field(default_factory=dict)

    def number(self, key, default=None, kind=float):
        return _number(self.raw, "analysis", key, default, kind)

    def numbers(self, key, default=None):
        return _numbers(self.raw, "analysis", key, default)

    def text(self, key, default=None):
        return self.raw.get("analysis", {}).get(key, default)


def build(cfg):
    """Validate a merged raw configuration and build the experiment objects."""
    for sec in cfg:
        if sec not in SECTIONS:
            raise PreconditionError(f"unknown section [{sec}]; known: {list(SECTIONS)}")
    dim = _number(cfg, "grid", "dim", kind=int)
    n = _number(cfg, "grid", "n", kind=int)
    period = _number(cfg, "grid", "period", 2 * np.pi)
    grid = build_grid(dim, n, period)
    spec = build_field(cfg, grid)
    params = _params(cfg)
    c = _expr(cfg, "coefficients", "c", params)
    a = _expr(cfg, "coefficients", "a", params)
    if c is None:
        c = a
    elif a is not None and spec is None:
        raise PreconditionError("coefficients: give either c or a when b = 0, not both")
    if c is None:
        c = Expr.constant(0.0)
    f = _expr(cfg, "coefficients", "f", params)
    phi = _expr(cfg, "coefficients", "phi", params)
    for name, e in (("c", c), ("f", f), ("phi", phi)):
        if e is not None and dim == 1 and "y" in e.variables:
            raise PreconditionError(f"coefficients.{name}: uses y on a 1-D grid")
    eps = _numbers(cfg, "sweep", "epsilons", [])
    if any(e <= 0 for e in eps):
        raise PreconditionError("sweep.epsilons: must be positive")
    if any(b >= a_ for a_, b in zip(eps, eps[1:])):
        raise PreconditionError("sweep.epsilons: must be strictly decreasing")
    scheme = cfg.get("sweep", {}).get("scheme", "exponential_fitted").strip()
    if scheme not in ("central", "exponential_fitted"):
        raise PreconditionError(f"sweep.scheme: unknown scheme {scheme!r}")
    return ExperimentConfig(cfg, grid, spec, c, f, phi, eps, scheme, cfg.get("analysis", {}))
