"""Closed-form expression mini-language.

Grammar: numbers, ``+ - * / ^`` (``**`` accepted for ``^``), parentheses,
``sin``, ``cos``, ``exp``, the constants ``pi`` and ``e``, coordinates ``x``
and ``y``, and the field parameter ``lam`` (also spelled ``lambda`` or
``λ``).  Any other identifier must be bound through ``params`` at parse
time.

Expressions are parsed once into a small tree, differentiated
symbolically (for Jacobians and parameter derivatives), and compiled into a
postfix program that both kernel backends evaluate.
"""
from __future__ import annotations

import math
import re

import numpy as np

from .errors import ExpressionError

# postfix opcodes; keep in sync with _ckernels.pyx
OP_CONST, OP_X, OP_Y, OP_LAM = 0, 1, 2, 3
OP_ADD, OP_SUB, OP_MUL, OP_DIV, OP_POW = 10, 11, 12, 13, 14
OP_NEG, OP_SIN, OP_COS, OP_EXP = 20, 21, 22, 23

VARIABLES = ("x", "y", "lam")
FUNCTIONS = ("sin", "cos", "exp")
_ALIASES = {"lambda": "lam", "λ": "lam"}
_CONSTANTS = {"pi": math.pi, "e": math.e}

_TOKEN = re.compile(r"""
    (?P<num>(\d+\.\d*|\.\d+|\d+)([eE][+-]?\d+)?)
  | (?P<name>[A-Za-z_λ][A-Za-z_0-9λ]*)
  | (?P<op>\*\*|[-+*/^(),])
  | (?P<ws>\s+)
""", re.VERBOSE)


# -- tree construction with light simplification ----------------------------

def _num(v):
    return ("num", float(v))


def _is_num(node, value=None):
    return node[0] == "num" and (value is None or node[1] == value)


def _add(a, b):
    if _is_num(a) and _is_num(b):
        return _num(a[1] + b[1])
    if _is_num(a, 0.0):
        return b
    if _is_num(b, 0.0):
        return a
    return ("add", a, b)


def _sub(a, b):
    if _is_num(a) and _is_num(b):
        return _num(a[1] - b[1])
    if _is_num(b, 0.0):
        return a
    if _is_num(a, 0.0):
        return _neg(b)
    return ("sub", a, b)


def _mul(a, b):
    if _is_num(a) and _is_num(b):
        return _num(a[1] * b[1])
    if _is_num(a, 0.0) or _is_num(b, 0.0):
        return _num(0.0)
    if _is_num(a, 1.0):
        return b
    if _is_num(b, 1.0):
        return a
    return ("mul", a, b)


def _div(a, b):
    if _is_num(b, 0.0):
        raise ExpressionError("division by the constant zero")
    if _is_num(a) and _is_num(b):
        return _num(a[1] / b[1])
    if _is_num(a, 0.0):
        return _num(0.0)
    if _is_num(b, 1.0):
        return a
    return ("div", a, b)


def _pow(a, b):
    if _is_num(a) and _is_num(b):
        return _num(a[1] ** b[1])
    if _is_num(b, 0.0):
        return _num(1.0)
    if _is_num(b, 1.0):
        return a
    return ("pow", a, b)


def _neg(a):
    if _is_num(a):
        return _num(-a[1])
    if a[0] == "neg":
        return a[1]
    return ("neg", a)


def _call(fn, a):
    if _is_num(a):
        return _num(getattr(math, fn)(a[1]))
    return ("call", fn, a)


_BINARY = {"+": _add, "-": _sub, "*": _mul, "/": _div, "^": _pow, "**": _pow}
_PRECEDENCE = {"+": 10, "-": 10, "*": 20, "/": 20, "^": 30, "**": 30}


# -- parser -----------------------------------------------------------------

def _tokenize(text):
    tokens = []
    pos = 0
    while pos < len(text):
        m = _TOKEN.match(text, pos)
        if not m:
            raise ExpressionError(f"unexpected character {text[pos]!r} at column {pos + 1} in {text!r}")
        pos = m.end()
        if m.lastgroup != "ws":
            tokens.append((m.lastgroup, m.group()))
    tokens.append(("end", ""))
    return tokens


class _Parser:
    def __init__(self, text, params):
        self.text = text
        self.tokens = _tokenize(text)
        self.i = 0
        self.params = params

    def peek(self):
        return self.tokens[self.i]

    def take(self):
        tok = self.tokens[self.i]
        self.i += 1
        return tok

    def expect(self, value):
        kind, tok = self.take()
        if tok != value:
            raise ExpressionError(f"expected {value!r} but found {tok or 'end of input'!r} in {self.text!r}")

    def parse(self):
        node = self.expression(0)
        if self.peek()[0] != "end":
            raise ExpressionError(f"trailing input {self.peek()[1]!r} in {self.text!r}")
        return node

    def expression(self, min_prec):
        left = self.unary()
        while True:
            kind, tok = self.peek()
            if kind != "op" or tok not in _PRECEDENCE or _PRECEDENCE[tok] < min_prec:
                return left
            self.take()
            prec = _PRECEDENCE[tok]
            # exponentiation is right-associative
            right = self.expression(prec if tok in ("^", "**") else prec + 1)
            left = _BINARY[tok](left, right)

    def unary(self):
        kind, tok = self.peek()
        if kind == "op" and tok in "+-":
            self.take()
            operand = self.expression(_PRECEDENCE["*"] + 1)
            return operand if tok == "+" else _neg(operand)
        return self.atom()

    def atom(self):
        kind, tok = self.take()
        if kind == "num":
            return _num(tok)
        if kind == "op" and tok == "(":
            node = self.expression(0)
            self.expect(")")
            return node
        if kind == "name":
            name = _ALIASES.get(tok, tok)
            if name in FUNCTIONS:
                self.expect("(")
                arg = self.expression(0)
                self.expect(")")
                return _call(name, arg)
            if name in VARIABLES:
                return ("var", name)
            if name in self.params:
                return _num(self.params[name])
            if name in _CONSTANTS:
                return _num(_CONSTANTS[name])
            raise ExpressionError(f"unknown name {tok!r} in {self.text!r}")
        raise ExpressionError(f"unexpected {tok or 'end of input'!r} in {self.text!r}")


# -- calculus ---------------------------------------------------------------

def _diff(node, var):
    kind = node[0]
    if kind == "num":
        return _num(0.0)
    if kind == "var":
        return _num(1.0 if node[1] == var else 0.0)
    if kind == "neg":
        return _neg(_diff(node[1], var))
    if kind in ("add", "sub"):
        op = _add if kind == "add" else _sub
        return op(_diff(node[1], var), _diff(node[2], var))
    if kind == "mul":
        a, b = node[1], node[2]
        return _add(_mul(_diff(a, var), b), _mul(a, _diff(b, var)))
    if kind == "div":
        a, b = node[1], node[2]
        return _div(_sub(_mul(_diff(a, var), b), _mul(a, _diff(b, var))), _pow(b, _num(2)))
    if kind == "pow":
        a, b = node[1], node[2]
        if not _is_num(b):
            if _is_num(_diff(b, var), 0.0):
                # exponent independent of var but not literal: d(a^b) = b a^(b-1) a'
                return _mul(_mul(b, _pow(a, _sub(b, _num(1)))), _diff(a, var))
            raise ExpressionError("cannot differentiate a power whose exponent depends on the variable")
        return _mul(_mul(b, _pow(a, _num(b[1] - 1))), _diff(a, var))
    if kind == "call":
        fn, a = node[1], node[2]
        da = _diff(a, var)
        if fn == "sin":
            outer = _call("cos", a)
        elif fn == "cos":
            outer = _neg(_call("sin", a))
        else:
            outer = node
        return _mul(outer, da)
    raise ExpressionError(f"unknown node {kind}")


def _variables(node, acc):
    if node[0] == "var":
        acc.add(node[1])
    for child in node[1:]:
        if isinstance(child, tuple):
            _variables(child, acc)
    return acc


def _compile(node, codes, vals):
    kind = node[0]
    if kind == "num":
        codes.append(OP_CONST)
        vals.append(node[1])
        return
    if kind == "var":
        codes.append({"x": OP_X, "y": OP_Y, "lam": OP_LAM}[node[1]])
        vals.append(0.0)
        return
    if kind == "neg":
        _compile(node[1], codes, vals)
        codes.append(OP_NEG)
    elif kind == "call":
        _compile(node[2], codes, vals)
        codes.append({"sin": OP_SIN, "cos": OP_COS, "exp": OP_EXP}[node[1]])
    else:
        _compile(node[1], codes, vals)
        _compile(node[2], codes, vals)
        codes.append({"add": OP_ADD, "sub": OP_SUB, "mul": OP_MUL,
                      "div": OP_DIV, "pow": OP_POW}[kind])
    vals.append(0.0)


def _render(node):
    kind = node[0]
    if kind == "num":
        return repr(node[1])
    if kind == "var":
        return node[1]
    if kind == "neg":
        return f"(-{_render(node[1])})"
    if kind == "call":
        return f"{node[1]}({_render(node[2])})"
    sym = {"add": "+", "sub": "-", "mul": "*", "div": "/", "pow": "^"}[kind]
    return f"({_render(node[1])} {sym} {_render(node[2])})"


def max_stack_depth(codes):
    depth = peak = 0
    for op in codes:
        if op < OP_ADD:
            depth += 1
        elif op < OP_NEG:
            depth -= 1
        peak = max(peak, depth)
    return peak


def run_program(codes, vals, x, y=None, lam=None):
    """Evaluate a postfix program on numpy arrays (the reference evaluator)."""
    x = np.asarray(x, dtype=float)
    shape = x.shape
    stack = []
    for op, v in zip(codes, vals):
        if op == OP_CONST:
            stack.append(np.full(shape, v))
        elif op == OP_X:
            stack.append(x)
        elif op == OP_Y:
            stack.append(np.zeros(shape) if y is None else np.broadcast_to(y, shape))
        elif op == OP_LAM:
            stack.append(np.zeros(shape) if lam is None else np.broadcast_to(lam, shape))
        elif op >= OP_NEG:
            a = stack.pop()
            if op == OP_NEG:
                stack.append(-a)
            elif op == OP_SIN:
                stack.append(np.sin(a))
            elif op == OP_COS:
                stack.append(np.cos(a))
            else:
                stack.append(np.exp(a))
        else:
            b = stack.pop()
            a = stack.pop()
            if op == OP_ADD:
                stack.append(a + b)
            elif op == OP_SUB:
                stack.append(a - b)
            elif op == OP_MUL:
                stack.append(a * b)
            elif op == OP_DIV:
                stack.append(a / b)
            else:
                stack.append(np.power(a, b))
    return stack[0]


class Expr:
    """A parsed closed-form scalar expression."""

    def __init__(self, source, params=None, _node=None):
        if _node is None:
            if not isinstance(source, str) or not source.strip():
                raise ExpressionError("empty expression")
            _node = _Parser(source, dict(params or {})).parse()
        self.node = _node
        self.source = source if isinstance(source, str) else _render(_node)
        codes, vals = [], []
        _compile(self.node, codes, vals)
        self.codes = np.asarray(codes, dtype=np.int32)
        self.vals = np.asarray(vals, dtype=np.float64)
        self.variables = frozenset(_variables(self.node, set()))

    @classmethod
    def constant(cls, value):
        return cls(repr(float(value)), _node=_num(value))

    @property
    def is_constant(self):
        return self.node[0] == "num"

    def diff(self, var):
        var = _ALIASES.get(var, var)
        node = _diff(self.node, var)
        return Expr(_render(node), _node=node)

    def __call__(self, x, y=None, lam=None):
        return run_program(self.codes, self.vals, x, y, lam)

    def at(self, pts, lam=None):
        """Evaluate at an ``(m, dim)`` array of points."""
        pts = np.atleast_2d(np.asarray(pts, dtype=float))
        y = pts[:, 1] if pts.shape[1] > 1 else None
        return self(pts[:, 0], y, lam)

    def _combine(self, other, op, swap=False):
        other = as_expr(other)
        a, b = (other.node, self.node) if swap else (self.node, other.node)
        node = op(a, b)
        return Expr(_render(node), _node=node)

    def __add__(self, other):
        return self._combine(other, _add)

    def __radd__(self, other):
        return self._combine(other, _add, swap=True)

    def __sub__(self, other):
        return self._combine(other, _sub)

    def __rsub__(self, other):
        return self._combine(other, _sub, swap=True)

    def __mul__(self, other):
        return self._combine(other, _mul)

    def __rmul__(self, other):
        return self._combine(other, _mul, swap=True)

    def __truediv__(self, other):
        return self._combine(other, _div)

    def __neg__(self):
        node = _neg(self.node)
        return Expr(_render(node), _node=node)

    def __repr__(self):
        return f"Expr({self.source!r})"

    def __str__(self):
        return self.source


def as_expr(value, params=None):
    """Coerce a string, number or :class:`Expr` into an :class:`Expr`."""
    if isinstance(value, Expr):
        return value
    if isinstance(value, (int, float, np.floating, np.integer)):
        return Expr.constant(float(value))
    return Expr(str(value), params)
