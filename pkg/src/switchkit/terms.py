"""Exact polynomial terms with rational coefficients over a fixed variable tuple."""

from __future__ import annotations

import re
from fractions import Fraction
from typing import Callable, Iterable, Mapping, Optional, Sequence


class ParseError(ValueError):
    """Syntax or name error, carrying the offending source position."""

    def __init__(self, message: str, pos: int):
        super().__init__(f"{message} (at position {pos})")
        self.message = message
        self.pos = pos


# ---------------------------------------------------------------------------
# Lexer shared by every textual format in the package.
# ---------------------------------------------------------------------------

_TOKEN_RE = re.compile(
    r"(?P<num>\d+(?:\.\d+)?)"
    r"|(?P<ident>[A-Za-z_][A-Za-z0-9_]*)"
    r"|(?P<op>->|\+\+|:=|>=|<=|!=|[-+*/^()=<>&|!?;,{}':.\[\]])"
)
_WS_RE = re.compile(r"(?:\s|#[^\n]*)+")


class Lexer:
    """Token stream over the shared surface syntax (numbers, identifiers, operators)."""

    def __init__(self, text: str):
        self.text = text
        self.tokens: list[tuple[str, str, int]] = []
        i = 0
        while i < len(text):
            ws = _WS_RE.match(text, i)
            if ws:
                i = ws.end()
                if i >= len(text):
                    break
            m = _TOKEN_RE.match(text, i)
            if not m:
                raise ParseError(f"unexpected character {text[i]!r}", i)
            kind = m.lastgroup
            self.tokens.append((kind, m.group(), i))
            i = m.end()
        self.pos = 0

    def peek(self, ahead: int = 0):
        j = self.pos + ahead
        if j < len(self.tokens):
            return self.tokens[j]
        return ("eof", "", len(self.text))

    def next(self):
        tok = self.peek()
        self.pos += 1
        return tok

    def at(self, text: str) -> bool:
        return self.peek()[1] == text and self.peek()[0] != "eof"

    def accept(self, text: str) -> bool:
        if self.at(text):
            self.pos += 1
            return True
        return False

    def expect(self, text: str):
        kind, got, pos = self.peek()
        if kind == "eof" or got != text:
            raise ParseError(f"expected {text!r}, found {got!r}", pos)
        self.pos += 1

    def expect_kind(self, kind: str) -> tuple[str, str, int]:
        k, got, pos = self.peek()
        if k != kind:
            raise ParseError(f"expected {kind}, found {got!r}", pos)
        self.pos += 1
        return (k, got, pos)

    def done(self) -> bool:
        return self.pos >= len(self.tokens)


def parse_rational(lx: Lexer) -> Fraction:
    """NUMBER, -NUMBER, or NUMBER/NUMBER; decimals are read exactly."""
    neg = lx.accept("-")
    _, text, _ = lx.expect_kind("num")
    val = Fraction(text)
    if lx.accept("/"):
        _, den, pos = lx.expect_kind("num")
        d = Fraction(den)
        if d == 0:
            raise ParseError("division by zero", pos)
        val /= d
    return -val if neg else val


# ---------------------------------------------------------------------------
# Terms
# ---------------------------------------------------------------------------

Monomial = tuple  # exponent vector aligned with the variable tuple


def _grlex_sort_key(mono: Monomial):
    # graded lexicographic, descending: higher total degree first,
    # then earlier variables with higher exponents first.
    return (-sum(mono), tuple(-e for e in mono))


class Term:
    """Canonical multivariate polynomial: monomial -> nonzero Fraction.

    Immutable; arithmetic is exact.  All binary operations require both
    operands to share the same variable tuple.
    """

    __slots__ = ("vars", "coeffs", "_key")

    def __init__(self, variables: Sequence[str], coeffs: Optional[Mapping] = None):
        object.__setattr__(self, "vars", tuple(variables))
        cleaned = {}
        if coeffs:
            for mono, c in coeffs.items():
                c = Fraction(c)
                if c != 0:
                    mono = tuple(int(e) for e in mono)
                    if len(mono) != len(self.vars):
                        raise ValueError("exponent vector length mismatch")
                    cleaned[mono] = c
        object.__setattr__(self, "coeffs", cleaned)
        object.__setattr__(self, "_key", None)

    def __setattr__(self, name, value):
        raise AttributeError("Term is immutable")

    # -- construction helpers ------------------------------------------------

    @classmethod
    def zero(cls, variables) -> "Term":
        return cls(variables)

    @classmethod
    def constant(cls, variables, value) -> "Term":
        variables = tuple(variables)
        return cls(variables, {(0,) * len(variables): Fraction(value)})

    @classmethod
    def variable(cls, variables, name: str) -> "Term":
        variables = tuple(variables)
        if name not in variables:
            raise ValueError(f"unknown variable {name!r}")
        mono = tuple(1 if v == name else 0 for v in variables)
        return cls(variables, {mono: Fraction(1)})

    # -- canonical identity ---------------------------------------------------

    def key(self):
        if self._key is None:
            object.__setattr__(
                self, "_key", (self.vars, tuple(sorted(self.coeffs.items())))
            )
        return self._key

    def __eq__(self, other):
        return isinstance(other, Term) and self.key() == other.key()

    def __hash__(self):
        return hash(self.key())

    # -- arithmetic ------------------------------------------------------------

    def _check(self, other: "Term"):
        if self.vars != other.vars:
            raise ValueError("terms over different variable tuples")

    def __add__(self, other):
        if isinstance(other, (int, Fraction)):
            other = Term.constant(self.vars, other)
        self._check(other)
        res = dict(self.coeffs)
        for m, c in other.coeffs.items():
            res[m] = res.get(m, Fraction(0)) + c
        return Term(self.vars, res)

    def __sub__(self, other):
        if isinstance(other, (int, Fraction)):
            other = Term.constant(self.vars, other)
        return self + (-other)

    def __neg__(self):
        return Term(self.vars, {m: -c for m, c in self.coeffs.items()})

    def __mul__(self, other):
        if isinstance(other, (int, Fraction)):
            return self.scale(other)
        self._check(other)
        res: dict = {}
        for m1, c1 in self.coeffs.items():
            for m2, c2 in other.coeffs.items():
                m = tuple(a + b for a, b in zip(m1, m2))
                res[m] = res.get(m, Fraction(0)) + c1 * c2
        return Term(self.vars, res)

    __rmul__ = __mul__

    def scale(self, factor) -> "Term":
        factor = Fraction(factor)
        return Term(self.vars, {m: c * factor for m, c in self.coeffs.items()})

    def __pow__(self, n: int):
        if n < 0:
            raise ValueError("negative exponent")
        out = Term.constant(self.vars, 1)
        base = self
        while n:
            if n & 1:
                out = out * base
            base = base * base
            n >>= 1
        return out

    # -- structure -------------------------------------------------------------

    def is_zero(self) -> bool:
        return not self.coeffs

    def is_constant(self) -> bool:
        return all(sum(m) == 0 for m in self.coeffs)

    def constant_value(self) -> Fraction:
        if not self.is_constant():
            raise ValueError("not a constant term")
        return next(iter(self.coeffs.values()), Fraction(0))

    def degree(self) -> int:
        return max((sum(m) for m in self.coeffs), default=0)

    def mentions(self, name: str) -> bool:
        i = self.vars.index(name)
        return any(m[i] > 0 for m in self.coeffs)

    def partial(self, name: str) -> "Term":
        i = self.vars.index(name)
        res = {}
        for m, c in self.coeffs.items():
            if m[i] > 0:
                dm = list(m)
                dm[i] -= 1
                dm = tuple(dm)
                res[dm] = res.get(dm, Fraction(0)) + c * m[i]
        return Term(self.vars, res)

    def substitute_zero(self, name: str) -> "Term":
        i = self.vars.index(name)
        return Term(self.vars, {m: c for m, c in self.coeffs.items() if m[i] == 0})

    def with_vars(self, variables: Sequence[str]) -> "Term":
        """Re-embed into a different variable tuple (must cover all mentioned vars)."""
        variables = tuple(variables)
        idx = {v: j for j, v in enumerate(variables)}
        res = {}
        for m, c in self.coeffs.items():
            new = [0] * len(variables)
            for v, e in zip(self.vars, m):
                if e:
                    if v not in idx:
                        raise ValueError(f"variable {v!r} not in target tuple")
                    new[idx[v]] = e
            res[tuple(new)] = res.get(tuple(new), Fraction(0)) + c
        return Term(variables, res)

    # -- evaluation --------------------------------------------------------------

    def eval(self, valuation: Mapping[str, Fraction]) -> Fraction:
        """Exact value at a rational point; every variable must be bound."""
        for v in self.vars:
            if v not in valuation:
                raise KeyError(f"no binding for variable {v!r}")
        vals = [Fraction(valuation[v]) for v in self.vars]
        total = Fraction(0)
        for m, c in self.coeffs.items():
            acc = c
            for val, e in zip(vals, m):
                if e:
                    acc *= val ** e
            total += acc
        return total

    def eval_float(self, env: Mapping[str, float]) -> float:
        vals = [float(env[v]) for v in self.vars]
        total = 0.0
        for m, c in self.coeffs.items():
            acc = float(c)
            for val, e in zip(vals, m):
                if e:
                    acc *= val ** e
            total += acc
        return total

    def float_expr(self, names: Optional[Sequence[str]] = None) -> str:
        """Python expression string for fast compiled evaluation."""
        names = tuple(names) if names is not None else self.vars
        if not self.coeffs:
            return "0.0"
        parts = []
        for m in sorted(self.coeffs, key=_grlex_sort_key):
            c = self.coeffs[m]
            factors = [repr(float(c))]
            for v, e in zip(self.vars, m):
                nm = names[self.vars.index(v)] if names != self.vars else v
                if e == 1:
                    factors.append(nm)
                elif e > 1:
                    factors.append(f"{nm}**{e}")
            parts.append("*".join(factors))
        return "(" + " + ".join(parts) + ")"

    # -- printing ----------------------------------------------------------------

    def sorted_monomials(self):
        return sorted(self.coeffs, key=_grlex_sort_key)

    def __str__(self):
        if not self.coeffs:
            return "0"
        out = []
        for i, m in enumerate(self.sorted_monomials()):
            c = self.coeffs[m]
            mono = "*".join(
                v if e == 1 else f"{v}^{e}" for v, e in zip(self.vars, m) if e > 0
            )
            mag = abs(c)
            if mono and mag == 1:
                body = mono
            elif mono:
                body = f"{mag}*{mono}"
            else:
                body = str(mag)
            if i == 0:
                out.append(body if c > 0 else f"-{body}")
            else:
                out.append(f"+ {body}" if c > 0 else f"- {body}")
        return " ".join(out)

    def __repr__(self):
        return f"Term({str(self)!r})"


# ---------------------------------------------------------------------------
# Vector fields and Lie derivatives
# ---------------------------------------------------------------------------

class VectorField:
    """Ordered (variable, rhs) pairs defining an autonomous system x' = f(x)."""

    __slots__ = ("components", "_key")

    def __init__(self, components: Iterable[tuple[str, Term]]):
        comps = tuple(components)
        if not comps:
            raise ValueError("empty vector field")
        universe = comps[0][1].vars
        for name, rhs in comps:
            if rhs.vars != universe:
                raise ValueError("vector field components over different variables")
            if name not in universe:
                raise ValueError(f"ODE variable {name!r} not declared")
        names = [n for n, _ in comps]
        if len(set(names)) != len(names):
            raise ValueError("duplicate ODE variable")
        object.__setattr__(self, "components", comps)
        object.__setattr__(self, "_key", None)

    def __setattr__(self, name, value):
        raise AttributeError("VectorField is immutable")

    @property
    def names(self):
        return tuple(n for n, _ in self.components)

    @property
    def universe(self):
        return self.components[0][1].vars

    def rhs(self, name: str) -> Term:
        for n, t in self.components:
            if n == name:
                return t
        raise KeyError(name)

    def negated(self) -> "VectorField":
        return VectorField((n, -t) for n, t in self.components)

    def key(self):
        if self._key is None:
            object.__setattr__(
                self, "_key", tuple((n, t.key()) for n, t in self.components)
            )
        return self._key

    def restricted_key(self, names: Sequence[str]):
        """Key of the components for `names` only (identifies a mode's field)."""
        return tuple((n, self.rhs(n).key()) for n in names)

    def __eq__(self, other):
        return isinstance(other, VectorField) and self.key() == other.key()

    def __hash__(self):
        return hash(self.key())

    def __str__(self):
        return ", ".join(f"{n}' = {t}" for n, t in self.components)

    def __repr__(self):
        return f"VectorField({str(self)!r})"

    def float_fn(self) -> Callable:
        """Compiled callable mapping a state tuple (ordered like `names`) to derivatives."""
        names = self.names
        args = ", ".join(names)
        body = ", ".join(t.float_expr() for _, t in self.components)
        return eval(f"lambda {args}: ({body},)")  # noqa: S307 - generated from exact terms


def lie_derivative(p: Term, field: VectorField) -> Term:
    """Directional derivative of p along the field: sum_i dp/dx_i * f_i."""
    total = Term.zero(p.vars)
    for name, rhs in field.components:
        if rhs.vars != p.vars:
            raise ValueError("term and field over different variables")
        total = total + p.partial(name) * rhs
    return total


# ---------------------------------------------------------------------------
# Expression parser
# ---------------------------------------------------------------------------
#
#   expr   := term (('+'|'-') term)*
#   term   := factor (('*' factor) | ('/' NUMBER))*
#   factor := '-' factor | base ('^' NAT)?
#   base   := '(' expr ')' | NUMBER | IDENT
#
# Division is restricted to nonzero rational literals so terms stay polynomial.

def parse_term(text: str, variables: Sequence[str]) -> Term:
    lx = Lexer(text)
    t = _parse_expr(lx, tuple(variables))
    if not lx.done():
        _, got, pos = lx.peek()
        raise ParseError(f"trailing input {got!r}", pos)
    return t


def _parse_expr(lx: Lexer, variables) -> Term:
    t = _parse_mul(lx, variables)
    while True:
        if lx.accept("+"):
            t = t + _parse_mul(lx, variables)
        elif lx.accept("-"):
            t = t - _parse_mul(lx, variables)
        else:
            return t


def _parse_mul(lx: Lexer, variables) -> Term:
    t = _parse_factor(lx, variables)
    while True:
        if lx.accept("*"):
            t = t * _parse_factor(lx, variables)
        elif lx.at("/"):
            lx.next()
            kind, text, pos = lx.peek()
            if kind != "num":
                raise ParseError("division only by a rational literal", pos)
            lx.next()
            d = Fraction(text)
            if d == 0:
                raise ParseError("division by zero", pos)
            t = t.scale(Fraction(1) / d)
        else:
            return t


def _parse_factor(lx: Lexer, variables) -> Term:
    if lx.accept("-"):
        return -_parse_factor(lx, variables)
    t = _parse_base(lx, variables)
    if lx.accept("^"):
        kind, text, pos = lx.peek()
        if kind != "num" or "." in text:
            raise ParseError("exponent must be a natural number", pos)
        lx.next()
        t = t ** int(text)
    return t


def _parse_base(lx: Lexer, variables) -> Term:
    kind, text, pos = lx.peek()
    if lx.accept("("):
        t = _parse_expr(lx, variables)
        lx.expect(")")
        return t
    if kind == "num":
        lx.next()
        return Term.constant(variables, Fraction(text))
    if kind == "ident":
        lx.next()
        if text not in variables:
            raise ParseError(f"unknown variable {text!r}", pos)
        return Term.variable(variables, text)
    raise ParseError(f"expected expression, found {text!r}", pos)


def eval_term(p: Term, valuation: Mapping[str, Fraction]) -> Fraction:
    return p.eval(valuation)
