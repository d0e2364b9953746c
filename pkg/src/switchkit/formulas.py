"""First-order real-arithmetic formulas over polynomial terms."""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from typing import Mapping, Sequence

from .terms import Lexer, ParseError, Term, _parse_expr

CMP_OPS = ("=", "!=", ">=", ">", "<=", "<")


@dataclass(frozen=True)
class Formula:
    pass


@dataclass(frozen=True)
class Bool(Formula):
    value: bool

    def __str__(self):
        return "true" if self.value else "false"


TRUE = Bool(True)
FALSE = Bool(False)


@dataclass(frozen=True)
class Cmp(Formula):
    """Comparison `term op 0`."""

    term: Term
    op: str

    def __post_init__(self):
        if self.op not in CMP_OPS:
            raise ValueError(f"bad comparison operator {self.op!r}")

    def __str__(self):
        return f"{self.term} {self.op} 0"


@dataclass(frozen=True)
class Not(Formula):
    body: Formula

    def __str__(self):
        return f"!({self.body})"


@dataclass(frozen=True)
class And(Formula):
    left: Formula
    right: Formula

    def __str__(self):
        return f"({self.left} & {self.right})"


@dataclass(frozen=True)
class Or(Formula):
    left: Formula
    right: Formula

    def __str__(self):
        return f"({self.left} | {self.right})"


@dataclass(frozen=True)
class Implies(Formula):
    left: Formula
    right: Formula

    def __str__(self):
        return f"({self.left} -> {self.right})"


@dataclass(frozen=True)
class Forall(Formula):
    var: str
    body: Formula

    def __str__(self):
        return f"forall {self.var}. ({self.body})"


@dataclass(frozen=True)
class Exists(Formula):
    var: str
    body: Formula

    def __str__(self):
        return f"exists {self.var}. ({self.body})"


# ---------------------------------------------------------------------------
# Smart constructors with constant folding
# ---------------------------------------------------------------------------

def atom(term: Term, op: str) -> Formula:
    """Comparison with constant folding: a constant lhs becomes true/false."""
    if term.is_constant():
        c = term.constant_value()
        result = {
            "=": c == 0,
            "!=": c != 0,
            ">=": c >= 0,
            ">": c > 0,
            "<=": c <= 0,
            "<": c < 0,
        }[op]
        return Bool(result)
    return Cmp(term, op)


def f_and(*fs: Formula) -> Formula:
    out = None
    for f in fs:
        if f == FALSE:
            return FALSE
        if f == TRUE:
            continue
        out = f if out is None else And(out, f)
    return TRUE if out is None else out


def f_or(*fs: Formula) -> Formula:
    out = None
    for f in fs:
        if f == TRUE:
            return TRUE
        if f == FALSE:
            continue
        out = f if out is None else Or(out, f)
    return FALSE if out is None else out


def f_not(f: Formula) -> Formula:
    if isinstance(f, Bool):
        return Bool(not f.value)
    return Not(f)


def f_implies(a: Formula, b: Formula) -> Formula:
    if a == FALSE or b == TRUE:
        return TRUE
    if a == TRUE:
        return b
    if b == FALSE:
        return f_not(a)
    return Implies(a, b)


# ---------------------------------------------------------------------------
# Structure helpers
# ---------------------------------------------------------------------------

def is_quantifier_free(f: Formula) -> bool:
    if isinstance(f, (Forall, Exists)):
        return False
    if isinstance(f, (And, Or, Implies)):
        return is_quantifier_free(f.left) and is_quantifier_free(f.right)
    if isinstance(f, Not):
        return is_quantifier_free(f.body)
    return True


def formula_atoms(f: Formula):
    """All comparison atoms, in syntactic order."""
    if isinstance(f, Cmp):
        yield f
    elif isinstance(f, (And, Or, Implies)):
        yield from formula_atoms(f.left)
        yield from formula_atoms(f.right)
    elif isinstance(f, Not):
        yield from formula_atoms(f.body)
    elif isinstance(f, (Forall, Exists)):
        yield from formula_atoms(f.body)


def map_atoms(f: Formula, fn) -> Formula:
    if isinstance(f, Cmp):
        return fn(f)
    if isinstance(f, And):
        return f_and(map_atoms(f.left, fn), map_atoms(f.right, fn))
    if isinstance(f, Or):
        return f_or(map_atoms(f.left, fn), map_atoms(f.right, fn))
    if isinstance(f, Implies):
        return f_implies(map_atoms(f.left, fn), map_atoms(f.right, fn))
    if isinstance(f, Not):
        return f_not(map_atoms(f.body, fn))
    if isinstance(f, Forall):
        return Forall(f.var, map_atoms(f.body, fn))
    if isinstance(f, Exists):
        return Exists(f.var, map_atoms(f.body, fn))
    return f


def formula_with_vars(f: Formula, variables: Sequence[str]) -> Formula:
    return map_atoms(f, lambda a: atom(a.term.with_vars(variables), a.op))


def canonical_key(f: Formula):
    """Order-insensitive structural key: and/or chains flattened, sorted, deduped."""
    if isinstance(f, Bool):
        return ("bool", f.value)
    if isinstance(f, Cmp):
        return ("cmp", f.op, f.term.key())
    if isinstance(f, (And, Or)):
        tag = "and" if isinstance(f, And) else "or"
        parts = []
        stack = [f]
        while stack:
            g = stack.pop()
            if isinstance(g, type(f)):
                stack.append(g.left)
                stack.append(g.right)
            else:
                parts.append(canonical_key(g))
        return (tag,) + tuple(sorted(set(parts)))
    if isinstance(f, Implies):
        return ("implies", canonical_key(f.left), canonical_key(f.right))
    if isinstance(f, Not):
        return ("not", canonical_key(f.body))
    if isinstance(f, Forall):
        return ("forall", f.var, canonical_key(f.body))
    if isinstance(f, Exists):
        return ("exists", f.var, canonical_key(f.body))
    raise TypeError(type(f))


# ---------------------------------------------------------------------------
# Normalization: negation-normal form with atoms `p >= 0` / `p > 0` only.
# Preserves the truth value at every valuation.
# ---------------------------------------------------------------------------

def normalize_formula(f: Formula) -> Formula:
    if not is_quantifier_free(f):
        raise ValueError("normalize_formula requires a quantifier-free formula")
    return _nnf(f, True)


def _nnf(f: Formula, positive: bool) -> Formula:
    if isinstance(f, Bool):
        return Bool(f.value == positive)
    if isinstance(f, Not):
        return _nnf(f.body, not positive)
    if isinstance(f, And):
        parts = (_nnf(f.left, positive), _nnf(f.right, positive))
        return f_and(*parts) if positive else f_or(*parts)
    if isinstance(f, Or):
        parts = (_nnf(f.left, positive), _nnf(f.right, positive))
        return f_or(*parts) if positive else f_and(*parts)
    if isinstance(f, Implies):
        if positive:
            return f_or(_nnf(f.left, False), _nnf(f.right, True))
        return f_and(_nnf(f.left, True), _nnf(f.right, False))
    if isinstance(f, Cmp):
        op = f.op if positive else _NEGATED[f.op]
        t = f.term
        if op == ">=":
            return atom(t, ">=")
        if op == ">":
            return atom(t, ">")
        if op == "<=":
            return atom(-t, ">=")
        if op == "<":
            return atom(-t, ">")
        if op == "=":
            return f_and(atom(t, ">="), atom(-t, ">="))
        return f_or(atom(t, ">"), atom(-t, ">"))  # !=
    raise TypeError(type(f))


_NEGATED = {"=": "!=", "!=": "=", ">=": "<", ">": "<=", "<=": ">", "<": ">="}


# ---------------------------------------------------------------------------
# Evaluation
# ---------------------------------------------------------------------------

def eval_formula(f: Formula, valuation: Mapping[str, Fraction]) -> bool:
    """Exact truth value at a rational point (quantifier-free only)."""
    if isinstance(f, Bool):
        return f.value
    if isinstance(f, Cmp):
        v = f.term.eval(valuation)
        return _compare(v, f.op, exact=True)
    if isinstance(f, And):
        return eval_formula(f.left, valuation) and eval_formula(f.right, valuation)
    if isinstance(f, Or):
        return eval_formula(f.left, valuation) or eval_formula(f.right, valuation)
    if isinstance(f, Implies):
        return (not eval_formula(f.left, valuation)) or eval_formula(f.right, valuation)
    if isinstance(f, Not):
        return not eval_formula(f.body, valuation)
    raise ValueError("cannot evaluate a quantified formula at a point")


def eval_formula_float(f: Formula, env: Mapping[str, float], tol: float) -> bool:
    """Float truth value with tolerance: weak atoms get slack, strict atoms need margin."""
    if isinstance(f, Bool):
        return f.value
    if isinstance(f, Cmp):
        v = f.term.eval_float(env)
        return _compare(v, f.op, exact=False, tol=tol)
    if isinstance(f, And):
        return eval_formula_float(f.left, env, tol) and eval_formula_float(f.right, env, tol)
    if isinstance(f, Or):
        return eval_formula_float(f.left, env, tol) or eval_formula_float(f.right, env, tol)
    if isinstance(f, Implies):
        return (not eval_formula_float(f.left, env, tol)) or eval_formula_float(f.right, env, tol)
    if isinstance(f, Not):
        return not eval_formula_float(f.body, env, tol)
    raise ValueError("cannot evaluate a quantified formula at a point")


def _compare(v, op, exact: bool, tol: float = 0.0):
    if exact:
        return {
            "=": v == 0,
            "!=": v != 0,
            ">=": v >= 0,
            ">": v > 0,
            "<=": v <= 0,
            "<": v < 0,
        }[op]
    return {
        "=": abs(v) <= tol,
        "!=": abs(v) > tol,
        ">=": v >= -tol,
        ">": v > tol,
        "<=": v <= tol,
        "<": v < -tol,
    }[op]


def float_fn(f: Formula, variables: Sequence[str], tol: float):
    """Compiled point-evaluator (tolerance semantics as in eval_formula_float)."""
    variables = tuple(variables)

    def expr(g: Formula) -> str:
        if isinstance(g, Bool):
            return "True" if g.value else "False"
        if isinstance(g, Cmp):
            e = g.term.float_expr()
            return {
                "=": f"(abs({e}) <= {tol!r})",
                "!=": f"(abs({e}) > {tol!r})",
                ">=": f"({e} >= {-tol!r})",
                ">": f"({e} > {tol!r})",
                "<=": f"({e} <= {tol!r})",
                "<": f"({e} < {-tol!r})",
            }[g.op]
        if isinstance(g, And):
            return f"({expr(g.left)} and {expr(g.right)})"
        if isinstance(g, Or):
            return f"({expr(g.left)} or {expr(g.right)})"
        if isinstance(g, Implies):
            return f"((not {expr(g.left)}) or {expr(g.right)})"
        if isinstance(g, Not):
            return f"(not {expr(g.body)})"
        raise ValueError("cannot compile a quantified formula")

    args = ", ".join(variables) if variables else "*_ignored"
    return eval(f"lambda {args}: {expr(f)}")  # noqa: S307 - generated from exact terms


# ---------------------------------------------------------------------------
# Parser
# ---------------------------------------------------------------------------
#
#   formula := implied
#   implied := disj ('->' implied)?
#   disj    := conj ('|' conj)*
#   conj    := unary ('&' unary)*
#   unary   := '!' unary | quantifier | '(' formula ')' | comparison | true | false
#   quantifier := ('forall'|'exists') IDENT '.' formula

def parse_formula(text: str, variables: Sequence[str]) -> Formula:
    lx = Lexer(text)
    f = _parse_formula(lx, tuple(variables))
    if not lx.done():
        _, got, pos = lx.peek()
        raise ParseError(f"trailing input {got!r}", pos)
    return f


def _parse_formula(lx: Lexer, variables) -> Formula:
    left = _parse_disj(lx, variables)
    if lx.accept("->"):
        return f_implies(left, _parse_formula(lx, variables))
    return left


def _parse_disj(lx: Lexer, variables) -> Formula:
    f = _parse_conj(lx, variables)
    while lx.accept("|"):
        f = f_or(f, _parse_conj(lx, variables))
    return f


def _parse_conj(lx: Lexer, variables) -> Formula:
    f = _parse_unary(lx, variables)
    while lx.accept("&"):
        f = f_and(f, _parse_unary(lx, variables))
    return f


def _parse_unary(lx: Lexer, variables) -> Formula:
    kind, text, pos = lx.peek()
    if lx.accept("!"):
        return f_not(_parse_unary(lx, variables))
    if text in ("forall", "exists") and kind == "ident":
        lx.next()
        _, var, _ = lx.expect_kind("ident")
        lx.expect(".")
        body = _parse_formula(lx, variables)
        return Forall(var, body) if text == "forall" else Exists(var, body)
    if text == "true" and kind == "ident":
        lx.next()
        return TRUE
    if text == "false" and kind == "ident":
        lx.next()
        return FALSE
    if lx.at("("):
        # Parenthesis may open a formula or a term; try formula first.
        saved = lx.pos
        lx.next()
        try:
            f = _parse_formula(lx, variables)
            lx.expect(")")
        except ParseError:
            lx.pos = saved
            return _parse_comparison(lx, variables)
        kind, nxt, _ = lx.peek()
        if nxt in CMP_OPS:
            lx.pos = saved
            return _parse_comparison(lx, variables)
        return f
    return _parse_comparison(lx, variables)


def _parse_comparison(lx: Lexer, variables) -> Formula:
    lhs = _parse_expr(lx, variables)
    kind, op, pos = lx.peek()
    if op not in CMP_OPS:
        raise ParseError(f"expected comparison operator, found {op!r}", pos)
    lx.next()
    rhs = _parse_expr(lx, variables)
    return atom(lhs - rhs, op)


def print_formula(f: Formula) -> str:
    """Canonical text; parses back to an equal formula."""
    return _print(f, 0)


def _print(f: Formula, prec: int) -> str:
    # precedence levels: implies 1, or 2, and 3, unary 4
    if isinstance(f, Bool):
        return str(f)
    if isinstance(f, Cmp):
        return f"{f.term} {f.op} 0"
    if isinstance(f, Implies):
        s = f"{_print(f.left, 2)} -> {_print(f.right, 1)}"
        return f"({s})" if prec > 1 else s
    if isinstance(f, Or):
        s = f"{_print(f.left, 2)} | {_print(f.right, 3)}"
        return f"({s})" if prec > 2 else s
    if isinstance(f, And):
        s = f"{_print(f.left, 3)} & {_print(f.right, 4)}"
        return f"({s})" if prec > 3 else s
    if isinstance(f, Not):
        return f"!({_print(f.body, 0)})"
    if isinstance(f, Forall):
        s = f"forall {f.var}. ({_print(f.body, 0)})"
        return f"({s})" if prec > 1 else s
    if isinstance(f, Exists):
        s = f"exists {f.var}. ({_print(f.body, 0)})"
        return f"({s})" if prec > 1 else s
    raise TypeError(type(f))
