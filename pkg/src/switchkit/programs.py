"""Hybrid program AST: assignments, tests, ODEs with domains, sequence, choice, loop."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

from .formulas import (
    TRUE,
    Formula,
    _parse_formula,
    f_not,
    formula_atoms,
    formula_with_vars,
    print_formula,
)
from .terms import Lexer, ParseError, Term, VectorField, _parse_expr


@dataclass(frozen=True)
class HybridProgram:
    pass


@dataclass(frozen=True)
class Assign(HybridProgram):
    var: str
    term: Term

    def __str__(self):
        return f"{self.var} := {self.term}"


@dataclass(frozen=True)
class Test(HybridProgram):
    condition: Formula

    def __str__(self):
        return f"?({print_formula(self.condition)})"


@dataclass(frozen=True)
class Ode(HybridProgram):
    field: VectorField
    domain: Formula = TRUE

    def __str__(self):
        if self.domain == TRUE:
            return "{" + str(self.field) + "}"
        return "{" + f"{self.field} & {print_formula(self.domain)}" + "}"


@dataclass(frozen=True)
class Seq(HybridProgram):
    first: HybridProgram
    second: HybridProgram


@dataclass(frozen=True)
class Choice(HybridProgram):
    left: HybridProgram
    right: HybridProgram


@dataclass(frozen=True)
class Loop(HybridProgram):
    body: HybridProgram


def seq_of(programs: Sequence[HybridProgram]) -> HybridProgram:
    """Right-associated sequential composition."""
    programs = list(programs)
    if not programs:
        raise ValueError("empty sequence")
    out = programs[-1]
    for p in reversed(programs[:-1]):
        out = Seq(p, out)
    return out


def choice_of(programs: Sequence[HybridProgram]) -> HybridProgram:
    """Right-associated nondeterministic choice."""
    programs = list(programs)
    if not programs:
        raise ValueError("empty choice")
    out = programs[-1]
    for p in reversed(programs[:-1]):
        out = Choice(p, out)
    return out


def if_then(cond: Formula, body: HybridProgram) -> HybridProgram:
    """Single-sided conditional: (?cond; body) ++ ?!cond."""
    return Choice(Seq(Test(cond), body), Test(f_not(cond)))


def flatten_choice(p: HybridProgram) -> list[HybridProgram]:
    out: list[HybridProgram] = []
    stack = [p]
    while stack:
        node = stack.pop()
        if isinstance(node, Choice):
            stack.append(node.right)
            stack.append(node.left)
        else:
            out.append(node)
    return out


def flatten_seq(p: HybridProgram) -> list[HybridProgram]:
    out: list[HybridProgram] = []
    stack = [p]
    while stack:
        node = stack.pop()
        if isinstance(node, Seq):
            stack.append(node.second)
            stack.append(node.first)
        else:
            out.append(node)
    return out


def assigned_vars(p: HybridProgram) -> set[str]:
    """Variables written by discrete assignments anywhere in the program."""
    if isinstance(p, Assign):
        return {p.var}
    if isinstance(p, (Test, Ode)):
        return set()
    if isinstance(p, (Seq, Choice)):
        return assigned_vars(p.left if isinstance(p, Choice) else p.first) | assigned_vars(
            p.right if isinstance(p, Choice) else p.second
        )
    if isinstance(p, Loop):
        return assigned_vars(p.body)
    raise TypeError(type(p))


def program_vars(p: HybridProgram) -> set[str]:
    if isinstance(p, Assign):
        return {p.var} | {v for v in p.term.vars if p.term.mentions(v)}
    if isinstance(p, Test):
        return {v for a in formula_atoms(p.condition) for v in a.term.vars if a.term.mentions(v)}
    if isinstance(p, Ode):
        out = set(p.field.names)
        for _, rhs in p.field.components:
            out |= {v for v in rhs.vars if rhs.mentions(v)}
        out |= {v for a in formula_atoms(p.domain) for v in a.term.vars if a.term.mentions(v)}
        return out
    if isinstance(p, Seq):
        return program_vars(p.first) | program_vars(p.second)
    if isinstance(p, Choice):
        return program_vars(p.left) | program_vars(p.right)
    if isinstance(p, Loop):
        return program_vars(p.body)
    raise TypeError(type(p))


def program_with_vars(p: HybridProgram, variables: Sequence[str]) -> HybridProgram:
    """Re-embed every term and formula into one shared variable tuple."""
    variables = tuple(variables)
    if isinstance(p, Assign):
        return Assign(p.var, p.term.with_vars(variables))
    if isinstance(p, Test):
        return Test(formula_with_vars(p.condition, variables))
    if isinstance(p, Ode):
        field = VectorField((n, t.with_vars(variables)) for n, t in p.field.components)
        return Ode(field, formula_with_vars(p.domain, variables))
    if isinstance(p, Seq):
        return Seq(program_with_vars(p.first, variables), program_with_vars(p.second, variables))
    if isinstance(p, Choice):
        return Choice(program_with_vars(p.left, variables), program_with_vars(p.right, variables))
    if isinstance(p, Loop):
        return Loop(program_with_vars(p.body, variables))
    raise TypeError(type(p))


# ---------------------------------------------------------------------------
# Printing
# ---------------------------------------------------------------------------

def print_program(p: HybridProgram) -> str:
    """Canonical text; parse_program(print_program(p)) == p."""
    if isinstance(p, (Assign, Test, Ode)):
        return str(p)
    if isinstance(p, Seq):
        return "; ".join(print_program(q) for q in flatten_seq(p))
    if isinstance(p, Choice):
        return "{" + " ++ ".join(print_program(q) for q in flatten_choice(p)) + "}"
    if isinstance(p, Loop):
        return "{" + print_program(p.body) + "}*"
    raise TypeError(type(p))


# ---------------------------------------------------------------------------
# Parser
# ---------------------------------------------------------------------------
#
#   program := branch ('++' branch)*          (choice binds weakest)
#   branch  := unit (';' unit)*
#   unit    := IDENT ':=' expr
#            | '?' '(' formula ')' | '?' formula
#            | 'if' '(' formula ')' '{' program '}'
#            | '{' odes ('&' formula)? '}'    (first token IDENT followed by ')
#            | '{' program '}' '*'?
#
# Choice and loop groups are brace-delimited, so round trips are unambiguous.

def parse_program(text: str, variables: Sequence[str]) -> HybridProgram:
    lx = Lexer(text)
    p = _parse_program(lx, tuple(variables))
    if not lx.done():
        _, got, pos = lx.peek()
        raise ParseError(f"trailing input {got!r}", pos)
    return p


def _parse_program(lx: Lexer, variables) -> HybridProgram:
    branches = [_parse_branch(lx, variables)]
    while lx.accept("++"):
        branches.append(_parse_branch(lx, variables))
    return choice_of(branches)


def _parse_branch(lx: Lexer, variables) -> HybridProgram:
    units = [_parse_unit(lx, variables)]
    while lx.accept(";"):
        units.append(_parse_unit(lx, variables))
    return seq_of(units)


def _parse_unit(lx: Lexer, variables) -> HybridProgram:
    kind, text, pos = lx.peek()
    if lx.accept("?"):
        if lx.accept("("):
            f = _parse_formula(lx, variables)
            lx.expect(")")
        else:
            f = _parse_formula(lx, variables)
        return Test(f)
    if kind == "ident" and text == "if":
        lx.next()
        lx.expect("(")
        cond = _parse_formula(lx, variables)
        lx.expect(")")
        lx.expect("{")
        body = _parse_program(lx, variables)
        lx.expect("}")
        return if_then(cond, body)
    if lx.accept("{"):
        k2, t2, _ = lx.peek()
        if k2 == "ident" and lx.peek(1)[1] == "'":
            ode = _parse_ode_body(lx, variables)
            lx.expect("}")
            return ode
        inner = _parse_program(lx, variables)
        lx.expect("}")
        if lx.accept("*"):
            return Loop(inner)
        return inner
    if kind == "ident" and lx.peek(1)[1] == ":=":
        lx.next()
        lx.next()
        term = _parse_expr(lx, variables)
        if text not in variables:
            raise ParseError(f"unknown variable {text!r}", pos)
        return Assign(text, term)
    raise ParseError(f"expected program, found {text!r}", pos)


def _parse_ode_body(lx: Lexer, variables) -> Ode:
    comps = []
    while True:
        _, name, pos = lx.expect_kind("ident")
        if name not in variables:
            raise ParseError(f"unknown variable {name!r}", pos)
        lx.expect("'")
        lx.expect("=")
        rhs = _parse_expr(lx, variables)
        comps.append((name, rhs))
        if not lx.accept(","):
            break
    domain = TRUE
    if lx.accept("&"):
        domain = _parse_formula(lx, variables)
    return Ode(VectorField(comps), domain)
