"""Switched systems: mode families, switching mechanisms, signals, program encodings."""

from __future__ import annotations

from dataclasses import dataclass, field as dc_field
from fractions import Fraction
from typing import Optional, Sequence

from .decide import Verdict
from .formulas import (
    TRUE,
    Formula,
    _parse_formula,
    atom,
    f_and,
    formula_with_vars,
    is_quantifier_free,
    print_formula,
)
from .programs import (
    Assign,
    Choice,
    HybridProgram,
    Loop,
    Ode,
    Seq,
    Test,
    assigned_vars,
    choice_of,
    if_then,
    parse_program,
    print_program,
    program_vars,
    program_with_vars,
    seq_of,
)
from .terms import Lexer, ParseError, Term, VectorField, _parse_expr, parse_rational

_KEYWORDS = {
    "vars", "mode", "ode", "domain", "mechanism", "arbitrary", "state", "slow",
    "fast", "controlled", "init", "ctrl", "tau", "true", "false", "forall",
    "exists", "if",
}


# ---------------------------------------------------------------------------
# Mechanisms
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Arbitrary:
    pass


@dataclass(frozen=True)
class StateDependent:
    pass


@dataclass(frozen=True)
class Slow:
    tau: Fraction

    def __post_init__(self):
        object.__setattr__(self, "tau", Fraction(self.tau))
        if self.tau <= 0:
            raise ValueError("dwell time must be positive")


@dataclass(frozen=True)
class Fast:
    durations: tuple

    def __post_init__(self):
        object.__setattr__(self, "durations", tuple(Fraction(z) for z in self.durations))
        if any(z <= 0 for z in self.durations):
            raise ValueError("cycle durations must be positive")


@dataclass(frozen=True)
class Controlled:
    init: HybridProgram
    controller: HybridProgram


# ---------------------------------------------------------------------------
# Modes and systems
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Mode:
    id: str
    field: VectorField
    domain: Formula = TRUE

    def __post_init__(self):
        if not is_quantifier_free(self.domain):
            raise ValueError(f"mode {self.id}: domain must be quantifier-free")


def aux_names(state_vars: Sequence[str]) -> tuple[str, str]:
    """Clock and flag names, fresh with respect to the state variables."""
    clock, flag = "t", "u"
    while clock in state_vars:
        clock += "0"
    while flag in state_vars:
        flag += "0"
    return clock, flag


@dataclass(frozen=True)
class SwitchedSystem:
    variables: tuple
    modes: tuple
    mechanism: object = dc_field(default_factory=Arbitrary)

    def __post_init__(self):
        object.__setattr__(self, "variables", tuple(self.variables))
        object.__setattr__(self, "modes", tuple(self.modes))
        if not self.modes:
            raise ValueError("a switched system needs at least one mode")
        ids = [m.id for m in self.modes]
        if len(set(ids)) != len(ids):
            raise ValueError("duplicate mode ids")
        for m in self.modes:
            if tuple(m.field.names) != self.variables:
                raise ValueError(f"mode {m.id}: ODE must define exactly the state variables")
        mech = self.mechanism
        if isinstance(mech, Fast) and len(mech.durations) != len(self.modes):
            raise ValueError("fast switching needs one duration per mode")
        if isinstance(mech, Controlled):
            for prog, label in ((mech.init, "init"), (mech.controller, "controller")):
                bad = assigned_vars(prog) & set(self.variables)
                if bad:
                    raise ValueError(f"{label} program assigns state variables {sorted(bad)}")

    @property
    def mode_ids(self):
        return tuple(m.id for m in self.modes)

    def mode(self, mode_id: str) -> Mode:
        for m in self.modes:
            if m.id == mode_id:
                return m
        raise KeyError(mode_id)

    def mode_index(self, mode_id: str) -> int:
        """1-based index in declaration order (the flag value the encodings use)."""
        return self.mode_ids.index(mode_id) + 1

    def aux(self) -> tuple[str, str]:
        return aux_names(self.variables)

    def program(self) -> HybridProgram:
        mech = self.mechanism
        if isinstance(mech, Arbitrary):
            return build_arbitrary(self.modes)
        if isinstance(mech, StateDependent):
            return build_state(self.modes)
        if isinstance(mech, Slow):
            return build_slow(self.modes, mech.tau)
        if isinstance(mech, Fast):
            return build_fast(self.modes, mech.durations)
        if isinstance(mech, Controlled):
            return build_controlled(mech.init, mech.controller, self.modes)
        raise TypeError(type(mech))


# ---------------------------------------------------------------------------
# Program encodings
# ---------------------------------------------------------------------------

def build_arbitrary(modes: Sequence[Mode]) -> HybridProgram:
    """Loop over a free choice among the mode ODEs (no domain constraints)."""
    modes = list(modes)
    if not modes:
        raise ValueError("empty mode list")
    for m in modes:
        if m.domain != TRUE:
            raise ValueError(f"mode {m.id}: arbitrary switching requires trivial domains")
    return Loop(choice_of([Ode(m.field, TRUE) for m in modes]))


def build_state(modes: Sequence[Mode]) -> HybridProgram:
    """Loop over a choice among the mode ODEs, each restricted to its domain."""
    modes = list(modes)
    if not modes:
        raise ValueError("empty mode list")
    return Loop(choice_of([Ode(m.field, m.domain) for m in modes]))


def build_controlled(
    init: HybridProgram, controller: HybridProgram, modes: Sequence[Mode]
) -> HybridProgram:
    """init; { controller; U_p ( ?flag=p; {x'=f_p, clock'=1 & Q_p} ) }*"""
    modes = list(modes)
    if not modes:
        raise ValueError("empty mode list")
    state_vars = tuple(modes[0].field.names)
    clock, flag = aux_names(state_vars)
    extra = (program_vars(init) | program_vars(controller) | {clock, flag}) - set(state_vars)
    universe = state_vars + tuple(sorted(extra))
    for prog, label in ((init, "init"), (controller, "controller")):
        bad = assigned_vars(prog) & set(state_vars)
        if bad:
            raise ValueError(f"{label} program assigns state variables {sorted(bad)}")
    init = program_with_vars(init, universe)
    controller = program_with_vars(controller, universe)
    one = Term.constant(universe, 1)
    flag_t = Term.variable(universe, flag)
    branches = []
    for i, m in enumerate(modes):
        comps = [(n, t.with_vars(universe)) for n, t in m.field.components]
        comps.append((clock, one))
        guard = Test(atom(flag_t - (i + 1), "="))
        branches.append(Seq(guard, Ode(VectorField(comps), formula_with_vars(m.domain, universe))))
    body = Seq(controller, choice_of(branches))
    return Seq(init, Loop(body))


def slow_components(modes: Sequence[Mode], tau) -> tuple[HybridProgram, HybridProgram]:
    """Reset program and dwell-guarded controller for minimum-dwell switching."""
    tau = Fraction(tau)
    state_vars = tuple(modes[0].field.names)
    clock, flag = aux_names(state_vars)
    universe = state_vars + tuple(sorted((clock, flag)))
    zero = Term.constant(universe, 0)
    clock_t = Term.variable(universe, clock)
    reset = Seq(
        Assign(clock, zero),
        choice_of([Assign(flag, Term.constant(universe, i + 1)) for i in range(len(modes))]),
    )
    controller = if_then(atom(clock_t - tau, ">="), reset)
    return reset, controller


def build_slow(modes: Sequence[Mode], tau) -> HybridProgram:
    """Minimum-dwell switching: a reset may pick a new mode only after `tau` has elapsed."""
    tau = Fraction(tau)
    if tau <= 0:
        raise ValueError("dwell time must be positive")
    modes = list(modes)
    if not modes:
        raise ValueError("empty mode list")
    for m in modes:
        if m.domain != TRUE:
            raise ValueError(f"mode {m.id}: dwell-time switching requires trivial domains")
    reset, controller = slow_components(modes, tau)
    return build_controlled(reset, controller, modes)


def fast_components(modes: Sequence[Mode], durations) -> tuple[HybridProgram, HybridProgram, list[Mode]]:
    """Init, cyclic controller, and duration-limited modes for periodic switching."""
    durations = tuple(Fraction(z) for z in durations)
    state_vars = tuple(modes[0].field.names)
    clock, flag = aux_names(state_vars)
    universe = state_vars + tuple(sorted((clock, flag)))
    m = len(modes)
    zero = Term.constant(universe, 0)
    one = Term.constant(universe, 1)
    clock_t = Term.variable(universe, clock)
    flag_t = Term.variable(universe, flag)
    init = Seq(Assign(clock, zero), Assign(flag, one))
    branches = []
    for i, z in enumerate(durations):
        fire = f_and_pair(atom(flag_t - (i + 1), "="), atom(clock_t - z, "="))
        advance = seq_of(
            [
                Assign(clock, zero),
                Assign(flag, flag_t + one),
                if_then(atom(flag_t - m, ">"), Assign(flag, one)),
            ]
        )
        branches.append(if_then(fire, advance))
    controller = choice_of(branches)
    limited = [
        Mode(mode.id, mode.field, atom(clock_t - z, "<="))
        for mode, z in zip(modes, durations)
    ]
    return init, controller, limited


def f_and_pair(a: Formula, b: Formula) -> Formula:
    from .formulas import f_and

    return f_and(a, b)


def build_fast(modes: Sequence[Mode], durations) -> HybridProgram:
    """Periodic switching in declaration order, phase p lasting exactly durations[p]."""
    modes = list(modes)
    if not modes:
        raise ValueError("empty mode list")
    durations = tuple(Fraction(z) for z in durations)
    if len(durations) != len(modes):
        raise ValueError("need one duration per mode")
    if any(z <= 0 for z in durations):
        raise ValueError("cycle durations must be positive")
    init, controller, limited = fast_components(modes, durations)
    return build_controlled(init, controller, limited)


# ---------------------------------------------------------------------------
# Switching signals
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class SwitchingSignal:
    """Finite prefix of switching times (0 excluded) plus the mode choices.

    choices[i] is active on [times[i-1], times[i]); the last choice is kept
    forever past the stored prefix (extension by repeating the last choice).
    """

    times: tuple
    choices: tuple

    def __post_init__(self):
        object.__setattr__(self, "times", tuple(self.times))
        object.__setattr__(self, "choices", tuple(self.choices))

    def compacted(self) -> "SwitchingSignal":
        """Drop switching points that do not change the active mode."""
        times, choices = [], [self.choices[0]]
        for tau, nxt in zip(self.times, self.choices[1:]):
            if nxt == choices[-1]:
                continue
            times.append(tau)
            choices.append(nxt)
        return SwitchingSignal(tuple(times), tuple(choices))

    def gaps(self):
        """Durations between consecutive stored switching times (first from 0)."""
        prev = 0
        out = []
        for tau in self.times:
            out.append(tau - prev)
            prev = tau
        return out

    def segments(self, horizon) -> list[tuple[str, float, float]]:
        """(mode, start, duration) covering [0, horizon], extension applied."""
        out = []
        bounds = [0.0] + [float(t) for t in self.times if float(t) < horizon] + [float(horizon)]
        active = list(self.choices[: len(bounds) - 1])
        while len(active) < len(bounds) - 1:
            active.append(self.choices[-1])
        for i in range(len(bounds) - 1):
            out.append((active[i], bounds[i], bounds[i + 1] - bounds[i]))
        return out

    def __str__(self):
        lines = ["0 " + str(self.choices[0])]
        for tau, p in zip(self.times, self.choices[1:]):
            lines.append(f"{tau} {p}")
        return "\n".join(lines) + "\n"


def validate_signal(
    signal: SwitchingSignal,
    horizon,
    system: Optional[SwitchedSystem] = None,
    dwell=None,
) -> Verdict:
    """Well-definedness over [0, horizon]: strictly increasing switch times covering
    the horizon (via the repeat-last extension), known choices, optional dwell gaps."""
    if len(signal.choices) != len(signal.times) + 1:
        return Verdict.falsified_reason("need one more choice than switching times")
    prev = 0
    for tau in signal.times:
        if float(tau) <= float(prev):
            return Verdict.falsified_reason(f"non-increasing switching times at {tau}")
        prev = tau
    if system is not None:
        known = set(system.mode_ids)
        for p in signal.choices:
            if p not in known:
                return Verdict.falsified_reason(f"unknown mode {p!r}")
    if dwell is not None:
        compact = signal.compacted()
        for i, g in enumerate(compact.gaps()):
            if float(g) < float(dwell) - 1e-9:
                return Verdict.falsified_reason(
                    f"dwell violation: gap {g} before switch {i + 1} is below {dwell}"
                )
    return Verdict.valid(f"prefix of {len(signal.times)} switches covers horizon {horizon}")


# ---------------------------------------------------------------------------
# Model file format
# ---------------------------------------------------------------------------

def parse_model(text: str) -> SwitchedSystem:
    lx = Lexer(text)
    lx.expect("vars")
    variables = []
    while not lx.at(";"):
        _, name, pos = lx.expect_kind("ident")
        if name in _KEYWORDS:
            raise ParseError(f"reserved word {name!r} cannot be a variable", pos)
        variables.append(name)
    lx.expect(";")
    if not variables:
        raise ParseError("no state variables declared", 0)
    variables = tuple(variables)

    modes = []
    while lx.at("mode"):
        modes.append(_parse_mode(lx, variables))
    lx.expect("mechanism")
    mech = _parse_mechanism(lx, variables)
    lx.expect(";")
    if not lx.done():
        _, got, pos = lx.peek()
        raise ParseError(f"trailing input {got!r}", pos)
    return SwitchedSystem(variables, tuple(modes), mech)


def _parse_mode(lx: Lexer, variables) -> Mode:
    lx.expect("mode")
    _, name, _ = lx.expect_kind("ident")
    lx.expect("{")
    lx.expect("ode")
    comps = []
    while True:
        _, var, pos = lx.expect_kind("ident")
        if var not in variables:
            raise ParseError(f"unknown variable {var!r}", pos)
        lx.expect("'")
        lx.expect("=")
        comps.append((var, _parse_expr(lx, variables)))
        if not lx.accept(","):
            break
    lx.expect(";")
    domain = TRUE
    if lx.accept("domain"):
        domain = _parse_formula(lx, variables)
        lx.expect(";")
    lx.expect("}")
    order = {v: i for i, v in enumerate(variables)}
    comps.sort(key=lambda c: order[c[0]])
    return Mode(name, VectorField(comps), domain)


def _parse_mechanism(lx: Lexer, variables):
    kind, word, pos = lx.expect_kind("ident")
    if word == "arbitrary":
        return Arbitrary()
    if word == "state":
        return StateDependent()
    if word == "slow":
        lx.expect("(")
        lx.expect("tau")
        lx.expect("=")
        tau = parse_rational(lx)
        lx.expect(")")
        return Slow(tau)
    if word == "fast":
        lx.expect("(")
        durations = [parse_rational(lx)]
        while lx.accept(","):
            durations.append(parse_rational(lx))
        lx.expect(")")
        return Fast(tuple(durations))
    if word == "controlled":
        lx.expect("(")
        lx.expect("init")
        init_text = _brace_text(lx)
        lx.expect("ctrl")
        ctrl_text = _brace_text(lx)
        lx.expect(")")
        universe = _program_universe(variables, init_text + " ; " + ctrl_text)
        return Controlled(
            parse_program(init_text, universe), parse_program(ctrl_text, universe)
        )
    raise ParseError(f"unknown mechanism {word!r}", pos)


def _brace_text(lx: Lexer) -> str:
    """Consume a balanced `{ ... }` group and return the inner source text."""
    _, _, start = lx.peek()
    lx.expect("{")
    depth = 1
    inner_start = lx.peek()[2]
    end = inner_start
    while depth:
        kind, tok, pos = lx.next()
        if kind == "eof":
            raise ParseError("unbalanced braces", start)
        if tok == "{":
            depth += 1
        elif tok == "}":
            depth -= 1
            end = pos
    return lx.text[inner_start:end]


def _program_universe(state_vars, text) -> tuple:
    """State variables plus every auxiliary identifier the program mentions."""
    aux = set()
    probe = Lexer(text)
    while not probe.done():
        kind, tok, _ = probe.next()
        if kind == "ident" and tok not in state_vars and tok not in _KEYWORDS:
            aux.add(tok)
    return tuple(state_vars) + tuple(sorted(aux))


def print_model(system: SwitchedSystem) -> str:
    lines = ["vars " + " ".join(system.variables) + ";"]
    for m in system.modes:
        lines.append(f"mode {m.id} {{")
        lines.append(f"  ode {m.field};")
        if m.domain != TRUE:
            lines.append(f"  domain {print_formula(m.domain)};")
        lines.append("}")
    mech = system.mechanism
    if isinstance(mech, Arbitrary):
        lines.append("mechanism arbitrary;")
    elif isinstance(mech, StateDependent):
        lines.append("mechanism state;")
    elif isinstance(mech, Slow):
        lines.append(f"mechanism slow(tau={mech.tau});")
    elif isinstance(mech, Fast):
        lines.append("mechanism fast(" + ", ".join(str(z) for z in mech.durations) + ");")
    elif isinstance(mech, Controlled):
        lines.append(
            "mechanism controlled(init { "
            + print_program(mech.init)
            + " } ctrl { "
            + print_program(mech.controller)
            + " });"
        )
    else:
        raise TypeError(type(mech))
    return "\n".join(lines) + "\n"


# ---------------------------------------------------------------------------
# Signal file format: one `time mode` pair per line, first line at time 0.
# ---------------------------------------------------------------------------

def parse_signal(text: str) -> SwitchingSignal:
    times, choices = [], []
    for raw in text.splitlines():
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        parts = line.split()
        if len(parts) != 2:
            raise ParseError(f"expected 'time mode', got {raw!r}", 0)
        when = parse_rational(Lexer(parts[0]))
        if not choices:
            if when != 0:
                raise ParseError("signal must start at time 0", 0)
        else:
            times.append(when)
        choices.append(parts[1])
    if not choices:
        raise ParseError("empty signal", 0)
    return SwitchingSignal(tuple(times), tuple(choices))


def print_signal(signal: SwitchingSignal) -> str:
    return str(signal)
