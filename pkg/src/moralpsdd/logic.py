"""Propositional formulas, the prefix constraint notation, and scenarios.

Constraint strings use a prefix form with parenthesised arguments::

    =(&(A,B),C)      (A and B) iff C
    >(A,B)           A implies B
    |(A,B,C)         n-ary or
    &(A,B)           n-ary and
    !(A)             negation

Whitespace is ignored. Atoms are identifiers naming declared variables.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from itertools import combinations
from typing import Iterable, Mapping, Sequence

from .errors import ParseError, UndeclaredVariableError

_IDENT = re.compile(r"[A-Za-z_][A-Za-z0-9_]*")


# ---------------------------------------------------------------------------
# AST
# ---------------------------------------------------------------------------


class Formula:
    __slots__ = ()

    def atoms(self) -> frozenset:
        out = set()
        stack = [self]
        while stack:
            f = stack.pop()
            if isinstance(f, Atom):
                out.add(f.name)
            else:
                stack.extend(f.children())
        return frozenset(out)

    def children(self) -> tuple:
        return ()

    def size(self) -> int:
        """Number of connectives."""
        return sum(1 for _ in _walk(self) if not isinstance(_, Atom))

    def __str__(self):
        return to_text(self)


@dataclass(frozen=True)
class Atom(Formula):
    name: str


@dataclass(frozen=True)
class Not(Formula):
    arg: Formula

    def children(self):
        return (self.arg,)


@dataclass(frozen=True)
class And(Formula):
    args: tuple

    def children(self):
        return self.args


@dataclass(frozen=True)
class Or(Formula):
    args: tuple

    def children(self):
        return self.args


@dataclass(frozen=True)
class Implies(Formula):
    lhs: Formula
    rhs: Formula

    def children(self):
        return (self.lhs, self.rhs)


@dataclass(frozen=True)
class Iff(Formula):
    lhs: Formula
    rhs: Formula

    def children(self):
        return (self.lhs, self.rhs)


def _walk(f):
    stack = [f]
    while stack:
        g = stack.pop()
        yield g
        stack.extend(g.children())


def conj(*args: Formula) -> Formula:
    return args[0] if len(args) == 1 else And(tuple(args))


def disj(*args: Formula) -> Formula:
    return args[0] if len(args) == 1 else Or(tuple(args))


def exactly_one(names: Sequence[str]) -> list[Formula]:
    """Clauses forcing exactly one of ``names`` to hold."""
    out: list[Formula] = [disj(*(Atom(n) for n in names))]
    for a, b in combinations(names, 2):
        out.append(Not(And((Atom(a), Atom(b)))))
    return out


# ---------------------------------------------------------------------------
# Printing and parsing
# ---------------------------------------------------------------------------

_SYMBOL = {Not: "!", And: "&", Or: "|", Implies: ">", Iff: "="}


def to_text(f: Formula) -> str:
    if isinstance(f, Atom):
        return f.name
    return _SYMBOL[type(f)] + "(" + ",".join(to_text(c) for c in f.children()) + ")"


class _Parser:
    def __init__(self, text: str, declared):
        self.text = text
        self.pos = 0
        self.declared = declared

    def fail(self, msg, pos=None):
        raise ParseError(msg, self.pos if pos is None else pos, self.text)

    def skip(self):
        while self.pos < len(self.text) and self.text[self.pos].isspace():
            self.pos += 1

    def expect(self, ch):
        self.skip()
        if self.pos >= len(self.text) or self.text[self.pos] != ch:
            found = self.text[self.pos] if self.pos < len(self.text) else "end of input"
            self.fail(f"expected {ch!r}, found {found!r}")
        self.pos += 1

    def formula(self) -> Formula:
        self.skip()
        if self.pos >= len(self.text):
            self.fail("unexpected end of input")
        ch = self.text[self.pos]
        if ch in "!&|>=":
            start = self.pos
            self.pos += 1
            self.expect("(")
            args = [self.formula()]
            self.skip()
            while self.pos < len(self.text) and self.text[self.pos] == ",":
                self.pos += 1
                args.append(self.formula())
                self.skip()
            self.expect(")")
            if ch == "!":
                if len(args) != 1:
                    self.fail("'!' takes exactly one argument", start)
                return Not(args[0])
            if ch in ">=":
                if len(args) != 2:
                    self.fail(f"{ch!r} takes exactly two arguments", start)
                return (Implies if ch == ">" else Iff)(args[0], args[1])
            if len(args) == 1:
                return args[0]
            return (And if ch == "&" else Or)(tuple(args))
        m = _IDENT.match(self.text, self.pos)
        if not m:
            self.fail(f"unexpected character {ch!r}")
        name = m.group(0)
        if self.declared is not None and name not in self.declared:
            raise UndeclaredVariableError(
                f"undeclared variable {name!r}", self.pos, self.text
            )
        self.pos = m.end()
        return Atom(name)


def parse_formula(text: str, scenario: "Scenario | Iterable[str] | None" = None) -> Formula:
    """Parse a constraint string.

    ``scenario`` may be a :class:`Scenario`, any collection of variable names,
    or None to accept every identifier.
    """
    if isinstance(scenario, Scenario):
        declared = frozenset(scenario.variables)
    elif scenario is None:
        declared = None
    else:
        declared = frozenset(scenario)
    p = _Parser(text, declared)
    f = p.formula()
    p.skip()
    if p.pos != len(text):
        p.fail("trailing input")
    return f


# ---------------------------------------------------------------------------
# Evaluation
# ---------------------------------------------------------------------------


def eval_formula(f: Formula, w: Mapping[str, int]) -> bool:
    """Truth value of ``f`` under the assignment ``w``.

    Raises KeyError naming the atom when ``w`` leaves an atom of ``f`` unset.
    """
    if isinstance(f, Atom):
        try:
            return bool(w[f.name])
        except KeyError:
            raise KeyError(f"unassigned variable {f.name!r}") from None
    if isinstance(f, Not):
        return not eval_formula(f.arg, w)
    if isinstance(f, And):
        return all(eval_formula(a, w) for a in f.args)
    if isinstance(f, Or):
        return any(eval_formula(a, w) for a in f.args)
    if isinstance(f, Implies):
        return (not eval_formula(f.lhs, w)) or eval_formula(f.rhs, w)
    if isinstance(f, Iff):
        return eval_formula(f.lhs, w) == eval_formula(f.rhs, w)
    raise TypeError(f"not a formula: {f!r}")


# ---------------------------------------------------------------------------
# Scenarios
# ---------------------------------------------------------------------------

CONTEXT, DECISION, OUTCOME = "context", "decision", "outcome"
ROLES = (CONTEXT, DECISION, OUTCOME)


@dataclass(frozen=True)
class Action:
    """One value of an action variable: an assignment to its indicator group."""

    group: tuple
    assignment: tuple  # ((var, bit), ...)

    @property
    def label(self) -> str:
        if len(self.group) == 1:
            var, bit = self.assignment[0]
            return var if bit else "!" + var
        return next(v for v, b in self.assignment if b)

    def as_dict(self) -> dict:
        return dict(self.assignment)

    def __str__(self):
        return self.label


@dataclass(frozen=True)
class Scenario:
    """Named boolean variables with a context/decision/outcome partition.

    ``onehot`` groups carry exactly-one semantics that are added to the
    theory. ``action_groups`` are the action variables: a one-hot decision
    group, or a single binary decision variable whose two values are the
    literal and its negation.
    """

    variables: tuple
    roles: Mapping[str, str]
    onehot: tuple = ()
    action_groups: tuple = ()
    constraints: tuple = ()
    name: str = "scenario"
    _index: dict = field(default=None, compare=False, repr=False)

    def __post_init__(self):
        if len(set(self.variables)) != len(self.variables):
            raise ParseError("duplicate variable declaration")
        object.__setattr__(self, "_index", {v: i for i, v in enumerate(self.variables)})
        for v in self.variables:
            if self.roles.get(v) not in ROLES:
                raise ParseError(f"variable {v!r} has no partition tag")
        if set(self.roles) != set(self.variables):
            raise ParseError("partition tags name undeclared variables")
        for g in self.onehot:
            missing = [v for v in g if v not in self._index]
            if missing:
                raise UndeclaredVariableError(f"one-hot group names undeclared {missing}")
            if len(g) < 2:
                raise ParseError(f"one-hot group {list(g)} needs at least two variables")
            if len({self.roles[v] for v in g}) != 1:
                raise ParseError(f"one-hot group {list(g)} spans partition cells")
        groups = {tuple(g) for g in self.onehot}
        for g in self.action_groups:
            for v in g:
                if v not in self._index:
                    raise UndeclaredVariableError(f"action group names undeclared {v!r}")
                if self.roles[v] != DECISION:
                    raise ParseError(f"action variable {v!r} is not a decision")
            if len(g) > 1 and tuple(g) not in groups:
                raise ParseError(f"action group {list(g)} is not a declared one-hot group")
        for c in self.constraints:
            extra = c.atoms() - set(self.variables)
            if extra:
                raise UndeclaredVariableError(f"constraint mentions undeclared {sorted(extra)}")

    # -- partition ---------------------------------------------------------
    def _cell(self, role):
        return tuple(v for v in self.variables if self.roles[v] == role)

    @property
    def contexts(self) -> tuple:
        return self._cell(CONTEXT)

    @property
    def decisions(self) -> tuple:
        return self._cell(DECISION)

    @property
    def outcomes(self) -> tuple:
        """Outcome variables; decisions double as outcomes when none are declared."""
        return self._cell(OUTCOME) or self.decisions

    def index(self, var: str) -> int:
        return self._index[var]

    def __contains__(self, var):
        return var in self._index

    # -- theory ------------------------------------------------------------
    def theory(self) -> list:
        """Declared constraints plus exactly-one clauses for every one-hot group."""
        out = list(self.constraints)
        for g in self.onehot:
            out.extend(exactly_one(g))
        return out

    def satisfies(self, w: Mapping[str, int]) -> bool:
        return all(eval_formula(c, w) for c in self.theory())

    # -- actions -----------------------------------------------------------
    def actions(self, group: Sequence[str]) -> list:
        group = tuple(group)
        if len(group) == 1:
            v = group[0]
            return [Action(group, ((v, 1),)), Action(group, ((v, 0),))]
        return [
            Action(group, tuple((u, int(u == v)) for u in group)) for v in group
        ]

    def action(self, label: str) -> Action:
        """Resolve ``F`` (one-hot indicator), ``M`` or ``!M`` (binary group)."""
        label = label.strip()
        neg = label.startswith("!")
        name = label[1:].strip() if neg else label
        if name.startswith("(") and name.endswith(")"):
            name = name[1:-1].strip()
        for g in self.action_groups:
            if name in g:
                if len(g) == 1:
                    return Action(tuple(g), ((name, 0 if neg else 1),))
                if neg:
                    break
                return Action(tuple(g), tuple((u, int(u == name)) for u in g))
        from .errors import QueryError

        raise QueryError(f"{label!r} is not an action of any declared action group")

    def group_of(self, var: str):
        for g in self.action_groups:
            if var in g:
                return tuple(g)
        return None


def parse_scenario(text: str, name: str | None = None) -> Scenario:
    """Read a scenario description.

    Line-oriented; ``#`` starts a comment. Keywords::

        name <identifier>
        context|decision|outcome <var> <var> ...
        onehot <var> <var> ...
        action <var> [<var> ...]
        constraint <formula>
    """
    variables: list[str] = []
    roles: dict[str, str] = {}
    onehot: list[tuple] = []
    actions: list[tuple] = []
    raw_constraints: list[tuple[int, str]] = []
    scen_name = name
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        key, _, rest = line.partition(" ")
        rest = rest.strip()
        if key in ROLES:
            for v in rest.split():
                if not _IDENT.fullmatch(v):
                    raise ParseError(f"line {lineno}: bad variable name {v!r}")
                if v in roles:
                    raise ParseError(f"line {lineno}: variable {v!r} declared twice")
                variables.append(v)
                roles[v] = key
        elif key == "onehot":
            onehot.append(tuple(rest.split()))
        elif key == "action":
            actions.append(tuple(rest.split()))
        elif key == "constraint":
            raw_constraints.append((lineno, rest))
        elif key == "name":
            scen_name = scen_name or rest
        else:
            raise ParseError(f"line {lineno}: unknown keyword {key!r}")
    declared = frozenset(variables)
    constraints = []
    for lineno, text_c in raw_constraints:
        try:
            constraints.append(parse_formula(text_c, declared))
        except ParseError as e:
            e.args = (f"line {lineno}: {e.args[0]}",)
            raise
    return Scenario(
        variables=tuple(variables),
        roles=roles,
        onehot=tuple(onehot),
        action_groups=tuple(actions),
        constraints=tuple(constraints),
        name=scen_name or "scenario",
    )


def scenario_to_text(s: Scenario) -> str:
    lines = [f"name {s.name}"]
    # consecutive runs keep declaration order intact
    run: list[str] = []
    for v in s.variables:
        if run and s.roles[run[0]] != s.roles[v]:
            lines.append(f"{s.roles[run[0]]} " + " ".join(run))
            run = []
        run.append(v)
    if run:
        lines.append(f"{s.roles[run[0]]} " + " ".join(run))
    for g in s.onehot:
        lines.append("onehot " + " ".join(g))
    for g in s.action_groups:
        lines.append("action " + " ".join(g))
    for c in s.constraints:
        lines.append("constraint " + to_text(c))
    return "\n".join(lines) + "\n"
