"""Interventional probabilities, costs and degrees of blameworthiness.

Contexts block every back-door path from the decisions, so

    Pr(phi | do(a)) = sum_X Pr'(X) * Pr(phi, a, X) / Pr(a, X)

and the cost of an action is its negative expected utility under the same
adjustment. Every sum runs over the circuit's models consistent with the
action; nothing enumerates the full assignment space. Contexts in which
the action never occurs (Pr(a, X) = 0) are left out of the sum and
reported, not renormalized away.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Mapping, Sequence

from .errors import NBoundError, QueryError, ZeroProbabilityError, ZeroSupportError
from .logic import Action, Formula, Scenario, eval_formula, parse_formula
from .psdd import Psdd, evaluate, marginal
from .sdd import enumerate_models
from .utility import UtilityFunction

# default N is this multiple of the smallest admissible value
N_MARGIN = 1.1


# ---------------------------------------------------------------------------
# Context distributions
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ContextDistribution:
    """Pr'(X): the model's own Pr(X), Pr(X | evidence), or an explicit table.

    ``table`` maps context bit tuples (over the scenario's context variables,
    in declaration order) to weights.
    """

    kind: str = "model"
    evidence: tuple = ()
    table: tuple = ()

    @staticmethod
    def model() -> "ContextDistribution":
        return ContextDistribution("model")

    @staticmethod
    def conditioned(evidence: Mapping[str, int]) -> "ContextDistribution":
        return ContextDistribution("conditioned", tuple(sorted((k, int(v)) for k, v in evidence.items())))

    @staticmethod
    def explicit(table: Mapping[tuple, float]) -> "ContextDistribution":
        return ContextDistribution("table", table=tuple(sorted((tuple(k), float(v)) for k, v in table.items())))

    def describe(self) -> str:
        if self.kind == "model":
            return "Pr(X) from the model"
        if self.kind == "conditioned":
            return "Pr(X | " + ", ".join(f"{k}={v}" for k, v in self.evidence) + ")"
        return f"explicit table over {len(self.table)} contexts"


def context_key(scenario: Scenario, w: Mapping[str, int]) -> tuple:
    return tuple(int(w[v]) for v in scenario.contexts)


def model_contexts(p: Psdd, scenario: Scenario) -> list:
    """Context assignments that occur in some model of the circuit, sorted."""
    hit = p._cache.get(("contexts", scenario.contexts))
    if hit is None:
        keys = {context_key(scenario, w) for w in enumerate_models(p.sdd)}
        hit = p._cache[("contexts", scenario.contexts)] = sorted(keys)
    return hit


def resolve_contexts(p: Psdd, scenario: Scenario, ctx: ContextDistribution) -> list:
    """[(context key, weight)] with weights summing to 1, sorted by key."""
    cache_key = ("resolved", scenario.contexts, ctx)
    hit = p._cache.get(cache_key)
    if hit is None:
        hit = p._cache[cache_key] = _resolve(p, scenario, ctx)
    return hit


def _resolve(p: Psdd, scenario: Scenario, ctx: ContextDistribution) -> list:
    names = scenario.contexts
    if ctx.kind == "table":
        support = set(model_contexts(p, scenario))
        out = []
        for key, wt in ctx.table:
            if len(key) != len(names):
                raise QueryError(f"context {key} does not match the context variables {names}")
            if wt < 0:
                raise QueryError("context weights must be non-negative")
            if wt > 0 and key not in support:
                raise QueryError(f"context {_fmt_ctx(names, key)} is inconsistent with the constraints")
            if wt > 0:
                out.append((key, wt))
        total = math.fsum(w for _, w in out)
        if abs(total - 1.0) > 1e-9:
            raise QueryError(f"context weights sum to {total}, not 1")
        return sorted(out)
    evidence = dict(ctx.evidence)
    bad = [k for k in evidence if k not in names]
    if bad:
        raise QueryError(f"context evidence mentions non-context variables {bad}")
    keys = [k for k in model_contexts(p, scenario)
            if all(k[names.index(v)] == b for v, b in evidence.items())]
    probs = [marginal(p, dict(zip(names, k))) for k in keys]
    total = math.fsum(probs)
    if total <= 0:
        raise ZeroProbabilityError(f"context evidence {evidence} has probability zero")
    return [(k, pr / total) for k, pr in zip(keys, probs) if pr > 0]


def _fmt_ctx(names, key) -> str:
    on = [v for v, b in zip(names, key) if b]
    return "{" + ", ".join(on) + "}" if on else "{}"


# ---------------------------------------------------------------------------
# Per-action sweeps
# ---------------------------------------------------------------------------


@dataclass
class ActionSweep:
    """Models consistent with one action, grouped by context."""

    action: Action
    by_context: dict            # context key -> [(world, Pr(world))]
    worlds_visited: int

    def joint(self, key) -> float:
        return math.fsum(pr for _, pr in self.by_context.get(key, ()))


def sweep(p: Psdd, scenario: Scenario, action: Action) -> ActionSweep:
    cache_key = ("sweep", action)
    hit = p._cache.get(cache_key)
    if hit is not None:
        return hit
    by_context: dict = {}
    n = 0
    for w in enumerate_models(p.sdd, action.as_dict()):
        n += 1
        pr = evaluate(p, w)
        if pr > 0:
            by_context.setdefault(context_key(scenario, w), []).append((w, pr))
    out = p._cache[cache_key] = ActionSweep(action, by_context, n)
    return out


def _as_action(scenario: Scenario, a) -> Action:
    return a if isinstance(a, Action) else scenario.action(str(a))


def _as_formula(scenario: Scenario, phi, action: Action) -> Formula:
    f = phi if isinstance(phi, Formula) else parse_formula(str(phi), scenario)
    clash = sorted(f.atoms() & set(action.group))
    if clash:
        raise QueryError(f"event mentions variables of the action group: {clash}")
    extra = sorted(f.atoms() & set(scenario.contexts))
    if extra:
        raise QueryError(f"event mentions context variables {extra}; events range over decisions and outcomes")
    return f


@dataclass
class DoResult:
    value: float
    skipped: list               # context keys with Pr(a, X) = 0 but Pr'(X) > 0
    skipped_mass: float
    worlds_visited: int
    mass: float = 1.0           # context weight actually summed


def _do_sum(p, scenario, action, ctx, term) -> DoResult:
    """sum_X Pr'(X) * sum_{w |= a, X} term(w) Pr(w) / Pr(a, X)."""
    s = sweep(p, scenario, action)
    parts, skipped, lost, kept = [], [], [], []
    for key, weight in resolve_contexts(p, scenario, ctx):
        rows = s.by_context.get(key)
        if not rows:
            skipped.append(key)
            lost.append(weight)
            continue
        den = math.fsum(pr for _, pr in rows)
        num = math.fsum(term(w) * pr for w, pr in rows)
        parts.append(weight * num / den)
        kept.append(weight)
    return DoResult(math.fsum(parts), skipped, math.fsum(lost), s.worlds_visited, math.fsum(kept))


def prob_do_detail(p: Psdd, scenario: Scenario, a, phi, ctx: ContextDistribution | None = None) -> DoResult:
    action = _as_action(scenario, a)
    f = _as_formula(scenario, phi, action)
    r = _do_sum(p, scenario, action, ctx or ContextDistribution.model(),
                lambda w: 1.0 if eval_formula(f, w) else 0.0)
    r.value = min(max(r.value, 0.0), 1.0)
    return r


def prob_do(p: Psdd, scenario: Scenario, a, phi, ctx: ContextDistribution | None = None) -> float:
    """Pr(phi | do(a)) by back-door adjustment over the contexts."""
    return prob_do_detail(p, scenario, a, phi, ctx).value


def delta(p: Psdd, scenario: Scenario, a, a_alt, phi, ctx: ContextDistribution | None = None) -> float:
    act, alt = _as_action(scenario, a), _as_action(scenario, a_alt)
    if act.group != alt.group:
        raise QueryError(f"{act} and {alt} belong to different action groups")
    return max(prob_do(p, scenario, act, phi, ctx) - prob_do(p, scenario, alt, phi, ctx), 0.0)


def cost(p: Psdd, scenario: Scenario, u: UtilityFunction, a,
         ctx: ContextDistribution | None = None) -> float:
    """c(a) = -sum_X Pr'(X) sum_O U(O; X) Pr(O | a, X).

    Unlike ``prob_do``, the context weights are renormalized over the contexts
    where ``a`` has support, so c(a) is an expected utility and shifting U by a
    constant shifts every cost by the same amount.
    """
    action = _as_action(scenario, a)
    r = _do_sum(p, scenario, action, ctx or ContextDistribution.model(), u.value)
    if r.mass <= 0:
        raise ZeroSupportError(f"action {action} has zero probability in every context")
    return -r.value / r.mass


def n_floor(costs: Mapping[str, float]) -> float:
    """Smallest admissible N is strictly above this value."""
    return -min(costs.values())


def db_from_parts(d: float, c_a: float, c_alt: float, N: float) -> float:
    """delta * (N - max(c(a') - c(a), 0)) / N."""
    # scaling d by a factor <= 1 keeps db <= delta exactly under rounding
    return d * (1.0 - max(c_alt - c_a, 0.0) / N)


def check_n(N: float, floor: float) -> None:
    if not N > floor or not math.isfinite(N):
        raise NBoundError(N, floor)


def group_costs(p, scenario, u, action: Action, ctx) -> tuple[dict, list]:
    """Costs of every action of ``action``'s group with support, and the unsupported ones."""
    costs, missing = {}, []
    for alt in scenario.actions(action.group):
        try:
            costs[alt.label] = cost(p, scenario, u, alt, ctx)
        except ZeroSupportError:
            missing.append(alt.label)
    return costs, missing


def blameworthiness(p: Psdd, scenario: Scenario, u: UtilityFunction, a, a_alt, phi,
                    N: float, ctx: ContextDistribution | None = None) -> float:
    act, alt = _as_action(scenario, a), _as_action(scenario, a_alt)
    ctx = ctx or ContextDistribution.model()
    costs, _ = group_costs(p, scenario, u, act, ctx)
    if not costs:
        raise ZeroSupportError(f"no action of group {list(act.group)} has support")
    check_n(N, n_floor(costs))
    d = delta(p, scenario, act, alt, phi, ctx)
    if d == 0.0:
        return 0.0
    return db_from_parts(d, cost(p, scenario, u, act, ctx), cost(p, scenario, u, alt, ctx), N)


# ---------------------------------------------------------------------------
# Queries and reports
# ---------------------------------------------------------------------------


@dataclass
class BlameQuery:
    action: str
    event: str
    alternatives: tuple = ()       # empty: every other action of the group
    N: float | None = None         # None: N_MARGIN times the floor
    contexts: ContextDistribution = field(default_factory=ContextDistribution.model)


@dataclass
class PairResult:
    alternative: str
    prob_alt: float
    delta: float
    cost_alt: float
    db: float


@dataclass
class BlameReport:
    action: str
    event: str
    N: float
    n_floor: float
    prob_action: float
    cost_action: float
    pairs: list
    costs: dict
    overall: float
    argmax: str | None
    contexts: str
    skipped: dict                   # action label -> skipped context descriptions
    warnings: list
    worlds_visited: dict            # action label -> models enumerated

    @property
    def margin(self) -> float:
        return self.N - self.n_floor


def run_query(p: Psdd, scenario: Scenario, u: UtilityFunction, q: BlameQuery) -> BlameReport:
    act = _as_action(scenario, q.action)
    ctx = q.contexts
    f = _as_formula(scenario, q.event, act)
    if len(scenario.actions(act.group)) < 2:
        raise QueryError(f"action group {list(act.group)} has a single action")
    costs, missing = group_costs(p, scenario, u, act, ctx)
    if act.label in missing:
        raise ZeroSupportError(f"action {act} has zero probability in every context")
    floor = n_floor(costs)
    N = q.N if q.N is not None else (N_MARGIN * floor if floor > 0 else 1.0)
    check_n(N, floor)
    warnings = [f"alternative {m} has no support in any context and was skipped" for m in missing]
    main = prob_do_detail(p, scenario, act, f, ctx)
    skipped = {act.label: [_fmt_ctx(scenario.contexts, k) for k in main.skipped]}
    visited = {act.label: main.worlds_visited}
    if q.alternatives:
        alts = [_as_action(scenario, a) for a in q.alternatives]
        for alt in alts:
            if alt.group != act.group:
                raise QueryError(f"{alt} is not in the group of {act}")
            if alt == act:
                raise QueryError("an alternative must differ from the action")
    else:
        alts = [a for a in scenario.actions(act.group) if a != act and a.label not in missing]
    pairs = []
    for alt in alts:
        if alt.label in missing:
            warnings.append(f"alternative {alt} has no support in any context")
            continue
        r = prob_do_detail(p, scenario, alt, f, ctx)
        skipped[alt.label] = [_fmt_ctx(scenario.contexts, k) for k in r.skipped]
        visited[alt.label] = r.worlds_visited
        d = max(main.value - r.value, 0.0)
        db = db_from_parts(d, costs[act.label], costs[alt.label], N) if d > 0 else 0.0
        pairs.append(PairResult(alt.label, r.value, d, costs[alt.label], db))
    for label, keys in skipped.items():
        if keys:
            warnings.append(f"do({label}): {len(keys)} context(s) with zero probability of the action were skipped")
    best, argmax = 0.0, None
    for pr in pairs:
        if argmax is None or pr.db > best:
            best, argmax = pr.db, pr.alternative
    return BlameReport(act.label, str(q.event), N, floor, main.value, costs[act.label], pairs,
                       costs, best, argmax, ctx.describe(), skipped, warnings, visited)


def overall_blame(p: Psdd, scenario: Scenario, u: UtilityFunction, a, phi, N: float | None = None,
                  ctx: ContextDistribution | None = None) -> tuple:
    """(max over alternatives of db_N, the first alternative attaining it)."""
    r = run_query(p, scenario, u, BlameQuery(str(_as_action(scenario, a)), str(phi), (), N,
                                             ctx or ContextDistribution.model()))
    return r.overall, r.argmax


def _num(x: float) -> str:
    # three decimals, but never round a nonzero value down to 0.000
    if x != 0 and abs(x) < 5e-4:
        return format(x, ".2e")
    return format(x, ".3f")


def report_text(r: BlameReport) -> str:
    lines = []
    if r.argmax is None:
        lines.append(f"No alternative to {r.action} could be compared for {r.event}.")
    elif r.overall > 0:
        lines.append(f"Agent is blameworthy to degree {_num(r.overall)} for {r.event}, "
                     f"relative to alternative {r.argmax}.")
    else:
        lines.append(f"Agent is not blameworthy for {r.event} when performing {r.action}.")
    lines.append(f"Probability of {r.event} under do({r.action}): {_num(r.prob_action)}.")
    for pr in r.pairs:
        lines.append(f"Relative to {pr.alternative}: probability {_num(pr.prob_alt)}, "
                     f"delta {_num(pr.delta)}, blame {_num(pr.db)}.")
    lines.append("Costs: " + ", ".join(f"c({k}) = {_num(v)}" for k, v in r.costs.items()) + ".")
    lines.append(f"Cost importance N = {_num(r.N)} (must exceed {_num(r.n_floor)}).")
    lines.append(f"Contexts: {r.contexts}.")
    lines.extend(f"Warning: {w}." for w in r.warnings)
    return "\n".join(lines) + "\n"


TSV_FIELDS = ("action", "alternative", "event", "N", "n_floor", "prob_action", "prob_alternative",
              "delta", "cost_action", "cost_alternative", "db", "overall", "argmax")


def report_rows(r: BlameReport) -> list:
    rows = []
    for pr in r.pairs:
        rows.append((r.action, pr.alternative, r.event, r.N, r.n_floor, r.prob_action, pr.prob_alt,
                     pr.delta, r.cost_action, pr.cost_alt, pr.db, r.overall, r.argmax or ""))
    return rows


def report_tsv(r: BlameReport, header: bool = True) -> str:
    out = ["\t".join(TSV_FIELDS)] if header else []
    for row in report_rows(r):
        out.append("\t".join(repr(x) if isinstance(x, float) else str(x) for x in row))
    return "\n".join(out) + "\n"


# ---------------------------------------------------------------------------
# Query files
# ---------------------------------------------------------------------------


def parse_queries(text: str, scenario: Scenario) -> list:
    """Blocks of ``key: value`` lines separated by blank lines.

    Keys: ``action``, ``event``, ``alternatives`` (space separated),
    ``N``, ``contexts`` (``model``, or ``given VAR=0/1 ...``), and
    ``context`` lines ``bits weight`` for an explicit table.
    """
    from .errors import ParseError

    queries, block = [], {}
    table: dict = {}

    def flush():
        if not block and not table:
            return
        if "action" not in block or "event" not in block:
            raise ParseError("each query needs 'action' and 'event'")
        ctx = ContextDistribution.model()
        spec = block.get("contexts", "model").split()
        if table:
            ctx = ContextDistribution.explicit(table)
        elif spec and spec[0] == "given":
            ev = {}
            for item in spec[1:]:
                k, _, v = item.partition("=")
                if v not in ("0", "1"):
                    raise ParseError(f"bad context evidence {item!r}")
                ev[k] = int(v)
            ctx = ContextDistribution.conditioned(ev)
        elif spec != ["model"]:
            raise ParseError(f"bad contexts value {block['contexts']!r}")
        N = block.get("N")
        queries.append(BlameQuery(block["action"], block["event"],
                                  tuple(block.get("alternatives", "").split()),
                                  float(N) if N not in (None, "auto") else None, ctx))
        block.clear()
        table.clear()

    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            flush()
            continue
        key, sep, value = line.partition(":")
        if not sep:
            raise ParseError(f"line {lineno}: expected 'key: value'")
        key, value = key.strip(), value.strip()
        if key == "context":
            bits, _, wt = value.partition(" ")
            if set(bits) - {"0", "1"} or len(bits) != len(scenario.contexts):
                raise ParseError(f"line {lineno}: bad context bits {bits!r}")
            table[tuple(int(c) for c in bits)] = float(wt)
        elif key in ("action", "event", "alternatives", "N", "contexts"):
            block[key] = value
        else:
            raise ParseError(f"line {lineno}: unknown key {key!r}")
    flush()
    return queries


def contexts_from_names(scenario: Scenario, weights: Mapping[str, float] | Sequence) -> ContextDistribution:
    """Explicit table from ``{"A_5 B_1": 1.0}`` style keys (the true context indicators)."""
    table = {}
    for names, wt in dict(weights).items():
        on = set(names.split())
        bad = on - set(scenario.contexts)
        if bad:
            raise QueryError(f"unknown context variables {sorted(bad)}")
        table[tuple(int(v in on) for v in scenario.contexts)] = wt
    return ContextDistribution.explicit(table)
