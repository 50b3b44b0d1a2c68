"""Brute-force reference implementations over explicit joint tables.

Everything here is a direct sum over listed worlds, written from the
definitions and sharing no traversal code with the circuit path. Only
meant for small scenarios (tests and the ``verify`` command).
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

import numpy as np

from .errors import NBoundError, QueryError, SupportTooLargeError, ZeroProbabilityError, ZeroSupportError
from .logic import Scenario, eval_formula, parse_formula, parse_scenario
from .psdd import Psdd, evaluate
from .sdd import enumerate_models, model_count

MAX_JOINT = 1 << 20
MAX_BRUTE_VARS = 20


@dataclass
class JointTable:
    variables: tuple
    worlds: list            # list of dicts
    probs: list

    def __len__(self):
        return len(self.worlds)

    def rows(self):
        return zip(self.worlds, self.probs)


def build_joint(p: Psdd, limit: int = MAX_JOINT) -> JointTable:
    mc = model_count(p.sdd)
    if mc > limit:
        raise SupportTooLargeError(f"{mc} models exceed the oracle limit {limit}")
    worlds = list(enumerate_models(p.sdd))
    return JointTable(tuple(p.variables), worlds, [evaluate(p, w) for w in worlds])


def brute_models(scenario: Scenario) -> list:
    """Every complete assignment satisfying the scenario theory, by filtering 2^n."""
    names = scenario.variables
    if len(names) > MAX_BRUTE_VARS:
        raise SupportTooLargeError(f"{len(names)} variables is too many for brute force")
    theory = scenario.theory()
    out = []
    for bits in itertools.product((0, 1), repeat=len(names)):
        w = dict(zip(names, bits))
        if all(eval_formula(c, w) for c in theory):
            out.append(w)
    return out


def _consistent(w, evidence) -> bool:
    return all(w[k] == int(v) for k, v in evidence.items())


def oracle_marginal(t: JointTable, evidence) -> float:
    return math.fsum(pr for w, pr in t.rows() if _consistent(w, evidence))


def oracle_conditional(t: JointTable, query, given) -> float:
    den = oracle_marginal(t, given)
    if den <= 0:
        raise ZeroProbabilityError("conditioning event has probability zero")
    both = dict(given)
    for k, v in query.items():
        if k in both and both[k] != int(v):
            return 0.0
        both[k] = int(v)
    return oracle_marginal(t, both) / den


def oracle_mpe(t: JointTable, evidence=None, rel_tol: float = 1e-9):
    """argmax with ties (within ``rel_tol``) broken towards the smallest bit tuple."""
    evidence = evidence or {}
    cands = [(w, pr) for w, pr in t.rows() if _consistent(w, evidence) and pr > 0]
    if not cands:
        raise ZeroProbabilityError("evidence has probability zero")
    top = max(pr for _, pr in cands)
    tied = [w for w, pr in cands if pr >= top * (1 - rel_tol)]
    best = min(tied, key=lambda w: tuple(w[v] for v in t.variables))
    return best, top


# -- blame ------------------------------------------------------------------


def _ctx_key(scenario, w):
    return tuple(w[v] for v in scenario.contexts)


def oracle_contexts(t: JointTable, scenario: Scenario, ctx) -> dict:
    """Pr'(X) as a dict. ``ctx`` is "model", a dict of context evidence, or a
    table {bits: weight}."""
    if hasattr(ctx, "kind"):  # a blame.ContextDistribution
        ctx = dict(ctx.evidence) if ctx.kind != "table" else dict(ctx.table)
    if isinstance(ctx, str) and ctx == "model":
        ctx = {}
    if isinstance(ctx, dict) and all(isinstance(k, str) for k in ctx):
        px: dict = {}
        for w, pr in t.rows():
            if _consistent(w, ctx):
                k = _ctx_key(scenario, w)
                px[k] = px.get(k, 0.0) + pr
        total = math.fsum(px.values())
        if total <= 0:
            raise ZeroProbabilityError("context evidence has probability zero")
        return {k: v / total for k, v in px.items() if v > 0}
    return {tuple(k): float(v) for k, v in ctx.items() if v > 0}


def _action_dict(scenario: Scenario, label: str) -> dict:
    return scenario.action(label).as_dict()


def oracle_expect(t: JointTable, scenario: Scenario, label: str, ctx, f) -> tuple:
    """sum_X Pr'(X) E[f | a, X]; also the list of skipped contexts."""
    a = _action_dict(scenario, label)
    weights = oracle_contexts(t, scenario, ctx)
    total, skipped = [], []
    for key, wx in sorted(weights.items()):
        dens, nums = [], []
        for w, pr in t.rows():
            if _consistent(w, a) and _ctx_key(scenario, w) == key:
                dens.append(pr)
                nums.append(f(w) * pr)
        den, num = math.fsum(dens), math.fsum(nums)
        if den <= 0:
            skipped.append(key)
            continue
        total.append(wx * num / den)
    return math.fsum(total), skipped


def oracle_prob_do(t, scenario, label, phi, ctx="model") -> float:
    f = parse_formula(phi, scenario) if isinstance(phi, str) else phi
    v, _ = oracle_expect(t, scenario, label, ctx, lambda w: float(eval_formula(f, w)))
    return min(max(v, 0.0), 1.0)


def oracle_delta(t, scenario, a, alt, phi, ctx="model") -> float:
    return max(oracle_prob_do(t, scenario, a, phi, ctx) - oracle_prob_do(t, scenario, alt, phi, ctx), 0.0)


def oracle_cost(t, scenario, u, label, ctx="model") -> float:
    """Expected utility over the contexts where ``label`` has support, negated."""
    weights = oracle_contexts(t, scenario, ctx)
    v, skipped = oracle_expect(t, scenario, label, ctx, u.value)
    kept = math.fsum(w for k, w in weights.items() if k not in set(skipped))
    if kept <= 0:
        raise ZeroSupportError(f"{label} has no support")
    return -v / kept


def oracle_costs(t, scenario, u, label, ctx="model") -> dict:
    group = scenario.action(label).group
    out = {}
    for act in scenario.actions(group):
        try:
            out[act.label] = oracle_cost(t, scenario, u, act.label, ctx)
        except ZeroSupportError:
            pass
    return out


def oracle_db(t, scenario, u, a, alt, phi, N, ctx="model") -> float:
    costs = oracle_costs(t, scenario, u, a, ctx)
    floor = -min(costs.values())
    if not N > floor:
        raise NBoundError(N, floor)
    d = oracle_delta(t, scenario, a, alt, phi, ctx)
    if d == 0:
        return 0.0
    ca, calt = costs[a], costs[alt]
    return d * (N - max(calt - ca, 0.0)) / N


def oracle_overall(t, scenario, u, a, phi, N, ctx="model") -> tuple:
    costs = oracle_costs(t, scenario, u, a, ctx)
    best, arg = 0.0, None
    for act in scenario.actions(scenario.action(a).group):
        if act.label == a or act.label not in costs:
            continue
        v = oracle_db(t, scenario, u, a, act.label, phi, N, ctx)
        if arg is None or v > best:
            best, arg = v, act.label
    return best, arg


# ---------------------------------------------------------------------------
# Random instances
# ---------------------------------------------------------------------------


@dataclass
class RandomInstance:
    scenario: Scenario
    data: object
    smoothing: float
    event: str
    weights: dict


def random_scenario(rng: np.random.Generator, max_vars: int = 12) -> Scenario:
    """Contexts, one one-hot action group, a binary decision, outcomes, random constraints."""
    while True:
        n_ctx = int(rng.integers(1, 3))
        ctx_onehot = n_ctx == 2 and rng.random() < 0.5
        n_ctx_vars = 3 if ctx_onehot else n_ctx
        n_act = int(rng.integers(2, 4))
        n_out = int(rng.integers(2, 5))
        extra_dec = int(rng.random() < 0.5)
        total = n_ctx_vars + n_act + n_out + extra_dec
        if total <= max_vars:
            break
    ctx = [f"X{i}" for i in range(n_ctx_vars)]
    acts = [f"A{i}" for i in range(n_act)]
    dec = acts + (["B"] if extra_dec else [])
    outs = [f"O{i}" for i in range(n_out)]
    lines = ["name random", "context " + " ".join(ctx), "decision " + " ".join(dec),
             "outcome " + " ".join(outs), "onehot " + " ".join(acts), "action " + " ".join(acts)]
    if ctx_onehot:
        lines.append("onehot " + " ".join(ctx))
    if extra_dec:
        lines.append("action B")
    # constraints tie outcomes to decisions and contexts
    pool = ctx + dec + outs
    for _ in range(int(rng.integers(0, 3))):
        lhs = [pool[i] for i in rng.choice(len(pool), size=2, replace=False)]
        rhs = outs[int(rng.integers(len(outs)))]
        lits = [f"!({v})" if rng.random() < 0.4 else v for v in lhs]
        neg = rng.random() < 0.5
        lines.append(f"constraint >(&({lits[0]},{lits[1]}),{'!(' + rhs + ')' if neg else rhs})")
    return parse_scenario("\n".join(lines) + "\n")


def random_event(rng, scenario: Scenario) -> str:
    pool = list(scenario.outcomes)
    k = int(rng.integers(1, min(3, len(pool)) + 1))
    atoms = [pool[i] for i in rng.choice(len(pool), size=k, replace=False)]
    lits = [f"!({a})" if rng.random() < 0.4 else a for a in atoms]
    if len(lits) == 1:
        return lits[0]
    op = "&" if rng.random() < 0.5 else "|"
    return f"{op}({','.join(lits)})"


def random_instance(seed: int, max_vars: int = 12, rows: int = 200) -> RandomInstance:
    from .data import from_assignments
    from .sdd import compile_scenario

    rng = np.random.default_rng(seed)
    while True:
        s = random_scenario(rng, max_vars)
        sdd = compile_scenario(s)
        if model_count(sdd) > 0:
            break
    models = list(enumerate_models(sdd))
    # skewed sampling so the fitted distribution is far from uniform
    w = rng.dirichlet(np.full(len(models), 0.5))
    idx = rng.choice(len(models), size=rows, p=w)
    data = from_assignments([models[i] for i in idx], s.variables)
    smoothing = float(rng.choice([0.0, 0.5, 1.0]))
    event = random_event(rng, s)
    util = {v: float(rng.uniform(0, 1)) for v in s.outcomes}
    return RandomInstance(s, data, smoothing, event, util)


# ---------------------------------------------------------------------------
# Agreement suite
# ---------------------------------------------------------------------------


def verify_agreement(p: Psdd, scenario: Scenario, u=None, seed: int = 0, queries: int = 20) -> dict:
    """Max absolute deviation between circuit and oracle per quantity."""
    from . import blame as B
    from .psdd import conditional, marginal, mpe

    rng = np.random.default_rng(seed)
    t = build_joint(p)
    dev = {"normalization": abs(math.fsum(t.probs) - 1.0), "marginal": 0.0, "conditional": 0.0,
           "mpe": 0.0, "prob_do": 0.0, "delta": 0.0, "cost": 0.0, "db": 0.0}
    names = list(p.variables)
    mismatched_mpe = 0
    for _ in range(queries):
        k = int(rng.integers(0, min(4, len(names)) + 1))
        ev = {names[i]: int(rng.integers(2)) for i in rng.choice(len(names), size=k, replace=False)}
        dev["marginal"] = max(dev["marginal"], abs(marginal(p, ev) - oracle_marginal(t, ev)))
        if k >= 1 and oracle_marginal(t, ev) > 0:
            q = dict([next(iter(ev.items()))])
            given = {a: b for a, b in ev.items() if a not in q}
            if oracle_marginal(t, given) > 0:
                dev["conditional"] = max(dev["conditional"],
                                         abs(conditional(p, q, given) - oracle_conditional(t, q, given)))
            w1, p1 = mpe(p, ev)
            w2, p2 = oracle_mpe(t, ev)
            dev["mpe"] = max(dev["mpe"], abs(p1 - p2))
            mismatched_mpe += w1 != w2
    dev["mpe_assignment_mismatches"] = mismatched_mpe
    groups = [g for g in scenario.action_groups if len(scenario.actions(g)) >= 2]
    for g in groups:
        acts = [a.label for a in scenario.actions(g)]
        event = random_event(rng, scenario) if scenario.outcomes else None
        if event is None:
            continue
        f = parse_formula(event, scenario)
        if f.atoms() & set(g):
            continue
        for a in acts:
            try:
                v1 = B.prob_do(p, scenario, a, f)
            except (QueryError, ZeroProbabilityError):
                continue
            dev["prob_do"] = max(dev["prob_do"], abs(v1 - oracle_prob_do(t, scenario, a, f)))
            for alt in acts:
                if alt != a:
                    dev["delta"] = max(dev["delta"], abs(B.delta(p, scenario, a, alt, f)
                                                         - oracle_delta(t, scenario, a, alt, f)))
        if u is None:
            continue
        costs = oracle_costs(t, scenario, u, acts[0])
        for a, c in costs.items():
            dev["cost"] = max(dev["cost"], abs(B.cost(p, scenario, u, a) - c))
        if not costs:
            continue
        N = 1.1 * max(-min(costs.values()), 1e-3)
        for a in costs:
            for alt in costs:
                if a != alt:
                    dev["db"] = max(dev["db"], abs(B.blameworthiness(p, scenario, u, a, alt, f, N)
                                                   - oracle_db(t, scenario, u, a, alt, f, N)))
    return dev


__all__ = [
    "JointTable", "build_joint", "brute_models", "oracle_marginal", "oracle_conditional", "oracle_mpe",
    "oracle_prob_do", "oracle_delta", "oracle_cost", "oracle_costs", "oracle_db", "oracle_overall",
    "random_instance", "random_scenario", "verify_agreement",
]
