"""Probabilistic SDDs: parameter fitting and linear-time queries.

Two structures can be fitted on a compiled circuit:

``unfolded`` (default)
    The circuit is expanded over a right-linear vtree with the same leaf
    order, one decision node per consistent prefix. No parameter is shared
    between contexts, so the maximum-likelihood fit with zero smoothing
    reproduces the empirical distribution exactly. Size grows with the
    model count.

``shared``
    The compiled circuit itself, normalized so that primes and subs sit on
    the left and right children of their vtree node. Nodes (and their
    parameters) are shared between contexts; compact, but only as
    expressive as its independence structure allows.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterator, Mapping

import numpy as np

from .errors import (
    DataError,
    QueryError,
    SupportTooLargeError,
    UnsatisfiableTheoryError,
    ZeroProbabilityError,
)
from .sdd import DECISION, FALSE, LITERAL, TRUE, Sdd, enumerate_models, model_count
from .vtree import Vtree, build_vtree

BIAS_EPS = 1e-6
DEFAULT_SMOOTHING = 1.0
MAX_UNFOLDED_MODELS = 1 << 16
# relative tolerance when deciding MPE ties in log space
TIE_TOL = 1e-12


class PsddNode:
    __slots__ = ("id", "kind", "vtree", "var", "value", "theta", "elements", "thetas")

    def __init__(self, kind, vtree=None, var=None, value=None, elements=None):
        self.id = -1
        self.kind = kind
        self.vtree = vtree
        self.var = var
        self.value = value
        self.theta = None
        self.elements = elements
        self.thetas = None

    def __repr__(self):
        names = {FALSE: "F", TRUE: "T", LITERAL: "L", DECISION: "D"}
        return f"PsddNode({names[self.kind]}#{self.id})"


@dataclass
class QueryStats:
    visits: int = 0


class Psdd:
    """A parameterized circuit over ``sdd``'s variables. Treat as immutable."""

    def __init__(self, sdd: Sdd, vtree: Vtree, root: PsddNode, structure: str,
                 smoothing: float | None = None):
        self.sdd = sdd
        self.vtree = vtree
        self.root = root
        self.structure = structure
        self.smoothing = smoothing
        self.variables = sdd.variables
        self.nodes = _topological(root)
        for i, n in enumerate(self.nodes):
            n.id = i
        self._cache: dict = {}

    def __len__(self):
        return len(self.nodes)

    def parameter_count(self) -> int:
        return sum(len(n.elements) if n.kind == DECISION else 1
                   for n in self.nodes if n.kind in (DECISION, TRUE))

    def __repr__(self):
        return f"Psdd({self.structure}, {len(self)} nodes, {self.parameter_count()} parameters)"


def _topological(root) -> list:
    order, seen = [], set()
    stack = [(root, False)]
    while stack:
        n, done = stack.pop()
        if done:
            order.append(n)
            continue
        if id(n) in seen:
            continue
        seen.add(id(n))
        stack.append((n, True))
        if n.kind == DECISION:
            for p, s in reversed(n.elements):
                stack.append((s, False))
                stack.append((p, False))
    return order


# ---------------------------------------------------------------------------
# Structure
# ---------------------------------------------------------------------------


def _literal_factory():
    lits: dict = {}

    def lit(var, value, vtree):
        key = (var, value)
        if key not in lits:
            lits[key] = PsddNode(LITERAL, vtree, var, value)
        return lits[key]

    return lit


def unfolded_structure(sdd: Sdd, max_models: int = MAX_UNFOLDED_MODELS):
    mc = model_count(sdd)
    if mc > max_models:
        raise SupportTooLargeError(
            f"unfolded structure needs one path per model; {mc} models exceed "
            f"the limit {max_models} (use the shared structure)"
        )
    mgr = sdd.manager
    order = sdd.variables
    n = len(order)
    vt = build_vtree(order, "right-linear")
    spine, leaf = [], {}
    node = vt
    while not node.is_leaf():
        spine.append(node)
        leaf[node.left.var] = node.left
        node = node.right
    leaf[node.var] = node
    lit = _literal_factory()
    false = PsddNode(FALSE)

    def build(f, i):
        if f.kind == FALSE:
            return false
        var = order[i]
        f1 = mgr.condition(f, var, 1)
        f0 = mgr.condition(f, var, 0)
        if i == n - 1:
            if f1.kind == TRUE and f0.kind == TRUE:
                return PsddNode(TRUE, leaf[var], var)
            return lit(var, 1 if f1.kind == TRUE else 0, leaf[var])
        return PsddNode(DECISION, spine[i], elements=[
            (lit(var, 1, leaf[var]), build(f1, i + 1)),
            (lit(var, 0, leaf[var]), build(f0, i + 1)),
        ])

    return vt, build(sdd.root, 0)


def shared_structure(sdd: Sdd):
    mgr = sdd.manager
    memo: dict = {}
    false = PsddNode(FALSE)

    def build(f, w):
        if f.kind == FALSE:
            return false
        key = (f.id, w.pos)
        hit = memo.get(key)
        if hit is not None:
            return hit
        if w.is_leaf():
            node = (PsddNode(TRUE, w, w.var) if f.kind == TRUE
                    else PsddNode(LITERAL, w, f.var, f.value))
        elif f.kind == TRUE:
            node = PsddNode(DECISION, w, elements=[(build(f, w.left), build(f, w.right))])
        elif f.vtree is w:
            node = PsddNode(DECISION, w, elements=[
                (build(p, w.left), build(s, w.right)) for p, s in f.elements])
        elif w.in_left(f.vtree):
            node = PsddNode(DECISION, w, elements=[
                (build(f, w.left), build(mgr.true, w.right)),
                (build(mgr.negate(f), w.left), false),
            ])
        else:
            node = PsddNode(DECISION, w, elements=[(build(mgr.true, w.left), build(f, w.right))])
        memo[key] = node
        return node

    return sdd.vtree, build(sdd.root, sdd.vtree)


# ---------------------------------------------------------------------------
# Fitting
# ---------------------------------------------------------------------------


def _sat(node, row, memo) -> bool:
    k = node.kind
    if k == LITERAL:
        return row[node.var] == node.value
    if k == TRUE:
        return True
    if k == FALSE:
        return False
    key = id(node)
    hit = memo.get(key)
    if hit is None:
        hit = memo[key] = any(_sat(p, row, memo) and _sat(s, row, memo) for p, s in node.elements)
    return hit


def fit_parameters(sdd: Sdd, data, smoothing: float = DEFAULT_SMOOTHING,
                   structure: str = "unfolded",
                   max_models: int = MAX_UNFOLDED_MODELS) -> Psdd:
    """Maximum-likelihood parameters with additive smoothing.

    Each decision node gets ``(n_i + smoothing) / (n + k * smoothing)`` on
    its ``k`` elements with a satisfiable sub, and 0 on elements whose sub is
    false. With ``smoothing == 0`` elements never reached by the data have
    their sub replaced by false (and terminals seen with one value only
    become literals), so the fitted support is the empirical support.
    """
    if smoothing < 0:
        raise ValueError("smoothing must be non-negative")
    if sdd.is_false():
        raise UnsatisfiableTheoryError("the constraint theory is unsatisfiable; no distribution has it as support")
    if len(data) == 0:
        raise DataError("cannot fit parameters on an empty dataset")
    data = data.reorder(sdd.variables)
    if structure == "unfolded":
        vt, root = unfolded_structure(sdd, max_models)
    elif structure == "shared":
        vt, root = shared_structure(sdd)
    else:
        raise ValueError(f"unknown structure {structure!r}")

    uniq, counts, first = data.unique_rows()
    names = sdd.variables
    node_n: dict = {}
    elem_n: dict = {}
    ones: dict = {}
    mgr = sdd.manager
    for bits, c, idx in zip(uniq, counts, first):
        row = dict(zip(names, (int(b) for b in bits)))
        if not mgr.evaluate(sdd.root, row):
            bad = [i for i, r in enumerate(data.rows) if np.array_equal(r, bits)]
            raise DataError(f"row {int(idx)} violates the constraints (rows {bad[:10]})", bad)
        c = int(c)
        memo: dict = {}
        stack = [root]
        while stack:
            n = stack.pop()
            key = id(n)
            node_n[key] = node_n.get(key, 0) + c
            if n.kind == TRUE:
                ones[key] = ones.get(key, 0) + c * row[n.var]
            elif n.kind == DECISION:
                for i, (p, s) in enumerate(n.elements):
                    if _sat(p, row, memo):
                        ec = elem_n.setdefault(key, [0] * len(n.elements))
                        ec[i] += c
                        stack.append(p)
                        stack.append(s)
                        break

    false = None
    for n in _topological(root):
        if n.kind == FALSE:
            false = n
            break
    if false is None:
        false = PsddNode(FALSE)

    for n in _topological(root):
        key = id(n)
        total = node_n.get(key, 0)
        if n.kind == TRUE:
            k1 = ones.get(key, 0)
            if smoothing == 0:
                if total and k1 in (0, total):
                    n.kind, n.value = LITERAL, int(k1 == total)
                else:
                    n.theta = k1 / total if total else 0.5
            else:
                theta = (k1 + smoothing) / (total + 2 * smoothing)
                n.theta = min(max(theta, BIAS_EPS), 1 - BIAS_EPS)
        elif n.kind == DECISION:
            ec = elem_n.get(key, [0] * len(n.elements))
            if smoothing == 0 and total:
                n.elements = [(p, s if ec[i] else false) for i, (p, s) in enumerate(n.elements)]
            live = [s.kind != FALSE for _, s in n.elements]
            k = sum(live)
            denom = total + k * smoothing
            if denom > 0:
                n.thetas = [(ec[i] + smoothing) / denom if live[i] else 0.0
                            for i in range(len(live))]
            else:
                n.thetas = [1.0 / k if live[i] else 0.0 for i in range(len(live))]
    return Psdd(sdd, vt, root, structure, smoothing)


# ---------------------------------------------------------------------------
# Queries
# ---------------------------------------------------------------------------


def _check_complete(p: Psdd, w):
    missing = [v for v in p.variables if v not in w]
    if missing:
        raise QueryError(f"incomplete assignment; missing {missing}")


def log_evaluate(p: Psdd, w: Mapping[str, int], stats: QueryStats | None = None) -> float:
    _check_complete(p, w)
    memo: dict = {}

    def lp(n):
        hit = memo.get(n.id)
        if hit is not None:
            return hit
        k = n.kind
        if k == LITERAL:
            out = 0.0 if int(w[n.var]) == n.value else -math.inf
        elif k == TRUE:
            out = math.log(n.theta if int(w[n.var]) else 1.0 - n.theta)
        elif k == FALSE:
            out = -math.inf
        else:
            out = -math.inf
            for (q, s), t in zip(n.elements, n.thetas):
                lq = lp(q)
                if lq == -math.inf:
                    continue
                # primes are exclusive: only one can be satisfied
                if t > 0.0:
                    out = math.log(t) + lq + lp(s)
                break
        memo[n.id] = out
        if stats is not None:
            stats.visits += 1
        return out

    return lp(p.root)


def evaluate(p: Psdd, w: Mapping[str, int], stats: QueryStats | None = None) -> float:
    """Pr(w) for a complete assignment ``w``; each node is visited at most once."""
    return math.exp(log_evaluate(p, w, stats))


def _check_evidence(p: Psdd, evidence):
    unknown = [v for v in evidence if v not in p.sdd.manager.leaf]
    if unknown:
        raise QueryError(f"unknown variables in evidence: {unknown}")


def marginal(p: Psdd, evidence: Mapping[str, int] | None = None,
             stats: QueryStats | None = None) -> float:
    """Probability of the partial assignment ``evidence`` (one bottom-up pass)."""
    evidence = {k: int(v) for k, v in (evidence or {}).items()}
    _check_evidence(p, evidence)
    val = [0.0] * len(p.nodes)
    for n in p.nodes:
        k = n.kind
        if k == LITERAL:
            e = evidence.get(n.var)
            v = 1.0 if e is None or e == n.value else 0.0
        elif k == TRUE:
            e = evidence.get(n.var)
            v = 1.0 if e is None else (n.theta if e else 1.0 - n.theta)
        elif k == FALSE:
            v = 0.0
        else:
            v = 0.0
            for (q, s), t in zip(n.elements, n.thetas):
                if t > 0.0:
                    v += t * val[q.id] * val[s.id]
        val[n.id] = v
    if stats is not None:
        stats.visits += len(p.nodes)
    return val[p.root.id]


def conditional(p: Psdd, query: Mapping[str, int], given: Mapping[str, int] | None = None,
                stats: QueryStats | None = None) -> float:
    """Pr(query | given)."""
    given = {k: int(v) for k, v in (given or {}).items()}
    den = marginal(p, given, stats)
    if den <= 0.0:
        raise ZeroProbabilityError(f"conditioning event {given} has probability zero")
    joint = dict(given)
    for k, v in query.items():
        if k in joint and joint[k] != int(v):
            return 0.0
        joint[k] = int(v)
    return marginal(p, joint, stats) / den


def mpe(p: Psdd, evidence: Mapping[str, int] | None = None,
        stats: QueryStats | None = None):
    """Most probable complete assignment consistent with ``evidence``.

    Returns ``(assignment, probability)``. Ties are broken towards the
    lexicographically smallest assignment in variable order (0 before 1).
    """
    evidence = {k: int(v) for k, v in (evidence or {}).items()}
    _check_evidence(p, evidence)
    rank = {v: i for i, v in enumerate(p.variables)}
    best = [-math.inf] * len(p.nodes)
    choice: list = [None] * len(p.nodes)
    assign_cache: dict = {}

    def assignment(n) -> dict:
        hit = assign_cache.get(n.id)
        if hit is not None:
            return hit
        k = n.kind
        if k in (LITERAL, TRUE):
            out = {n.var: choice[n.id]}
        else:
            i = choice[n.id]
            q, s = n.elements[i]
            out = {**assignment(q), **assignment(s)}
        assign_cache[n.id] = out
        return out

    def key(a: dict):
        return tuple(a[v] for v in sorted(a, key=rank.__getitem__))

    for n in p.nodes:
        k = n.kind
        i = n.id
        if k == LITERAL:
            e = evidence.get(n.var)
            best[i] = 0.0 if e is None or e == n.value else -math.inf
            choice[i] = n.value
        elif k == TRUE:
            e = evidence.get(n.var)
            l1, l0 = math.log(n.theta), math.log(1.0 - n.theta)
            if e is not None:
                best[i], choice[i] = (l1, 1) if e else (l0, 0)
            elif l1 > l0 and not _tie(l1, l0):
                best[i], choice[i] = l1, 1
            else:
                best[i], choice[i] = max(l0, l1), 0
        elif k == DECISION:
            top, arg = -math.inf, None
            for j, ((q, s), t) in enumerate(zip(n.elements, n.thetas)):
                if t <= 0.0:
                    continue
                v = math.log(t) + best[q.id] + best[s.id]
                if v == -math.inf:
                    continue
                if arg is None or (v > top and not _tie(v, top)):
                    top, arg = v, j
                elif _tie(v, top):
                    choice[i] = arg
                    cur = key(_candidate(n, arg, assignment))
                    alt = key(_candidate(n, j, assignment))
                    if alt < cur:
                        top, arg = max(top, v), j
                    else:
                        top = max(top, v)
            best[i], choice[i] = top, arg
    if stats is not None:
        stats.visits += len(p.nodes)
    if best[p.root.id] == -math.inf:
        raise ZeroProbabilityError(f"evidence {evidence} has probability zero")
    w = assignment(p.root)
    return {v: w[v] for v in p.variables}, math.exp(best[p.root.id])


def _candidate(n, j, assignment):
    q, s = n.elements[j]
    return {**assignment(q), **assignment(s)}


def _tie(a: float, b: float) -> bool:
    if a == b:
        return True
    if a == -math.inf or b == -math.inf:
        return False
    return abs(a - b) <= TIE_TOL * max(1.0, abs(a), abs(b))


# ---------------------------------------------------------------------------
# Support enumeration
# ---------------------------------------------------------------------------


def support(p: Psdd, partial: Mapping[str, int] | None = None) -> Iterator[tuple]:
    """(world, Pr(world)) for every model of the circuit consistent with ``partial``."""
    for w in enumerate_models(p.sdd, partial):
        yield w, evaluate(p, w)


def support_table(p: Psdd):
    """All models as a (M, V) uint8 array with their probabilities; cached."""
    hit = p._cache.get("support_table")
    if hit is None:
        worlds, probs = [], []
        for w, pr in support(p):
            worlds.append([w[v] for v in p.variables])
            probs.append(pr)
        arr = np.array(worlds, dtype=np.uint8).reshape(-1, len(p.variables))
        hit = p._cache["support_table"] = (arr, np.array(probs))
    return hit


def log_likelihood(p: Psdd, data) -> float:
    """Mean log-likelihood per row."""
    data = data.reorder(p.variables)
    uniq, counts, _ = data.unique_rows()
    total = 0.0
    for bits, c in zip(uniq, counts):
        total += c * log_evaluate(p, dict(zip(p.variables, (int(b) for b in bits))))
    return total / len(data)


# ---------------------------------------------------------------------------
# Serialization
# ---------------------------------------------------------------------------


def _fmt(x: float) -> str:
    return format(x, ".17g")


def dumps(p: Psdd) -> str:
    from .vtree import to_text

    lines = [f"psdd {len(p.nodes)} {p.structure} {_fmt(p.smoothing) if p.smoothing is not None else '-'}",
             "pvtree " + to_text(p.vtree)]
    for n in p.nodes:
        if n.kind == FALSE:
            lines.append(f"{n.id} F")
        elif n.kind == LITERAL:
            lines.append(f"{n.id} L {n.var} {n.value}")
        elif n.kind == TRUE:
            lines.append(f"{n.id} T {n.var} {_fmt(n.theta)}")
        else:
            parts = " ".join(f"{q.id} {s.id} {_fmt(t)}" for (q, s), t in zip(n.elements, n.thetas))
            lines.append(f"{n.id} D {n.vtree.pos} {parts}")
    lines.append(f"root {p.root.id}")
    return "\n".join(lines) + "\n"


def loads(text: str, sdd: Sdd) -> Psdd:
    from .errors import ParseError
    from .vtree import parse_vtree

    lines = [ln.strip() for ln in text.splitlines() if ln.strip()]
    head = lines[0].split()
    if head[0] != "psdd" or not lines[1].startswith("pvtree "):
        raise ParseError("PSDD text must start with 'psdd' and 'pvtree' lines")
    structure = head[2]
    smoothing = None if head[3] == "-" else float(head[3])
    vt = parse_vtree(lines[1][7:], sdd.variables)
    by_pos = {v.pos: v for v in vt.nodes()}
    leaf = {v.var: v for v in vt.leaves()}
    nodes: dict = {}
    root = None
    for ln in lines[2:]:
        parts = ln.split()
        if parts[0] == "root":
            root = nodes[int(parts[1])]
            continue
        try:
            i, kind = int(parts[0]), parts[1]
            if kind == "F":
                n = PsddNode(FALSE)
            elif kind == "L":
                n = PsddNode(LITERAL, leaf[parts[2]], parts[2], int(parts[3]))
            elif kind == "T":
                n = PsddNode(TRUE, leaf[parts[2]], parts[2])
                n.theta = float(parts[3])
            elif kind == "D":
                rest = parts[3:]
                elems, thetas = [], []
                for k in range(0, len(rest), 3):
                    elems.append((nodes[int(rest[k])], nodes[int(rest[k + 1])]))
                    thetas.append(float(rest[k + 2]))
                n = PsddNode(DECISION, by_pos[int(parts[2])], elements=elems)
                n.thetas = thetas
            else:
                raise ParseError(f"unknown PSDD node kind {kind!r}")
        except (KeyError, IndexError, ValueError) as e:
            raise ParseError(f"malformed PSDD line {ln!r}: {e}") from None
        nodes[i] = n
    if root is None:
        raise ParseError("PSDD text has no root line")
    return Psdd(sdd, vt, root, structure, smoothing)
