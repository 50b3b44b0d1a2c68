"""Sentential decision diagrams over a fixed vtree.

Nodes are created only through :class:`SddManager`, which keeps them
compressed (no two elements share a sub) and trimmed (no ``(T, s)`` or
``(p, T), (~p, F)`` decision nodes) and interns them in a unique table. Two
nodes built by the same manager therefore represent the same function iff
they are the same object.
"""

from __future__ import annotations

import hashlib
import sys
from itertools import product
from typing import Iterable, Iterator, Mapping

from .errors import ParseError
from .logic import And, Atom, Formula, Iff, Implies, Not, Or
from .vtree import Vtree, lca, parse_vtree, to_text as vtree_to_text

sys.setrecursionlimit(max(sys.getrecursionlimit(), 20000))

FALSE, TRUE, LITERAL, DECISION = 0, 1, 2, 3
AND, OR = "and", "or"


class SddNode:
    __slots__ = ("id", "kind", "vtree", "var", "value", "elements", "neg")

    def __init__(self, id, kind, vtree=None, var=None, value=None, elements=()):
        self.id = id
        self.kind = kind
        self.vtree = vtree
        self.var = var
        self.value = value
        self.elements = elements
        self.neg = None

    def is_false(self):
        return self.kind == FALSE

    def is_true(self):
        return self.kind == TRUE

    def is_literal(self):
        return self.kind == LITERAL

    def is_decision(self):
        return self.kind == DECISION

    def __repr__(self):
        if self.kind == FALSE:
            return "SddNode(F)"
        if self.kind == TRUE:
            return "SddNode(T)"
        if self.kind == LITERAL:
            return f"SddNode({'' if self.value else '!'}{self.var})"
        return f"SddNode(#{self.id} @{self.vtree.pos}, {len(self.elements)} elements)"


class SddManager:
    def __init__(self, vtree: Vtree):
        self.vtree = vtree
        self.leaf = {leaf.var: leaf for leaf in vtree.leaves()}
        self._next_id = 2
        self.false = SddNode(0, FALSE)
        self.true = SddNode(1, TRUE)
        self.false.neg, self.true.neg = self.true, self.false
        self._literals: dict = {}
        self._unique: dict = {}
        self._apply_cache: dict = {}
        self._cond_cache: dict = {}
        self._mc_cache: dict = {}

    # -- construction ------------------------------------------------------
    def _new(self, **kw) -> SddNode:
        node = SddNode(self._next_id, **kw)
        self._next_id += 1
        return node

    def literal(self, var: str, value: int = 1) -> SddNode:
        key = (var, bool(value))
        node = self._literals.get(key)
        if node is None:
            if var not in self.leaf:
                raise KeyError(f"variable {var!r} is not in the vtree")
            pos = self._new(kind=LITERAL, vtree=self.leaf[var], var=var, value=1)
            neg = self._new(kind=LITERAL, vtree=self.leaf[var], var=var, value=0)
            pos.neg, neg.neg = neg, pos
            self._literals[(var, True)] = pos
            self._literals[(var, False)] = neg
            node = pos if value else neg
        return node

    def decision(self, v: Vtree, elements) -> SddNode:
        """Canonical node for a partition ``elements`` normalized at ``v``.

        Primes must be mutually exclusive, exhaustive and consistent. The
        elements are compressed and trimmed before interning.
        """
        by_sub: dict = {}
        for p, s in elements:
            if p.kind == FALSE:
                continue
            hit = by_sub.get(s.id)
            by_sub[s.id] = (p if hit is None else self.apply(hit[0], p, OR), s)
        elems = list(by_sub.values())
        if len(elems) == 1:
            return elems[0][1]
        if len(elems) == 2:
            (p1, s1), (p2, s2) = elems
            if s1.kind == TRUE and s2.kind == FALSE:
                return p1
            if s2.kind == TRUE and s1.kind == FALSE:
                return p2
        return self._intern(v, elems)

    def _intern(self, v, elems) -> SddNode:
        elems.sort(key=lambda e: (e[0].id, e[1].id))
        key = (v.pos, tuple((p.id, s.id) for p, s in elems))
        node = self._unique.get(key)
        if node is None:
            node = self._new(kind=DECISION, vtree=v, elements=tuple(elems))
            self._unique[key] = node
        return node

    def negate(self, n: SddNode) -> SddNode:
        if n.neg is None:
            # only decision nodes are created without their negation
            neg = self._intern(n.vtree, [(p, self.negate(s)) for p, s in n.elements])
            n.neg, neg.neg = neg, n
        return n.neg

    def _elements_at(self, n: SddNode, v: Vtree):
        if n.vtree is v:
            return n.elements
        if v.in_left(n.vtree):
            return ((n, self.true), (self.negate(n), self.false))
        return ((self.true, n),)

    def apply(self, a: SddNode, b: SddNode, op: str) -> SddNode:
        if op == AND:
            if a.kind == FALSE or b.kind == FALSE:
                return self.false
            if a.kind == TRUE:
                return b
            if b.kind == TRUE:
                return a
            if a is b:
                return a
            if a.neg is b:
                return self.false
        elif op == OR:
            if a.kind == TRUE or b.kind == TRUE:
                return self.true
            if a.kind == FALSE:
                return b
            if b.kind == FALSE:
                return a
            if a is b:
                return a
            if a.neg is b:
                return self.true
        else:
            raise ValueError(f"unknown operation {op!r}")
        if a.id > b.id:
            a, b = b, a
        key = (op, a.id, b.id)
        hit = self._apply_cache.get(key)
        if hit is not None:
            return hit
        va, vb = a.vtree, b.vtree
        v = va if va is vb else lca(va, vb)
        ea = self._elements_at(a, v)
        eb = self._elements_at(b, v)
        elements = []
        for p1, s1 in ea:
            for p2, s2 in eb:
                p = self.apply(p1, p2, AND)
                if p.kind == FALSE:
                    continue
                elements.append((p, self.apply(s1, s2, op)))
        result = self.decision(v, elements)
        self._apply_cache[key] = result
        return result

    def conjoin(self, a, b):
        return self.apply(a, b, AND)

    def disjoin(self, a, b):
        return self.apply(a, b, OR)

    def condition(self, n: SddNode, var: str, value: int) -> SddNode:
        """Restrict ``n`` to ``var = value``; the result no longer mentions ``var``."""
        if n.kind in (FALSE, TRUE):
            return n
        if n.kind == LITERAL:
            if n.var != var:
                return n
            return self.true if n.value == value else self.false
        v = n.vtree
        leaf = self.leaf[var]
        if not v.contains(leaf):
            return n
        key = (n.id, var, value)
        hit = self._cond_cache.get(key)
        if hit is not None:
            return hit
        if v.in_left(leaf):
            elements = [(self.condition(p, var, value), s) for p, s in n.elements]
        else:
            elements = [(p, self.condition(s, var, value)) for p, s in n.elements]
        result = self.decision(v, elements)
        self._cond_cache[key] = result
        return result

    def condition_all(self, n: SddNode, partial: Mapping[str, int]) -> SddNode:
        for var, value in partial.items():
            n = self.condition(n, var, int(value))
            if n.kind == FALSE:
                break
        return n

    # -- compilation -------------------------------------------------------
    def compile_formula(self, f: Formula) -> SddNode:
        if isinstance(f, Atom):
            return self.literal(f.name, 1)
        if isinstance(f, Not):
            return self.negate_any(self.compile_formula(f.arg))
        if isinstance(f, And):
            out = self.true
            for g in f.args:
                out = self.apply(out, self.compile_formula(g), AND)
                if out.kind == FALSE:
                    break
            return out
        if isinstance(f, Or):
            out = self.false
            for g in f.args:
                out = self.apply(out, self.compile_formula(g), OR)
                if out.kind == TRUE:
                    break
            return out
        if isinstance(f, Implies):
            return self.apply(self.negate_any(self.compile_formula(f.lhs)),
                              self.compile_formula(f.rhs), OR)
        if isinstance(f, Iff):
            a = self.compile_formula(f.lhs)
            b = self.compile_formula(f.rhs)
            return self.apply(self.apply(a, b, AND),
                              self.apply(self.negate_any(a), self.negate_any(b), AND), OR)
        raise TypeError(f"not a formula: {f!r}")

    negate_any = negate

    # -- queries -----------------------------------------------------------
    def _count(self, n: SddNode) -> int:
        """Models of ``n`` over the variables of ``n.vtree``."""
        if n.kind == LITERAL:
            return 1
        hit = self._mc_cache.get(n.id)
        if hit is not None:
            return hit
        v = n.vtree
        total = 0
        for p, s in n.elements:
            total += self.count_over(p, v.left) * self.count_over(s, v.right)
        self._mc_cache[n.id] = total
        return total

    def count_over(self, n: SddNode, w: Vtree) -> int:
        if n.kind == FALSE:
            return 0
        if n.kind == TRUE:
            return 1 << w.size
        return self._count(n) << (w.size - n.vtree.size)

    def evaluate(self, n: SddNode, w: Mapping[str, int]) -> bool:
        memo: dict = {}

        def ev(x):
            if x.kind == TRUE:
                return True
            if x.kind == FALSE:
                return False
            if x.kind == LITERAL:
                return int(w[x.var]) == x.value
            hit = memo.get(x.id)
            if hit is None:
                hit = memo[x.id] = any(ev(p) and ev(s) for p, s in x.elements)
            return hit

        return ev(n)

    def iter_models(self, n: SddNode, w: Vtree, fixed: Mapping[str, int]) -> Iterator[dict]:
        """Models of ``n`` over ``vars(w)``; variables in ``fixed`` take their
        fixed value instead of being enumerated freely."""
        if n.kind == FALSE:
            return
        if n.kind == TRUE:
            yield from _free(w, fixed)
            return
        if n.vtree is not w:
            outer = [leaf for leaf in w.leaves() if not n.vtree.contains(leaf)]
            for inner in self.iter_models(n, n.vtree, fixed):
                for rest in _free_leaves(outer, fixed):
                    yield {**rest, **inner}
            return
        if n.kind == LITERAL:
            yield {n.var: n.value}
            return
        for p, s in n.elements:
            for mp in self.iter_models(p, w.left, fixed):
                for ms in self.iter_models(s, w.right, fixed):
                    yield {**mp, **ms}


def _free(w: Vtree, fixed):
    return _free_leaves(w.leaves(), fixed)


def _free_leaves(leaves, fixed):
    names = [leaf.var for leaf in leaves]
    choices = [(int(fixed[v]),) if v in fixed else (0, 1) for v in names]
    for bits in product(*choices):
        yield dict(zip(names, bits))


class Sdd:
    """A compiled circuit: a root node in a manager over a vtree."""

    def __init__(self, manager: SddManager, root: SddNode):
        self.manager = manager
        self.root = root

    @property
    def vtree(self) -> Vtree:
        return self.manager.vtree

    @property
    def variables(self) -> tuple:
        return self.manager.vtree.var_order

    def is_false(self) -> bool:
        return self.root.kind == FALSE

    def nodes(self) -> list:
        """Reachable nodes, children before parents, in deterministic order."""
        order, seen = [], set()
        stack = [(self.root, False)]
        while stack:
            n, done = stack.pop()
            if done:
                order.append(n)
                continue
            if n.id in seen:
                continue
            seen.add(n.id)
            stack.append((n, True))
            if n.kind == DECISION:
                for p, s in reversed(n.elements):
                    stack.append((s, False))
                    stack.append((p, False))
        return order

    def size(self) -> int:
        return sum(len(n.elements) for n in self.nodes() if n.kind == DECISION)

    def __len__(self):
        return len(self.nodes())

    def model_count(self) -> int:
        return model_count(self)

    def evaluate(self, w: Mapping[str, int]) -> bool:
        return self.manager.evaluate(self.root, w)

    def __repr__(self):
        return f"Sdd({len(self)} nodes over {len(self.variables)} variables)"


def _check_same(x: Sdd, y: Sdd):
    if x.manager is not y.manager:
        raise ValueError("circuits were built over different vtrees/managers")


def compile(constraints: Iterable[Formula], vtree: Vtree, manager: SddManager | None = None) -> Sdd:
    """Conjunction of ``constraints`` as a canonical SDD over ``vtree``."""
    mgr = manager or SddManager(vtree)
    if mgr.vtree is not vtree:
        raise ValueError("manager was built over a different vtree")
    root = mgr.true
    for f in constraints:
        root = mgr.apply(root, mgr.compile_formula(f), AND)
        if root.kind == FALSE:
            break
    return Sdd(mgr, root)


def compile_scenario(scenario, vtree: Vtree | None = None, strategy: str = "balanced") -> Sdd:
    from .vtree import build_vtree

    if vtree is None:
        vtree = build_vtree(scenario, strategy)
    elif set(vtree.var_order) != set(scenario.variables):
        raise ValueError("vtree variables do not match the scenario")
    return compile(scenario.theory(), vtree)


def apply(x: Sdd, y: Sdd, op: str) -> Sdd:
    _check_same(x, y)
    return Sdd(x.manager, x.manager.apply(x.root, y.root, op))


def negate(x: Sdd) -> Sdd:
    return Sdd(x.manager, x.manager.negate_any(x.root))


def condition(x: Sdd, partial: Mapping[str, int]) -> Sdd:
    return Sdd(x.manager, x.manager.condition_all(x.root, partial))


def model_count(s: Sdd) -> int:
    return s.manager.count_over(s.root, s.manager.vtree)


def enumerate_models(s: Sdd, partial: Mapping[str, int] | None = None) -> Iterator[dict]:
    """Complete assignments satisfying ``s`` and agreeing with ``partial``."""
    partial = {k: int(v) for k, v in (partial or {}).items()}
    unknown = set(partial) - set(s.variables)
    if unknown:
        raise KeyError(f"unknown variables {sorted(unknown)}")
    root = s.manager.condition_all(s.root, partial)
    order = s.variables
    for m in s.manager.iter_models(root, s.manager.vtree, partial):
        yield {v: m[v] for v in order}


def check_partitions(s: Sdd) -> bool:
    """Structural check of the partition property at every decision node."""
    mgr = s.manager
    for n in s.nodes():
        if n.kind != DECISION:
            continue
        primes = [p for p, _ in n.elements]
        if any(p.kind == FALSE for p in primes):
            return False
        union = mgr.false
        for i, p in enumerate(primes):
            for q in primes[i + 1:]:
                if mgr.apply(p, q, AND).kind != FALSE:
                    return False
            union = mgr.apply(union, p, OR)
        if union.kind != TRUE:
            return False
        subs = [s_.id for _, s_ in n.elements]
        if len(set(subs)) != len(subs):
            return False
        v = n.vtree
        for p, s_ in n.elements:
            if p.kind in (LITERAL, DECISION) and not v.in_left(p.vtree):
                return False
            if s_.kind in (LITERAL, DECISION) and not v.in_right(s_.vtree):
                return False
    return True


# -- serialization -----------------------------------------------------------


def _canonical_order(s: Sdd) -> tuple:
    """Nodes children-first, with elements ordered by a structural hash.

    Node ids depend on construction history, so they cannot order anything
    that should be identical for equal circuits. The hash of a node covers
    its kind, variable, vtree position and the hashes of its elements.
    """
    digest: dict = {}
    for n in s.nodes():
        if n.kind == DECISION:
            parts = sorted(digest[p.id] + digest[q.id] for p, q in n.elements)
            body = f"D{n.vtree.pos}:" + "".join(parts)
        elif n.kind == LITERAL:
            body = f"L{n.var}={n.value}"
        else:
            body = "T" if n.kind == TRUE else "F"
        digest[n.id] = hashlib.blake2b(body.encode(), digest_size=16).hexdigest()
    elems = {n.id: sorted(n.elements, key=lambda e: (digest[e[0].id], digest[e[1].id]))
             for n in s.nodes() if n.kind == DECISION}
    order, seen = [], set()
    stack = [(s.root, False)]
    while stack:
        n, done = stack.pop()
        if done:
            order.append(n)
            continue
        if n.id in seen:
            continue
        seen.add(n.id)
        stack.append((n, True))
        for p, q in reversed(elems.get(n.id, ())):
            stack.append((q, False))
            stack.append((p, False))
    return order, elems


def dumps(s: Sdd) -> str:
    """Text form: one node per line, children before parents.

    ``F`` / ``T`` terminals, ``L <var> <0|1>`` literals and
    ``D <vtree-pos> <prime> <sub> ...`` decisions. Ids are renumbered in
    emission order and the emission order is structural, so equal circuits
    serialize identically however they were built.
    """
    lines = ["vtree " + vtree_to_text(s.vtree)]
    ids: dict = {}
    body = []
    order, elems = _canonical_order(s)
    for n in order:
        i = ids[n.id] = len(ids)
        if n.kind == FALSE:
            body.append(f"{i} F")
        elif n.kind == TRUE:
            body.append(f"{i} T")
        elif n.kind == LITERAL:
            body.append(f"{i} L {n.var} {n.value}")
        else:
            pairs = " ".join(f"{ids[p.id]} {ids[q.id]}" for p, q in elems[n.id])
            body.append(f"{i} D {n.vtree.pos} {pairs}")
    lines.append(f"sdd {len(body)}")
    lines.extend(body)
    lines.append(f"root {ids[s.root.id]}")
    return "\n".join(lines) + "\n"


def loads(text: str, manager: SddManager | None = None) -> Sdd:
    lines = [ln.strip() for ln in text.splitlines() if ln.strip() and not ln.startswith("#")]
    if not lines or not lines[0].startswith("vtree "):
        raise ParseError("circuit text must start with a 'vtree' line")
    if manager is None:
        manager = SddManager(parse_vtree(lines[0][6:]))
    by_pos = {v.pos: v for v in manager.vtree.nodes()}
    nodes: dict = {}
    root = None
    for ln in lines[1:]:
        parts = ln.split()
        if parts[0] == "sdd":
            continue
        if parts[0] == "root":
            root = nodes[int(parts[1])]
            continue
        try:
            i, kind = int(parts[0]), parts[1]
            if kind == "F":
                nodes[i] = manager.false
            elif kind == "T":
                nodes[i] = manager.true
            elif kind == "L":
                nodes[i] = manager.literal(parts[2], int(parts[3]))
            elif kind == "D":
                v = by_pos[int(parts[2])]
                ids = [int(x) for x in parts[3:]]
                elems = [(nodes[ids[k]], nodes[ids[k + 1]]) for k in range(0, len(ids), 2)]
                nodes[i] = manager.decision(v, elems)
            else:
                raise ParseError(f"unknown node kind {kind!r}")
        except (KeyError, IndexError, ValueError) as e:
            raise ParseError(f"malformed circuit line {ln!r}: {e}") from None
    if root is None:
        raise ParseError("circuit text has no root line")
    return Sdd(manager, root)
