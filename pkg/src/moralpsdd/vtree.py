"""Variable trees: full binary trees whose leaves are the scenario variables."""

from __future__ import annotations

from typing import Iterator, Sequence

from .errors import ParseError


class Vtree:
    """A vtree node. Internal nodes have ``left``/``right``; leaves have ``var``.

    After :func:`finalize`, every node knows its in-order position ``pos`` and
    the position range ``[lo, hi]`` of its subtree, which makes subtree
    membership tests O(1).
    """

    __slots__ = ("left", "right", "var", "parent", "pos", "lo", "hi", "depth",
                 "variables", "size")

    def __init__(self, left=None, right=None, var=None):
        self.left = left
        self.right = right
        self.var = var
        self.parent = None
        self.pos = self.lo = self.hi = self.depth = -1
        self.variables: frozenset = frozenset()
        self.size = 0

    @property
    def id(self) -> int:
        return self.pos

    def is_leaf(self) -> bool:
        return self.var is not None

    def contains(self, other: "Vtree") -> bool:
        return self.lo <= other.pos <= self.hi

    def in_left(self, other: "Vtree") -> bool:
        return self.lo <= other.pos < self.pos

    def in_right(self, other: "Vtree") -> bool:
        return self.pos < other.pos <= self.hi

    def nodes(self) -> Iterator["Vtree"]:
        """In-order traversal."""
        stack, node = [], self
        while stack or node is not None:
            while node is not None:
                stack.append(node)
                node = node.left
            node = stack.pop()
            yield node
            node = node.right

    def leaves(self) -> list:
        return [n for n in self.nodes() if n.is_leaf()]

    @property
    def var_order(self) -> tuple:
        return tuple(n.var for n in self.leaves())

    def height(self) -> int:
        return max(n.depth for n in self.nodes()) - self.depth

    def __repr__(self):
        return f"Vtree({to_text(self)})"


def lca(a: Vtree, b: Vtree) -> Vtree:
    while not a.contains(b):
        a = a.parent
    return a


def finalize(root: Vtree) -> Vtree:
    seen = set()
    pos = 0
    for n in root.nodes():
        n.pos = pos
        pos += 1
    def fill(n, depth, parent):
        n.depth = depth
        n.parent = parent
        if n.is_leaf():
            if n.var in seen:
                raise ParseError(f"variable {n.var!r} appears twice in vtree")
            seen.add(n.var)
            n.lo = n.hi = n.pos
            n.variables = frozenset([n.var])
        else:
            fill(n.left, depth + 1, n)
            fill(n.right, depth + 1, n)
            n.lo, n.hi = n.left.lo, n.right.hi
            n.variables = n.left.variables | n.right.variables
        n.size = len(n.variables)
    fill(root, 0, None)
    return root


def build_vtree(variables, strategy: str = "balanced") -> Vtree:
    """Vtree over ``variables`` with leaves in the given order.

    ``variables`` may be a Scenario or a sequence of names. ``strategy`` is
    ``balanced`` or ``right-linear``.
    """
    names = list(getattr(variables, "variables", variables))
    if not names:
        raise ValueError("cannot build a vtree over zero variables")
    if strategy == "balanced":
        def bal(lo, hi):
            if hi - lo == 1:
                return Vtree(var=names[lo])
            mid = (lo + hi + 1) // 2
            return Vtree(bal(lo, mid), bal(mid, hi))
        root = bal(0, len(names))
    elif strategy in ("right-linear", "right_linear"):
        root = Vtree(var=names[-1])
        for v in reversed(names[:-1]):
            root = Vtree(Vtree(var=v), root)
    else:
        raise ValueError(f"unknown vtree strategy {strategy!r}")
    return finalize(root)


def to_text(v: Vtree) -> str:
    if v.is_leaf():
        return v.var
    return f"({to_text(v.left)} {to_text(v.right)})"


def parse_vtree(text: str, variables: Sequence[str] | None = None) -> Vtree:
    """Parse ``(A (B C))`` style nested pairs."""
    tokens = text.replace("(", " ( ").replace(")", " ) ").split()
    pos = 0

    def node():
        nonlocal pos
        if pos >= len(tokens):
            raise ParseError("unexpected end of vtree", pos)
        tok = tokens[pos]
        pos += 1
        if tok == "(":
            left = node()
            right = node()
            if pos >= len(tokens) or tokens[pos] != ")":
                raise ParseError("vtree node must have exactly two children", pos)
            pos += 1
            return Vtree(left, right)
        if tok == ")":
            raise ParseError("unexpected ')' in vtree", pos - 1)
        return Vtree(var=tok)

    root = node()
    if pos != len(tokens):
        raise ParseError("trailing tokens after vtree", pos)
    finalize(root)
    if variables is not None and set(root.var_order) != set(variables):
        raise ParseError("vtree leaves do not match the scenario variables")
    return root
