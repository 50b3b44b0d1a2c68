"""Utility functions over outcomes and learning them from a fitted model.

Learning rests on the proportionality assumption: in each context, the
probability of a decision is proportional to its expected utility. For a
linear utility this gives one least-squares row per supported (context,
decision) pair,

    Pr(D | X)  ~  sum_i w_i * Pr(O_i = 1 | D, X),

solved with nonnegative weights and an L2 penalty. The unknown
proportionality constant is removed by rescaling so that the best outcome
in the support has utility 1.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping

import numpy as np
from scipy.optimize import nnls

from .errors import ParseError, UtilityError
from .logic import Scenario
from .psdd import Psdd, support_table

DEFAULT_LAMBDA = 1e-3


@dataclass(frozen=True)
class UtilitySpec:
    context_relative: bool = False
    linear: bool = True
    regularization: float = DEFAULT_LAMBDA

    def __post_init__(self):
        if not self.regularization >= 0:
            raise UtilityError("regularization must be non-negative")


@dataclass
class UtilityFunction:
    """Normalized utility.

    ``weights`` maps a context key (a bit tuple over ``contexts``, or None
    when the function is not context-relative) to either an array of
    per-outcome weights (linear form) or a dict from outcome bit tuples to
    values (tabular form; unlisted outcomes are worth 0). ``scale`` records
    the raw value that was mapped to 1.
    """

    outcomes: tuple
    weights: dict
    linear: bool = True
    contexts: tuple = ()
    context_relative: bool = False
    scale: float = 1.0
    offset: float = 0.0
    flags: tuple = ()

    def __post_init__(self):
        self.outcomes = tuple(self.outcomes)
        self.contexts = tuple(self.contexts)
        for key, w in self.weights.items():
            vals = np.asarray(w, dtype=float) if self.linear else np.array(list(w.values()), dtype=float)
            if self.linear and vals.shape != (len(self.outcomes),):
                raise UtilityError(f"weight vector for context {key} has the wrong length")
            if np.any(vals < 0) or not np.all(np.isfinite(vals)):
                raise UtilityError(f"utility weights must be finite and non-negative (context {key})")
            if self.linear:
                self.weights[key] = vals

    def _key(self, context):
        if not self.context_relative:
            if context:
                raise UtilityError("context given to a utility that is not context-relative")
            return None
        if context is None:
            raise UtilityError("context-relative utility needs a context")
        try:
            key = tuple(int(context[v]) for v in self.contexts)
        except KeyError as e:
            raise UtilityError(f"context is missing variable {e.args[0]!r}") from None
        if key not in self.weights:
            raise UtilityError(f"no utility defined for context {_bits(key)}")
        return key

    def __call__(self, outcome: Mapping[str, int], context=None) -> float:
        return eval_utility(self, outcome, context)

    def value(self, world: Mapping[str, int]) -> float:
        """Utility of a complete world; the context is read from the world."""
        return eval_utility(self, world, world if self.context_relative else None)

    def shifted(self, k: float) -> "UtilityFunction":
        """The same function plus a constant (leaves [0, 1])."""
        return UtilityFunction(self.outcomes, dict(self.weights), self.linear, self.contexts,
                               self.context_relative, self.scale, self.offset + k, self.flags)


def eval_utility(u: UtilityFunction, outcome: Mapping[str, int], context=None) -> float:
    key = u._key(context)
    w = u.weights[key]
    try:
        bits = tuple(int(outcome[v]) for v in u.outcomes)
    except KeyError as e:
        raise UtilityError(f"outcome is missing variable {e.args[0]!r}") from None
    if u.linear:
        val = math.fsum(wi for wi, b in zip(w, bits) if b)
    else:
        val = w.get(bits, 0.0)
    return val + u.offset


def _bits(t) -> str:
    return "".join(str(b) for b in t)


# ---------------------------------------------------------------------------
# Learning
# ---------------------------------------------------------------------------


def ridge_nnls(A: np.ndarray, b: np.ndarray, lam: float) -> np.ndarray:
    """argmin_{w >= 0} |Aw - b|^2 + lam |w|^2, via NNLS on the stacked system."""
    A = np.asarray(A, dtype=float)
    b = np.asarray(b, dtype=float)
    if lam > 0:
        A = np.vstack([A, math.sqrt(lam) * np.eye(A.shape[1])])
        b = np.concatenate([b, np.zeros(A.shape[1])])
    w, _ = nnls(A, b, maxiter=max(10_000, 50 * A.shape[1]))
    return w


@dataclass
class _Design:
    context_keys: list          # one per (x, d) row
    targets: np.ndarray         # Pr(d | x)
    features: np.ndarray        # Pr(o-feature | d, x)
    support_outcomes: dict      # context key -> set of outcome bit tuples in the circuit support
    feature_names: list = field(default_factory=list)
    empty_contexts: list = field(default_factory=list)


def _design(p: Psdd, scenario: Scenario, linear: bool) -> _Design:
    worlds, probs = support_table(p)
    if len(worlds) == 0:
        raise UtilityError("the model has no support")
    col = {v: i for i, v in enumerate(p.variables)}
    ci = [col[v] for v in scenario.contexts]
    di = [col[v] for v in scenario.decisions]
    oi = [col[v] for v in scenario.outcomes]
    X = worlds[:, ci]
    XD = worlds[:, ci + di]
    O = worlds[:, oi]
    xkeys, xinv = np.unique(X, axis=0, return_inverse=True)
    xinv = xinv.ravel()
    px = np.bincount(xinv, weights=probs, minlength=len(xkeys))
    gkeys, ginv = np.unique(XD, axis=0, return_inverse=True)
    ginv = ginv.ravel()
    pg = np.bincount(ginv, weights=probs, minlength=len(gkeys))
    if linear:
        feats = np.stack([np.bincount(ginv, weights=probs * O[:, j], minlength=len(gkeys))
                          for j in range(O.shape[1])], axis=1)
        names = list(scenario.outcomes)
    else:
        okeys, oinv = np.unique(O, axis=0, return_inverse=True)
        oinv = oinv.ravel()
        feats = np.zeros((len(gkeys), len(okeys)))
        np.add.at(feats, (ginv, oinv), probs)
        names = [tuple(int(b) for b in k) for k in okeys]
    xmap = {tuple(int(b) for b in k): i for i, k in enumerate(xkeys)}
    support_outcomes: dict = {}
    for xk, ok in zip(map(tuple, X.tolist()), map(tuple, O.tolist())):
        support_outcomes.setdefault(xk, set()).add(ok)
    keep = pg > 0
    gx = [tuple(int(b) for b in k[: len(ci)]) for k in gkeys]
    targets = np.array([pg[i] / px[xmap[gx[i]]] if keep[i] else 0.0 for i in range(len(gkeys))])
    with np.errstate(invalid="ignore", divide="ignore"):
        features = feats / pg[:, None]
    rows = np.flatnonzero(keep)
    empty = [k for k, i in xmap.items() if px[i] <= 0]
    return _Design([gx[i] for i in rows], targets[rows], features[rows], support_outcomes,
                   names, sorted(empty))


def _normalize(w, linear, outcomes_in_support, names):
    """Max-support utility of raw weights ``w``."""
    if linear:
        return max(float(np.dot(w, o)) for o in outcomes_in_support)
    table = dict(zip(names, w))
    return max(table.get(o, 0.0) for o in outcomes_in_support)


def learn_utility(p: Psdd, scenario: Scenario, spec: UtilitySpec | None = None) -> UtilityFunction:
    spec = spec or UtilitySpec()
    if not scenario.outcomes:
        raise UtilityError("scenario has neither outcomes nor decisions")
    d = _design(p, scenario, spec.linear)
    if len(d.targets) == 0:
        raise UtilityError("no supported (context, decision) pairs to learn from")
    flags = []
    weights: dict = {}
    scales = []

    def solve(rows, support, label):
        A, b = d.features[rows], d.targets[rows]
        w = ridge_nnls(A, b, spec.regularization) if np.any(A) else np.zeros(A.shape[1])
        scale = _normalize(w, spec.linear, support, d.feature_names) if np.any(w) else 0.0
        if scale <= 0:
            flags.append(f"degenerate system{label}; uniform weights used")
            w = np.ones(A.shape[1])
            scale = _normalize(w, spec.linear, support, d.feature_names)
            if scale <= 0:
                scale = 1.0
        return w / scale, scale

    def pack(w):
        if spec.linear:
            return w
        return {k: float(v) for k, v in zip(d.feature_names, w) if v > 0}

    if spec.context_relative:
        keys = sorted(d.support_outcomes)
        for key in keys:
            rows = [i for i, k in enumerate(d.context_keys) if k == key]
            if not rows:
                flags.append(f"context {_bits(key)} has no data; uniform weights used")
                w = np.ones(d.features.shape[1])
                scale = _normalize(w, spec.linear, d.support_outcomes[key], d.feature_names)
                weights[key] = pack(w / scale)
                continue
            w, scale = solve(rows, d.support_outcomes[key], f" in context {_bits(key)}")
            weights[key] = pack(w)
            scales.append(scale)
    else:
        support = set().union(*d.support_outcomes.values())
        w, scale = solve(list(range(len(d.targets))), support, "")
        weights[None] = pack(w)
        scales.append(scale)
    return UtilityFunction(
        outcomes=tuple(scenario.outcomes), weights=weights, linear=spec.linear,
        contexts=tuple(scenario.contexts) if spec.context_relative else (),
        context_relative=spec.context_relative,
        scale=max(scales) if scales else 1.0, flags=tuple(flags),
    )


def constant_utility(scenario: Scenario, value: float = 1.0) -> UtilityFunction:
    """U = value everywhere (tabular form with an offset)."""
    return UtilityFunction(tuple(scenario.outcomes), {None: {}}, linear=False, offset=value)


def linear_utility(weights: Mapping[str, float], scenario: Scenario | None = None) -> UtilityFunction:
    outcomes = tuple(scenario.outcomes) if scenario is not None else tuple(weights)
    unknown = [v for v in weights if v not in outcomes]
    if unknown:
        raise UtilityError(f"unknown outcome variables {unknown}")
    return UtilityFunction(outcomes, {None: np.array([float(weights.get(v, 0.0)) for v in outcomes])})


def max_support_utility(u: UtilityFunction, p: Psdd) -> float:
    worlds, _ = support_table(p)
    return max(u.value(dict(zip(p.variables, (int(b) for b in w)))) for w in worlds)


# ---------------------------------------------------------------------------
# File format
# ---------------------------------------------------------------------------

_HEADER = ("utility", "outcomes", "contexts", "scale", "offset", "flag")


def dumps_utility(u: UtilityFunction) -> str:
    lines = [f"utility {'linear' if u.linear else 'tabular'}",
             "outcomes " + " ".join(u.outcomes)]
    if u.context_relative:
        lines.append("contexts " + " ".join(u.contexts))
    lines.append(f"scale {float(u.scale)!r}")
    if u.offset:
        lines.append(f"offset {float(u.offset)!r}")
    lines.extend(f"flag {f}" for f in u.flags)
    for key in sorted(u.weights, key=lambda k: () if k is None else k):
        w = u.weights[key]
        if key is not None:
            lines.append(f"[context {_bits(key)}]")
        if u.linear:
            lines.extend(f"{v} {float(x)!r}" for v, x in zip(u.outcomes, w))
        else:
            lines.extend(f"{_bits(o)} {float(x)!r}" for o, x in sorted(w.items()))
    return "\n".join(lines) + "\n"


def save_utility(u: UtilityFunction, path) -> None:
    Path(path).write_text(dumps_utility(u))


def load_utility(path, scenario: Scenario | None = None) -> UtilityFunction:
    return loads_utility(Path(path).read_text(), scenario)


def loads_utility(text: str, scenario: Scenario | None = None) -> UtilityFunction:
    """Parse a utility file.

    A bare list of ``variable weight`` lines is a linear, context-free
    function over the scenario's outcomes (unlisted outcomes weigh 0).
    """
    head: dict = {}
    flags = []
    sections: dict = {}
    current = None
    started = False
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if line.startswith("["):
            m = line.strip("[]").split()
            if len(m) != 2 or m[0] != "context" or set(m[1]) - {"0", "1"}:
                raise ParseError(f"line {lineno}: bad section header {line!r}")
            current = tuple(int(c) for c in m[1])
            sections.setdefault(current, [])
            started = True
            continue
        parts = line.split(None, 1)
        if not started and parts[0] in _HEADER:
            if parts[0] == "flag":
                flags.append(parts[1] if len(parts) > 1 else "")
            else:
                head[parts[0]] = parts[1].split() if len(parts) > 1 else []
            continue
        started = True
        if len(parts) != 2:
            raise ParseError(f"line {lineno}: expected 'name value', got {line!r}")
        try:
            val = float(parts[1])
        except ValueError:
            raise ParseError(f"line {lineno}: bad number {parts[1]!r}") from None
        if not math.isfinite(val) or val < 0:
            raise UtilityError(f"line {lineno}: utility weights must be non-negative, got {val!r}")
        sections.setdefault(current, []).append((parts[0], val, lineno))

    kind = head.get("utility", ["linear"])[0]
    if kind not in ("linear", "tabular"):
        raise ParseError(f"unknown utility kind {kind!r}")
    linear = kind == "linear"
    if "outcomes" in head:
        outcomes = tuple(head["outcomes"])
    elif scenario is not None:
        outcomes = tuple(scenario.outcomes)
    elif linear:
        outcomes = tuple(dict.fromkeys(n for sec in sections.values() for n, _, _ in sec))
    else:
        raise ParseError("tabular utility needs an 'outcomes' line or a scenario")
    if scenario is not None:
        unknown = [v for v in outcomes if v not in scenario]
        if unknown:
            raise UtilityError(f"unknown variables {unknown}")
    contexts = tuple(head.get("contexts", ()))
    if scenario is not None:
        unknown = [v for v in contexts if v not in scenario]
        if unknown:
            raise UtilityError(f"unknown context variables {unknown}")
    context_relative = bool(contexts)
    weights: dict = {}
    for key, entries in sections.items():
        if context_relative != (key is not None):
            raise ParseError("context sections must match the 'contexts' line")
        if key is not None and len(key) != len(contexts):
            raise ParseError(f"context {_bits(key)} has the wrong length")
        if linear:
            w = np.zeros(len(outcomes))
            pos = {v: i for i, v in enumerate(outcomes)}
            for name, val, lineno in entries:
                if name not in pos:
                    raise UtilityError(f"line {lineno}: unknown variable {name!r}")
                w[pos[name]] = val
            weights[key] = w
        else:
            table = {}
            for name, val, lineno in entries:
                if len(name) != len(outcomes) or set(name) - {"0", "1"}:
                    raise UtilityError(f"line {lineno}: bad outcome bitstring {name!r}")
                table[tuple(int(c) for c in name)] = val
            weights[key] = table
    if not weights:
        weights[None] = np.zeros(len(outcomes)) if linear else {}
    scale = float(head["scale"][0]) if "scale" in head else 1.0
    offset = float(head["offset"][0]) if "offset" in head else 0.0
    return UtilityFunction(outcomes, weights, linear, contexts, context_relative, scale,
                           offset, tuple(flags))
