"""Datasets of complete 0/1 assignments, CSV I/O, and synthetic generators."""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Sequence

import numpy as np

from .errors import DataError
from .logic import Scenario, eval_formula, parse_scenario

UTILITY_COLUMN = "utility"


@dataclass
class Dataset:
    """Rows of complete boolean assignments, one column per variable."""

    variables: tuple
    rows: np.ndarray  # (n, len(variables)) uint8
    utilities: np.ndarray | None = None
    _index: dict = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        self.variables = tuple(self.variables)
        self.rows = np.asarray(self.rows, dtype=np.uint8).reshape(-1, len(self.variables))
        if self.utilities is not None:
            self.utilities = np.asarray(self.utilities, dtype=float)
            if self.utilities.shape != (len(self.rows),):
                raise DataError("utility column length does not match the rows")
        self._index = {v: i for i, v in enumerate(self.variables)}

    def __len__(self):
        return len(self.rows)

    def column(self, var: str) -> np.ndarray:
        return self.rows[:, self._index[var]]

    def row(self, i: int) -> dict:
        return dict(zip(self.variables, (int(b) for b in self.rows[i])))

    def reorder(self, variables: Sequence[str]) -> "Dataset":
        if set(variables) != set(self.variables):
            raise DataError("dataset columns do not match the variables")
        idx = [self._index[v] for v in variables]
        return Dataset(tuple(variables), self.rows[:, idx], self.utilities)

    def unique_rows(self):
        """(unique rows, counts, first row index) in lexicographic row order."""
        v = len(self.variables)
        if v == 0 or v > 63:
            uniq, first, counts = np.unique(self.rows, axis=0, return_index=True, return_counts=True)
            return uniq, counts, first
        # pack each row into one integer, most significant bit first, so
        # integer order is row order
        powers = np.left_shift(np.uint64(1), np.arange(v - 1, -1, -1, dtype=np.uint64))
        keys = self.rows.astype(np.uint64) @ powers
        _, first, counts = np.unique(keys, return_index=True, return_counts=True)
        return self.rows[first], counts, first


def validate_rows(data: Dataset, scenario: Scenario) -> None:
    """Raise :class:`DataError` naming offending rows and groups."""
    uniq, _, first = data.unique_rows()
    bad_onehot: dict = {}
    bad_constraint: list = []
    for row, idx in zip(uniq, first):
        w = dict(zip(data.variables, (int(b) for b in row)))
        for g in scenario.onehot:
            if sum(w[v] for v in g) != 1:
                bad_onehot.setdefault(tuple(g), []).append(int(idx))
                break
        else:
            for c in scenario.constraints:
                if not eval_formula(c, w):
                    bad_constraint.append(int(idx))
                    break
    if bad_onehot:
        group, rows = next(iter(bad_onehot.items()))
        rows = _all_rows_like(data, uniq, first, rows)
        raise DataError(
            f"rows {rows[:10]} violate the exactly-one group {{{', '.join(group)}}}",
            rows,
        )
    if bad_constraint:
        rows = _all_rows_like(data, uniq, first, bad_constraint)
        raise DataError(f"rows {rows[:10]} violate the scenario constraints", rows)


def _all_rows_like(data, uniq, first, firsts):
    bad = {tuple(data.rows[i]) for i in firsts}
    return [i for i, r in enumerate(map(tuple, data.rows)) if r in bad]


def load_dataset(path, scenario: Scenario) -> Dataset:
    """Read a CSV with a header of variable names (plus optional ``utility``)."""
    text = Path(path).read_text() if not hasattr(path, "read") else path.read()
    return loads_dataset(text, scenario)


def loads_dataset(text: str, scenario: Scenario) -> Dataset:
    reader = csv.reader(io.StringIO(text))
    try:
        header = [h.strip() for h in next(reader)]
    except StopIteration:
        raise DataError("empty dataset file") from None
    has_u = UTILITY_COLUMN in header
    names = [h for h in header if h != UTILITY_COLUMN]
    if sorted(names) != sorted(scenario.variables) or len(set(names)) != len(names):
        missing = sorted(set(scenario.variables) - set(names))
        extra = sorted(set(names) - set(scenario.variables))
        raise DataError(f"header mismatch: missing {missing}, unexpected {extra}")
    ucol = header.index(UTILITY_COLUMN) if has_u else None
    cols = [i for i, h in enumerate(header) if h != UTILITY_COLUMN]
    rows, utils = [], []
    for lineno, rec in enumerate(reader):
        if not rec or all(not c.strip() for c in rec):
            continue
        if len(rec) != len(header):
            raise DataError(f"row {lineno} has {len(rec)} cells, expected {len(header)}", [lineno])
        cells = []
        for i in cols:
            c = rec[i].strip()
            if c not in ("0", "1"):
                raise DataError(f"row {lineno}, column {header[i]!r}: non-binary cell {c!r}", [lineno])
            cells.append(int(c))
        rows.append(cells)
        if has_u:
            try:
                utils.append(float(rec[ucol]))
            except ValueError:
                raise DataError(f"row {lineno}: bad utility {rec[ucol]!r}", [lineno]) from None
    data = Dataset(tuple(names), np.array(rows, dtype=np.uint8).reshape(-1, len(names)),
                   np.array(utils) if has_u else None)
    data = data.reorder(scenario.variables)
    validate_rows(data, scenario)
    return data


def dumps_dataset(data: Dataset) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    header = list(data.variables)
    if data.utilities is not None:
        header.append(UTILITY_COLUMN)
    w.writerow(header)
    for i, row in enumerate(data.rows):
        rec = [str(int(b)) for b in row]
        if data.utilities is not None:
            rec.append(repr(float(data.utilities[i])))
        w.writerow(rec)
    return buf.getvalue()


def save_dataset(data: Dataset, path) -> None:
    Path(path).write_text(dumps_dataset(data))


def from_assignments(assignments, variables, utilities=None) -> Dataset:
    rows = np.array([[int(a[v]) for v in variables] for a in assignments], dtype=np.uint8)
    return Dataset(tuple(variables), rows.reshape(-1, len(variables)), utilities)


# ---------------------------------------------------------------------------
# Builtin scenarios
# ---------------------------------------------------------------------------

BUILTIN = ("lung_cancer", "teamwork", "trolley")


def scenario_text(name: str) -> str:
    if name not in BUILTIN:
        raise KeyError(f"unknown builtin scenario {name!r}; choose from {BUILTIN}")
    return resources.files("moralpsdd").joinpath("scenarios").joinpath(f"{name}.scn").read_text()


def builtin_scenario(name: str) -> Scenario:
    return parse_scenario(scenario_text(name))


def builtin_scenarios() -> dict:
    return {name: builtin_scenario(name) for name in BUILTIN}


# ---------------------------------------------------------------------------
# Generators
# ---------------------------------------------------------------------------


def _check_prob(name, p, open_low=False):
    if not (0.0 < p <= 1.0 if open_low else 0.0 <= p <= 1.0):
        raise DataError(f"{name} must be a probability, got {p!r}")


@dataclass(frozen=True)
class LungCancerParameters:
    """Configuration of the staging process behind the lung-cancer data.

    None of these values are fixtures; they are plausible defaults in the
    range reported in the clinical staging literature and can be overridden.
    ``survival`` maps (thoracotomy, metastases) to the probability of
    surviving the treatment.
    """

    adherence: float = 0.9
    prevalence: float = 0.35
    ct_sensitivity: float = 0.52
    ct_specificity: float = 0.89
    m_sensitivity: float = 0.82
    m_specificity: float = 1.0
    m_mortality: float = 0.005
    survival: tuple = (
        ((1, 0), 0.90),  # thoracotomy, no metastases: curative
        ((1, 1), 0.55),  # futile thoracotomy
        ((0, 0), 0.60),  # radiotherapy instead of curative surgery
        ((0, 1), 0.70),  # radiotherapy, metastases
    )

    def __post_init__(self):
        _check_prob("adherence", self.adherence, open_low=True)
        for name in ("prevalence", "ct_sensitivity", "ct_specificity", "m_sensitivity",
                     "m_specificity", "m_mortality"):
            _check_prob(name, getattr(self, name))
        table = dict(self.survival)
        if set(table) != {(1, 0), (1, 1), (0, 0), (0, 1)}:
            raise DataError("survival table needs all four (thoracotomy, metastases) cells")
        for k, v in table.items():
            _check_prob(f"survival{k}", v)

    def survival_rate(self, t: int, mm: int) -> float:
        return dict(self.survival)[(t, mm)]


# Recommended choices at each decision point of the staging strategy.
LUNG_STRATEGY = {
    "ct": 1,          # perform a CT scan
    "m_ctpos": 1,     # mediastinoscopy after a positive CT
    "m_ctneg": 0,     # no mediastinoscopy after a negative CT
    "m_noct": 1,      # mediastinoscopy when no CT was done
    "t_notest": 1,    # thoracotomy when neither test was done
}


def generate_lung_cancer(n: int, seed: int = 0,
                         params: LungCancerParameters | None = None,
                         scenario: Scenario | None = None) -> Dataset:
    """Sample ``n`` patients from the staging process.

    Each decision point follows :data:`LUNG_STRATEGY` with probability
    ``params.adherence`` and takes the other choice otherwise. Once a test
    result is known the thoracotomy decision follows the most recent result.
    """
    if n < 0:
        raise DataError("n must be non-negative")
    params = params or LungCancerParameters()
    scenario = scenario or builtin_scenario("lung_cancer")
    rng = np.random.default_rng(seed)
    u = rng.random((n, 8))
    adh = params.adherence

    def follow(rec, x):
        return rec if x < adh else 1 - rec

    rows = []
    for r in u:
        mm = int(r[0] < params.prevalence)
        ct = follow(LUNG_STRATEGY["ct"], r[1])
        if ct:
            p_pos = params.ct_sensitivity if mm else 1 - params.ct_specificity
            ct_res = "pos" if r[2] < p_pos else "neg"
            m = follow(LUNG_STRATEGY["m_ctpos" if ct_res == "pos" else "m_ctneg"], r[3])
        else:
            ct_res = "na"
            m = follow(LUNG_STRATEGY["m_noct"], r[3])
        if m:
            p_pos = params.m_sensitivity if mm else 1 - params.m_specificity
            m_res = "pos" if r[4] < p_pos else "neg"
            s_dp = int(r[5] >= params.m_mortality)
        else:
            m_res = "na"
            s_dp = 1
        if m_res != "na":
            t = int(m_res == "neg")
        elif ct_res != "na":
            t = int(ct_res == "neg")
        else:
            t = follow(LUNG_STRATEGY["t_notest"], r[6])
        s_t = int(s_dp and r[7] < params.survival_rate(t, mm))
        rows.append({
            "MM": mm, "CTpos": int(ct_res == "pos"), "CTneg": int(ct_res == "neg"),
            "CTna": int(ct_res == "na"), "Mpos": int(m_res == "pos"),
            "Mneg": int(m_res == "neg"), "Mna": int(m_res == "na"),
            "CT": ct, "M": m, "T": t, "S_DP": s_dp, "S_T": s_t,
        })
    data = from_assignments(rows, scenario.variables)
    validate_rows(data, scenario)
    return data


TROLLEY_CHARACTERS = ("1", "5", "100", "Pe", "Fr", "Fa")
# Hand-specified stand-in preferences: value of saving each character, and
# of the agent staying alive.
TROLLEY_WEIGHTS = {"1": 0.20, "5": 0.55, "100": 0.95, "Pe": 0.05, "Fr": 0.45,
                   "Fa": 0.70, "Y": 0.60}
TROLLEY_SUCCESS = {"F": 0.6, "P": 0.8}


def trolley_outcome_model(action: str, a: str, b: str) -> list:
    """[(probability, {character: lives}, agent lives)] for one context."""
    if action == "I":
        return [(1.0, {a: 0, b: 1}, 1)]
    if action == "S":
        return [(1.0, {a: 1, b: 1}, 0)]
    p = TROLLEY_SUCCESS[action]
    return [(p, {a: 1, b: 0}, 1), (1.0 - p, {a: 0, b: 1}, 1)]


def trolley_expected_utility(action: str, a: str, b: str, weights=None) -> float:
    weights = weights or TROLLEY_WEIGHTS
    return sum(p * (sum(weights[c] * v for c, v in lives.items()) + weights["Y"] * y)
               for p, lives, y in trolley_outcome_model(action, a, b))


def generate_trolley(n: int, seed: int = 0, weights=None,
                     scenario: Scenario | None = None) -> Dataset:
    """Stand-in trolley data: uniform contexts, choices proportional to expected utility."""
    scenario = scenario or builtin_scenario("trolley")
    weights = weights or TROLLEY_WEIGHTS
    rng = np.random.default_rng(seed)
    contexts = [(a, b) for a in TROLLEY_CHARACTERS for b in TROLLEY_CHARACTERS if a != b]
    actions = ("I", "F", "P", "S")
    rows = []
    for _ in range(n):
        a, b = contexts[rng.integers(len(contexts))]
        eu = np.array([trolley_expected_utility(x, a, b, weights) for x in actions])
        act = actions[rng.choice(len(actions), p=eu / eu.sum())]
        outcomes = trolley_outcome_model(act, a, b)
        k = rng.choice(len(outcomes), p=[o[0] for o in outcomes])
        _, lives, y = outcomes[k]
        w = {v: 0 for v in scenario.variables}
        w[f"A_{a}"] = w[f"B_{b}"] = 1
        w[act] = 1
        for c, v in lives.items():
            w[f"L_{c}"] = v
        w["L_Y"] = y
        rows.append(w)
    data = from_assignments(rows, scenario.variables)
    validate_rows(data, scenario)
    return data


TEAMWORK_STRATEGIES = ("O", "L", "U", "S", "R")


def generate_teamwork(n: int, seed: int = 0, scenario: Scenario | None = None) -> Dataset:
    """Stand-in teamwork data with a per-row utility observation."""
    scenario = scenario or builtin_scenario("teamwork")
    rng = np.random.default_rng(seed)
    # skill-based and load-balancing help; random hurts; harder levels are worse
    effect = {"O": 0.0, "L": 0.6, "U": 0.2, "S": 0.9, "R": -0.7}
    base_p = {"O": 0.15, "L": 0.45, "U": 0.3, "S": 0.5, "R": 0.15}
    rows, utils = [], []
    for _ in range(n):
        level = int(rng.integers(1, 7))
        w = {v: 0 for v in scenario.variables}
        w[f"L_{level}"] = 1
        score = 2.5 - 0.25 * level
        for s in TEAMWORK_STRATEGIES:
            if rng.random() < base_p[s]:
                w[s] = 1
                score += effect[s]
        t = int(np.clip(round(score + rng.normal(0, 0.8)), 1, 5))
        q = int(np.clip(round(score + rng.normal(0, 0.8)), 1, 5))
        w[f"T_{t}"] = 1
        w[f"Q_{q}"] = 1
        rows.append(w)
        utils.append((t + q - 2) / 8.0)
    data = from_assignments(rows, scenario.variables, np.array(utils))
    validate_rows(data, scenario)
    return data


# ---------------------------------------------------------------------------
# Planted proportionality
# ---------------------------------------------------------------------------


@dataclass
class PlantedProblem:
    scenario: Scenario
    weights: dict           # outcome variable -> planted weight
    outcome_probs: dict     # (context, decision) -> array of Pr(O_i = 1)
    decision_probs: dict    # context -> array of Pr(D | X)


def planted_problem(seed: int, n_contexts: int = 3, n_decisions: int = 10,
                    n_outcomes: int = 4) -> PlantedProblem:
    """A scenario whose decision policy satisfies the proportionality assumption.

    Outcomes are independent given (X, D). Each context sees the same outcome
    table under a different permutation of the decisions, which keeps the
    normalizer of Pr(D | X) identical across contexts; the policy is then
    exactly linear in Pr(O_i = 1 | D, X) with one weight vector.
    """
    rng = np.random.default_rng(seed)
    ctx = [f"X_{i}" for i in range(1, n_contexts + 1)]
    dec = [f"D_{i}" for i in range(1, n_decisions + 1)]
    out = [f"O_{i}" for i in range(1, n_outcomes + 1)]
    lines = ["name planted", "context " + " ".join(ctx), "decision " + " ".join(dec),
             "outcome " + " ".join(out), "onehot " + " ".join(ctx),
             "onehot " + " ".join(dec), "action " + " ".join(dec)]
    scenario = parse_scenario("\n".join(lines) + "\n")
    w = rng.uniform(0.2, 1.0, n_outcomes)
    q = np.clip(rng.beta(0.3, 0.3, (n_decisions, n_outcomes)), 0.02, 0.98)
    outcome_probs, decision_probs = {}, {}
    for x in range(n_contexts):
        perm = rng.permutation(n_decisions)
        eu = q[perm] @ w
        decision_probs[x] = eu / eu.sum()
        for d in range(n_decisions):
            outcome_probs[(x, d)] = q[perm[d]]
    return PlantedProblem(scenario, dict(zip(out, w)), outcome_probs, decision_probs)


def generate_planted(problem: PlantedProblem, n: int, seed: int = 0) -> Dataset:
    s = problem.scenario
    rng = np.random.default_rng(seed)
    ctx, dec, out = s.contexts, s.decisions, s.outcomes
    rows = np.zeros((n, len(s.variables)), dtype=np.uint8)
    idx = {v: i for i, v in enumerate(s.variables)}
    xs = rng.integers(len(ctx), size=n)
    u = rng.random(n)
    ds = np.empty(n, dtype=int)
    for x in range(len(ctx)):
        m = xs == x
        cdf = np.cumsum(problem.decision_probs[x])
        ds[m] = np.minimum(np.searchsorted(cdf, u[m], side="right"), len(dec) - 1)
    q = np.array([[problem.outcome_probs[(x, d)] for d in range(len(dec))]
                  for x in range(len(ctx))])
    o = rng.random((n, len(out))) < q[xs, ds]
    r = np.arange(n)
    rows[r, np.array([idx[v] for v in ctx])[xs]] = 1
    rows[r, np.array([idx[v] for v in dec])[ds]] = 1
    rows[:, [idx[v] for v in out]] = o
    return Dataset(s.variables, rows)
