import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from moralpsdd import data as D
from moralpsdd import psdd as P
from moralpsdd.errors import DataError, QueryError, UnsatisfiableTheoryError, ZeroProbabilityError
from moralpsdd.logic import parse_scenario
from moralpsdd.oracle import build_joint, oracle_conditional, oracle_marginal, oracle_mpe, random_instance
from moralpsdd.psdd import (
    DECISION, FALSE, TRUE, QueryStats, conditional, evaluate, fit_parameters, marginal, mpe,
)
from moralpsdd.sdd import compile_scenario, enumerate_models

from helpers import chain_rule_oracle, empirical


def check_node_invariants(p, tol=1e-12):
    for n in p.nodes:
        if n.kind == DECISION:
            assert abs(math.fsum(n.thetas) - 1.0) <= tol
            for (_, s), t in zip(n.elements, n.thetas):
                assert t >= 0
                assert (t == 0) == (s.kind == FALSE)
        elif n.kind == TRUE:
            assert 0 < n.theta < 1


def total_mass(p):
    return math.fsum(evaluate(p, w) for w in enumerate_models(p.sdd))


def two_var():
    s = parse_scenario("context A B\n")
    sdd = compile_scenario(s)
    rows = [{"A": 1, "B": 1}] * 2 + [{"A": 1, "B": 0}, {"A": 0, "B": 1}]
    return s, sdd, D.from_assignments(rows, s.variables)


def test_empirical_two_variables():
    _, sdd, data = two_var()
    p = fit_parameters(sdd, data, 0.0)
    got = {(a, b): evaluate(p, {"A": a, "B": b}) for a in (0, 1) for b in (0, 1)}
    assert got == pytest.approx({(1, 1): 0.5, (1, 0): 0.25, (0, 1): 0.25, (0, 0): 0.0}, abs=1e-12)
    assert got[(0, 0)] == 0.0
    check_node_invariants(p)


def test_identical_rows():
    s, sdd, _ = two_var()
    data = D.from_assignments([{"A": 0, "B": 1}] * 4, s.variables)
    for structure in ("unfolded", "shared"):
        p = fit_parameters(sdd, data, 0.0, structure)
        assert evaluate(p, {"A": 0, "B": 1}) == pytest.approx(1.0, abs=1e-12)
        assert marginal(p, {"A": 1}) == 0.0


def test_shared_structure_is_normalized(lung):
    s, sdd, data, _, _ = lung
    for smoothing in (0.0, 1.0):
        p = fit_parameters(sdd, data, smoothing, "shared")
        check_node_invariants(p)
        assert abs(total_mass(p) - 1) < 1e-9


@pytest.mark.parametrize("name", ["lung_cancer", "trolley", "teamwork"])
def test_builtin_fits_normalize(scenarios, name):
    s = scenarios[name]
    sdd = compile_scenario(s)
    gen = {"lung_cancer": D.generate_lung_cancer, "trolley": D.generate_trolley,
           "teamwork": D.generate_teamwork}[name]
    data = gen(2000, seed=3)
    for smoothing in (0.0, 0.5, 1.0):
        p = fit_parameters(sdd, data, smoothing)
        check_node_invariants(p)
        assert abs(total_mass(p) - 1) <= 1e-9


def test_trolley_smoothed_frequency_oracle(trolley):
    s, sdd, data, p, _ = trolley
    models = list(enumerate_models(sdd))
    ref = chain_rule_oracle(models, data.reorder(sdd.variables).rows, sdd.variables, 1.0)
    assert len(ref) == 180
    for m in models:
        assert abs(evaluate(p, m) - ref[tuple(m[v] for v in sdd.variables)]) <= 1e-9


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 10_000), st.sampled_from([0.0, 0.3, 1.0, 2.5]))
def test_random_fits_match_chain_rule(seed, smoothing):
    inst = random_instance(seed)
    sdd = compile_scenario(inst.scenario)
    p = fit_parameters(sdd, inst.data, smoothing)
    check_node_invariants(p)
    models = list(enumerate_models(sdd))
    ref = chain_rule_oracle(models, inst.data.reorder(sdd.variables).rows, sdd.variables, smoothing)
    for m in models:
        assert abs(evaluate(p, m) - ref[tuple(m[v] for v in sdd.variables)]) <= 1e-12
    if smoothing == 0:
        emp = empirical(inst.data.reorder(sdd.variables).rows)
        for m in models:
            assert abs(evaluate(p, m) - emp.get(tuple(m[v] for v in sdd.variables), 0.0)) <= 1e-12


def test_non_model_and_incomplete(lung):
    s, sdd, _, p, _ = lung
    w = dict(next(iter(enumerate_models(sdd))))
    w["CTpos"], w["CTneg"] = 1, 1
    assert evaluate(p, w) == 0.0
    del w["MM"]
    with pytest.raises(QueryError):
        evaluate(p, w)


def test_marginal_and_conditional_basics(lung):
    s, sdd, _, p, _ = lung
    assert abs(marginal(p) - 1) < 1e-12
    assert marginal(p, {"CTpos": 1, "CTneg": 1}) == 0.0
    assert abs(conditional(p, {"T": 1}, {"T": 1}) - 1) < 1e-12
    assert conditional(p, {"T": 0}, {"T": 1}) == 0.0
    with pytest.raises(ZeroProbabilityError):
        conditional(p, {"T": 1}, {"Mpos": 1, "Mneg": 1})
    with pytest.raises(QueryError):
        marginal(p, {"nope": 1})


def test_marginals_match_enumeration(trolley):
    s, sdd, _, p, _ = trolley
    rng = np.random.default_rng(0)
    for _ in range(40):
        names = rng.choice(s.variables, size=rng.integers(1, 5), replace=False)
        ev = {v: int(rng.integers(2)) for v in names}
        ref = math.fsum(evaluate(p, w) for w in enumerate_models(sdd, ev))
        assert abs(marginal(p, ev) - ref) <= 1e-9


def test_mpe_properties(trolley):
    s, sdd, _, p, _ = trolley
    rng = np.random.default_rng(1)
    models = list(enumerate_models(sdd))
    w, pr = mpe(p)
    assert abs(pr - evaluate(p, w)) < 1e-12
    for i in rng.choice(len(models), size=100):
        assert pr >= evaluate(p, models[i]) - 1e-15
    m = models[7]
    w2, pr2 = mpe(p, m)
    assert w2 == m and abs(pr2 - evaluate(p, m)) < 1e-15
    with pytest.raises(ZeroProbabilityError):
        mpe(p, {"A_1": 1, "A_5": 1})


def test_single_model_circuit():
    s = parse_scenario("context A B\nconstraint &(A,!(B))\n")
    sdd = compile_scenario(s)
    p = fit_parameters(sdd, D.from_assignments([{"A": 1, "B": 0}], s.variables), 1.0)
    w, pr = mpe(p)
    assert w == {"A": 1, "B": 0} and pr == pytest.approx(1.0, abs=1e-12)
    t = build_joint(p)
    assert len(t) == 1 and t.probs[0] == pytest.approx(1.0, abs=1e-12)


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 10_000))
def test_queries_match_oracle(seed):
    inst = random_instance(seed)
    p = fit_parameters(compile_scenario(inst.scenario), inst.data, inst.smoothing)
    t = build_joint(p)
    rng = np.random.default_rng(seed)
    names = list(p.variables)
    for _ in range(10):
        k = int(rng.integers(0, 4))
        ev = {names[i]: int(rng.integers(2)) for i in rng.choice(len(names), size=k, replace=False)}
        assert abs(marginal(p, ev) - oracle_marginal(t, ev)) <= 1e-9
        q = {names[int(rng.integers(len(names)))]: int(rng.integers(2))}
        if oracle_marginal(t, ev) > 0:
            assert abs(conditional(p, q, ev) - oracle_conditional(t, q, ev)) <= 1e-9
            (w1, p1), (w2, p2) = mpe(p, ev), oracle_mpe(t, ev)
            assert abs(p1 - p2) <= 1e-9 and w1 == w2


def test_mpe_tie_break_is_lexicographic():
    s = parse_scenario("context A B\n")
    sdd = compile_scenario(s)
    rows = [{"A": a, "B": b} for a in (0, 1) for b in (0, 1)]
    p = fit_parameters(sdd, D.from_assignments(rows, s.variables), 0.0)
    assert mpe(p)[0] == {"A": 0, "B": 0}
    assert mpe(p, {"B": 1})[0] == {"A": 0, "B": 1}


def test_visit_counters(trolley, lung):
    for fixture in (trolley, lung):
        s, sdd, _, p, _ = fixture
        for w in list(enumerate_models(sdd))[:20]:
            st_ = QueryStats()
            evaluate(p, w, st_)
            assert st_.visits <= len(p)
        for q in (marginal, mpe):
            st_ = QueryStats()
            q(p, {}, st_)
            assert st_.visits <= len(p)


def test_fit_errors(scenarios):
    s = parse_scenario("context A\nconstraint &(A,!(A))\n")
    sdd = compile_scenario(s)
    with pytest.raises(UnsatisfiableTheoryError):
        fit_parameters(sdd, D.from_assignments([{"A": 1}], s.variables))
    lc = scenarios["lung_cancer"]
    with pytest.raises(DataError):
        fit_parameters(compile_scenario(lc), D.Dataset(lc.variables, np.zeros((0, 12))))
    with pytest.raises(ValueError):
        fit_parameters(compile_scenario(lc), D.generate_lung_cancer(10), -1.0)


def test_serialization_roundtrip(lung, trolley):
    for fixture in (lung, trolley):
        s, sdd, _, p, _ = fixture
        text = P.dumps(p)
        q = P.loads(text, sdd)
        assert P.dumps(q) == text
        for w in enumerate_models(sdd):
            assert evaluate(q, w) == evaluate(p, w)


def test_log_likelihood_prefers_fitted(lung):
    s, sdd, data, p, _ = lung
    other = fit_parameters(sdd, D.generate_lung_cancer(500, seed=9), 5.0)
    assert P.log_likelihood(p, data) > P.log_likelihood(other, data)
