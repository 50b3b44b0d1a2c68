import math

import pytest
from hypothesis import example, given, settings
from hypothesis import strategies as st

from moralpsdd import blame as B
from moralpsdd import data as D
from moralpsdd.errors import NBoundError, ParseError, QueryError, ZeroSupportError
from moralpsdd.logic import parse_scenario
from moralpsdd.oracle import random_instance
from moralpsdd.psdd import fit_parameters
from moralpsdd.sdd import compile_scenario, model_count
from moralpsdd.utility import constant_utility, linear_utility


@pytest.fixture(scope="module")
def five(trolley):
    """Five people on the main track, one on the side track."""
    return B.contexts_from_names(trolley[0], {"A_5 B_1": 1.0})


def instance(seed):
    inst = random_instance(seed)
    p = fit_parameters(compile_scenario(inst.scenario), inst.data, inst.smoothing)
    u = linear_utility(inst.weights, inst.scenario)
    return inst, p, u


def group_actions(s):
    g = s.action_groups[0]
    return [a.label for a in s.actions(g)]


# -- closed-form arithmetic -------------------------------------------------


@pytest.mark.parametrize("N,expected", [(0.2, 0.2), (1.0, 0.36), (100.0, 0.3996)])
def test_db_formula(N, expected):
    # delta 0.4, c(a') - c(a) = 0.1
    assert B.db_from_parts(0.4, 0.0, 0.1, N) == pytest.approx(expected)


def test_db_zero_delta():
    assert B.db_from_parts(0.0, -1.0, 5.0, 10.0) == 0.0


def test_check_n():
    B.check_n(1.0, 0.5)
    with pytest.raises(NBoundError) as e:
        B.check_n(0.5, 0.5)
    assert e.value.floor == 0.5
    with pytest.raises(NBoundError):
        B.check_n(math.inf, 0.5)


# -- trolley fixtures -------------------------------------------------------


def test_inaction_forces_death(trolley, five):
    s, _, _, p, _ = trolley
    assert B.prob_do(p, s, "I", "!(L_5)", five) == 1.0
    for c in D.TROLLEY_CHARACTERS:
        ctx = B.ContextDistribution.conditioned({f"A_{c}": 1})
        assert B.prob_do(p, s, "I", f"!(L_{c})", ctx) == pytest.approx(1.0, abs=1e-12)


def test_flip_vs_inaction(trolley, five):
    s, _, _, p, u = trolley
    assert B.delta(p, s, "F", "I", "!(L_5)", five) == 0.0
    costs, _ = B.group_costs(p, s, u, s.action("F"), five)
    N = 1.1 * B.n_floor(costs)
    assert B.blameworthiness(p, s, u, "F", "I", "!(L_5)", N, five) == 0.0
    overall, arg = B.overall_blame(p, s, u, "F", "!(L_5)", N, five)
    assert overall > 0 and arg != "I"


def test_tautology_and_contradiction(trolley):
    s, _, _, p, _ = trolley
    assert B.prob_do(p, s, "F", "|(L_5,!(L_5))") == pytest.approx(1.0, abs=1e-12)
    assert B.prob_do(p, s, "F", "&(L_5,!(L_5))") == 0.0


def test_same_action_delta_zero(trolley):
    s, _, _, p, _ = trolley
    for a in group_actions(s):
        assert B.delta(p, s, a, a, "!(L_1)") == 0.0


def test_worlds_visited_bounded(trolley):
    s, sdd, _, p, _ = trolley
    mc = model_count(sdd)
    for a in group_actions(s):
        r = B.prob_do_detail(p, s, a, "!(L_5)")
        assert 0 < r.worlds_visited <= mc < 2 ** len(s.variables)


def test_event_validation(trolley):
    s, _, _, p, _ = trolley
    with pytest.raises(QueryError):
        B.prob_do(p, s, "F", "&(P,!(L_5))")
    with pytest.raises(QueryError):
        B.prob_do(p, s, "Q", "L_5")
    with pytest.raises(QueryError):
        B.prob_do(p, s, "!F", "L_5")


def test_explicit_table_validation(trolley):
    s, _, _, p, _ = trolley
    with pytest.raises(QueryError):
        B.prob_do(p, s, "F", "L_5", B.contexts_from_names(s, {"A_5 B_1": 0.5}))
    with pytest.raises(QueryError):
        B.prob_do(p, s, "F", "L_5", B.contexts_from_names(s, {"A_5 A_1": 1.0}))
    with pytest.raises(QueryError):
        B.contexts_from_names(s, {"A_5 Z_1": 1.0})


# -- lung cancer ------------------------------------------------------------


def test_lung_mediastinoscopy_costlier(lung):
    s, _, _, p, u = lung
    assert B.cost(p, s, u, "M") > B.cost(p, s, u, "!M")


def test_lung_no_blame_for_skipping_mediastinoscopy(lung):
    s, _, _, p, u = lung
    costs, _ = B.group_costs(p, s, u, s.action("M"), B.ContextDistribution.model())
    N = 1.1 * B.n_floor(costs)
    assert B.delta(p, s, "!M", "M", "!(S_DP)") == 0.0
    assert B.blameworthiness(p, s, u, "!M", "M", "!(S_DP)", N) == 0.0


def test_lung_skipped_contexts_reported(lung):
    s, _, _, p, u = lung
    r = B.prob_do_detail(p, s, "!M", "!(S_DP)")
    assert r.skipped  # e.g. contexts recording a mediastinoscopy result
    assert 0 < r.skipped_mass < 1
    rep = B.run_query(p, s, u, B.BlameQuery("!M", "!(S_DP)"))
    assert any("skipped" in w for w in rep.warnings)


def test_zero_support_action():
    s = parse_scenario("context X\ndecision A B C\noutcome O\nonehot A B C\naction A B C\n")
    sdd = compile_scenario(s)
    rows = [{"X": x, "A": a, "B": 1 - a, "C": 0, "O": o} for x in (0, 1) for a in (0, 1) for o in (0, 1)]
    p = fit_parameters(sdd, D.from_assignments(rows, s.variables), 0.0)
    u = linear_utility({"O": 1.0}, s)
    with pytest.raises(ZeroSupportError):
        B.cost(p, s, u, "C")
    rep = B.run_query(p, s, u, B.BlameQuery("A", "O"))
    assert [pr.alternative for pr in rep.pairs] == ["B"]
    assert any("C" in w for w in rep.warnings)
    with pytest.raises(ZeroSupportError):
        B.run_query(p, s, u, B.BlameQuery("C", "O"))


# -- properties ---------------------------------------------------------------


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 100_000))
@example(2346)  # actions with different context support
def test_definition_properties(seed):
    inst, p, u = instance(seed)
    s = inst.scenario
    acts = group_actions(s)
    costs, _ = B.group_costs(p, s, u, s.action(acts[0]), B.ContextDistribution.model())
    floor = B.n_floor(costs)
    Ns = [floor + 1e-3, floor + 0.1, floor + 1, floor + 10, 1e9]
    Ns = [n for n in Ns if n > 0]
    for a in costs:
        for alt in costs:
            if a == alt:
                continue
            d = B.delta(p, s, a, alt, inst.event)
            assert 0 <= d <= 1
            dbs = [B.blameworthiness(p, s, u, a, alt, inst.event, N) for N in Ns]
            assert all(0 <= x <= d for x in dbs)
            assert all(x <= y + 1e-15 for x, y in zip(dbs, dbs[1:]))
            assert abs(dbs[-1] - d) <= 1e-9
            if B.prob_do(p, s, a, inst.event) <= B.prob_do(p, s, alt, inst.event):
                assert all(x == 0 for x in dbs)
            # shifting the utility by a constant moves every cost by the same amount
            us = u.shifted(0.37)
            cs, _ = B.group_costs(p, s, us, s.action(a), B.ContextDistribution.model())
            N2 = max(floor, B.n_floor(cs)) + 0.5
            assert abs(B.blameworthiness(p, s, us, a, alt, inst.event, N2)
                       - B.blameworthiness(p, s, u, a, alt, inst.event, N2)) <= 1e-9


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 100_000), st.floats(0.05, 1.0))
@example(18229, 1.0)
@example(2346, 0.37)
def test_constant_utility_db_equals_delta(seed, value):
    inst, p, _ = instance(seed)
    s = inst.scenario
    u = constant_utility(s, value)
    acts = group_actions(s)
    for a in acts:
        for alt in acts:
            try:
                c = B.cost(p, s, u, a)
                B.cost(p, s, u, alt)
            except ZeroSupportError:
                continue
            assert c == pytest.approx(-value, abs=1e-12)
            for N in (value + 0.01, 3.0, 100.0):
                assert B.blameworthiness(p, s, u, a, alt, inst.event, N) == pytest.approx(
                    B.delta(p, s, a, alt, inst.event), abs=1e-12)


def test_overall_is_max_of_pairs(trolley):
    s, _, _, p, u = trolley
    r = B.run_query(p, s, u, B.BlameQuery("F", "!(L_5)"))
    assert r.overall == max(pr.db for pr in r.pairs)
    assert r.argmax == next(pr.alternative for pr in r.pairs if pr.db == r.overall)
    assert r.margin > 0
    for pr in r.pairs:
        assert 0 <= pr.db <= pr.delta <= 1


def test_two_action_group_overall_equals_pair(lung):
    s, _, _, p, u = lung
    r = B.run_query(p, s, u, B.BlameQuery("CT", "!(T)", N=2.0))
    assert len(r.pairs) == 1 and r.overall == r.pairs[0].db
    assert r.N == 2.0


# -- query files and reports -----------------------------------------------------


QUERIES = """
# trolley
action: F
event: !(L_5)
alternatives: I S
N: 2.5
context: 010000100000 1.0

action: P
event: !(L_Fa)
contexts: given A_Fa=1
"""


def test_parse_queries(trolley):
    s = trolley[0]
    qs = B.parse_queries(QUERIES, s)
    assert len(qs) == 2
    assert qs[0].alternatives == ("I", "S") and qs[0].N == 2.5 and qs[0].contexts.kind == "table"
    assert qs[1].N is None and qs[1].contexts == B.ContextDistribution.conditioned({"A_Fa": 1})


@pytest.mark.parametrize("bad", ["action F\n", "action: F\n", "action: F\nevent: L_5\nfoo: 1\n",
                                 "action: F\nevent: L_5\ncontexts: maybe\n", "action: F\nevent: L_5\ncontext: 01 1\n"])
def test_parse_queries_errors(trolley, bad):
    with pytest.raises(ParseError):
        B.parse_queries(bad, trolley[0])


def _fake_report():
    pairs = [B.PairResult("S", 0.25, 0.5, -0.25, 0.375), B.PairResult("I", 1.0, 0.0, -0.125, 0.0)]
    return B.BlameReport("F", "!(L_5)", 1.0, 0.5, 0.75, -0.5, pairs, {"F": -0.5, "S": -0.25, "I": -0.125},
                         0.375, "S", "Pr(X) from the model", {"F": []}, [], {"F": 60})


def test_report_text_golden():
    assert B.report_text(_fake_report()) == (
        "Agent is blameworthy to degree 0.375 for !(L_5), relative to alternative S.\n"
        "Probability of !(L_5) under do(F): 0.750.\n"
        "Relative to S: probability 0.250, delta 0.500, blame 0.375.\n"
        "Relative to I: probability 1.000, delta 0.000, blame 0.000.\n"
        "Costs: c(F) = -0.500, c(S) = -0.250, c(I) = -0.125.\n"
        "Cost importance N = 1.000 (must exceed 0.500).\n"
        "Contexts: Pr(X) from the model.\n"
    )


def test_report_tsv_golden():
    lines = B.report_tsv(_fake_report()).splitlines()
    assert lines[0].split("\t") == list(B.TSV_FIELDS)
    assert lines[1] == "F\tS\t!(L_5)\t1.0\t0.5\t0.75\t0.25\t0.5\t-0.5\t-0.25\t0.375\t0.375\tS"


def test_small_values_are_not_rounded_to_zero():
    assert B._num(2.9e-4) == "2.90e-04"
    assert B._num(0.0) == "0.000"
    assert B._num(0.30712) == "0.307"
