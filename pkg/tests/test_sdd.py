import itertools
import time

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from moralpsdd import sdd as S
from moralpsdd.errors import ParseError
from moralpsdd.logic import Atom, Not, eval_formula, parse_formula, parse_scenario
from moralpsdd.oracle import brute_models
from moralpsdd.sdd import SddManager, check_partitions, compile, compile_scenario, enumerate_models, model_count
from moralpsdd.vtree import build_vtree, parse_vtree, to_text

from test_logic import formulas

VARS8 = ["A", "B", "C", "D", "E", "F", "G", "H"]


def truth_set(fs, names):
    out = set()
    for bits in itertools.product((0, 1), repeat=len(names)):
        w = dict(zip(names, bits))
        if all(eval_formula(f, w) for f in fs):
            out.add(bits)
    return out


def model_set(s, names):
    return {tuple(m[v] for v in names) for m in enumerate_models(s)}


# -- vtrees -----------------------------------------------------------------


def test_vtree_shapes():
    assert build_vtree(["A"]).is_leaf()
    assert build_vtree(list("ABCD")).height() == 2
    rl = build_vtree([f"V{i}" for i in range(12)], "right-linear")
    assert rl.left.var == "V0"
    spine, n = 0, rl
    while not n.is_leaf():
        spine, n = spine + 1, n.right
    assert spine == 11
    with pytest.raises(ValueError):
        build_vtree([])


def test_vtree_text_roundtrip():
    v = build_vtree(list("ABCDE"))
    assert to_text(parse_vtree(to_text(v))) == to_text(v)
    assert parse_vtree(to_text(v)).var_order == tuple("ABCDE")
    with pytest.raises(ParseError):
        parse_vtree("(A B")


# -- builtin theories ---------------------------------------------------------


@pytest.mark.parametrize("name,nvars,count", [("lung_cancer", 12, 52), ("teamwork", 21, 4800), ("trolley", 23, 180)])
def test_builtin_model_counts(scenarios, name, nvars, count):
    s = scenarios[name]
    assert len(s.variables) == nvars
    for strategy in ("balanced", "right-linear"):
        sdd = compile_scenario(s, strategy=strategy)
        assert model_count(sdd) == count


def test_trolley_models_satisfy_constraints(scenarios):
    s = scenarios["trolley"]
    models = list(enumerate_models(compile_scenario(s)))
    assert len(models) == 180
    assert len({tuple(sorted(m.items())) for m in models}) == 180
    assert all(s.satisfies(m) for m in models)


def test_lung_models_match_brute_force(scenarios):
    s = scenarios["lung_cancer"]
    sdd = compile_scenario(s)
    names = s.variables
    brute = brute_models(s)
    assert model_set(sdd, names) == {tuple(m[v] for v in names) for m in brute}
    ct = {tuple(m[v] for v in names) for m in brute if m["CT"] == 1}
    assert {tuple(m[v] for v in names) for m in enumerate_models(sdd, {"CT": 1})} == ct


def test_trivial_counts():
    s = parse_scenario("context A B C\n")
    assert model_count(compile_scenario(s)) == 8
    mgr = SddManager(build_vtree(list("ABCD")))
    assert model_count(compile([Atom("B")], mgr.vtree, mgr)) == 8
    assert model_count(compile([Atom("B"), Not(Atom("B"))], mgr.vtree, mgr)) == 0


def test_apply_identities():
    mgr = SddManager(build_vtree(VARS8))
    f = mgr.compile_formula(parse_formula("|(&(A,!(C)),>(D,H),=(B,G))"))
    assert mgr.apply(f, mgr.true, S.AND) is f
    assert mgr.apply(f, mgr.negate(f), S.AND).kind == S.FALSE
    assert mgr.apply(f, mgr.negate(f), S.OR).kind == S.TRUE


def test_full_evidence_enumerates_one(scenarios):
    s = scenarios["lung_cancer"]
    sdd = compile_scenario(s)
    m = next(iter(enumerate_models(sdd)))
    assert list(enumerate_models(sdd, m)) == [m]


def test_compile_speed(scenarios):
    for s in scenarios.values():
        t0 = time.perf_counter()
        compile_scenario(s)
        assert time.perf_counter() - t0 < 5


# -- properties -------------------------------------------------------------


@settings(max_examples=60, deadline=None)
@given(st.lists(formulas(VARS8), min_size=1, max_size=3), st.sampled_from(["balanced", "right-linear"]))
def test_compile_matches_truth_table(fs, strategy):
    s = compile(fs, build_vtree(VARS8, strategy))
    expected = truth_set(fs, VARS8)
    assert model_count(s) == len(expected)
    assert model_set(s, VARS8) == expected
    assert check_partitions(s)


@settings(max_examples=40, deadline=None)
@given(formulas(VARS8), formulas(VARS8))
def test_apply_semantics(f, g):
    mgr = SddManager(build_vtree(VARS8))
    a, b = mgr.compile_formula(f), mgr.compile_formula(g)
    conj = S.Sdd(mgr, mgr.apply(a, b, S.AND))
    disj = S.Sdd(mgr, mgr.apply(a, b, S.OR))
    assert model_set(conj, VARS8) == truth_set([f, g], VARS8)
    assert model_set(disj, VARS8) == truth_set([f], VARS8) | truth_set([g], VARS8)
    # commutativity is structural, not only semantic, because nodes are unique
    assert mgr.apply(b, a, S.AND) is conj.root


@settings(max_examples=40, deadline=None)
@given(formulas(VARS8))
def test_canonicity(f):
    mgr = SddManager(build_vtree(VARS8))
    # f and not(not(f)) and (f or (f and f)) are equivalent
    a = mgr.compile_formula(f)
    b = mgr.compile_formula(Not(Not(f)))
    c = mgr.compile_formula(parse_formula(f"|({f},&({f},{f}))"))
    assert a is b is c


@settings(max_examples=30, deadline=None)
@given(st.lists(formulas(VARS8), min_size=1, max_size=3))
def test_serialization_roundtrip(fs):
    s = compile(fs, build_vtree(VARS8))
    text = S.dumps(s)
    t = S.loads(text)
    assert S.dumps(t) == text
    assert model_set(t, VARS8) == model_set(s, VARS8)


def test_loads_rejects_garbage():
    with pytest.raises(ParseError):
        S.loads("sdd 1\n0 T\nroot 0\n")
    with pytest.raises(ParseError):
        S.loads("vtree (A B)\n0 Q\nroot 0\n")


@settings(max_examples=30, deadline=None)
@given(st.lists(formulas(VARS8), min_size=2, max_size=3))
def test_equivalent_theories_serialize_identically(fs):
    # separate managers, different construction order, same function
    a = compile(fs, build_vtree(VARS8))
    b = compile(list(reversed(fs)), build_vtree(VARS8))
    assert S.dumps(a) == S.dumps(b)
