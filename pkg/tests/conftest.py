import pytest

from moralpsdd import data as D
from moralpsdd.psdd import fit_parameters
from moralpsdd.sdd import compile_scenario, enumerate_models
from moralpsdd.utility import UtilitySpec, learn_utility, linear_utility


@pytest.fixture(scope="session")
def scenarios():
    return D.builtin_scenarios()


@pytest.fixture(scope="session")
def lung(scenarios):
    s = scenarios["lung_cancer"]
    sdd = compile_scenario(s)
    data = D.generate_lung_cancer(20000, seed=0)
    p = fit_parameters(sdd, data, 1.0)
    # context-relative: a global weight vector puts all mass on S_DP, which
    # pins the admissible-N floor at exactly 1
    u = learn_utility(p, s, UtilitySpec(context_relative=True))
    return s, sdd, data, p, u


@pytest.fixture(scope="session")
def trolley(scenarios):
    s = scenarios["trolley"]
    sdd = compile_scenario(s)
    data = D.generate_trolley(3000, seed=0)
    p = fit_parameters(sdd, data, 1.0)
    u = linear_utility({f"L_{c}": w for c, w in D.TROLLEY_WEIGHTS.items()}, s)
    return s, sdd, data, p, u


@pytest.fixture(scope="session")
def teamwork_sdd(scenarios):
    return compile_scenario(scenarios["teamwork"])


@pytest.fixture
def tiny():
    """Two independent-looking binary variables with one constraint."""
    from moralpsdd.logic import parse_scenario

    s = parse_scenario("context X\ndecision A\noutcome O\naction A\nconstraint >(&(!(X),!(A)),!(O))\n")
    return s, compile_scenario(s)



# -- acceptance summary -------------------------------------------------------

_CRITERIA: dict = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(number, title): acceptance criterion checked by the test")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    mark = item.get_closest_marker("criterion")
    if mark is None or rep.when not in ("setup", "call"):
        return
    num, title = mark.args
    prev = _CRITERIA.get(num, (title, True))[1]
    if rep.when == "call" or rep.failed:
        _CRITERIA[num] = (title, prev and rep.passed)


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for num in sorted(_CRITERIA):
        title, passed = _CRITERIA[num]
        terminalreporter.write_line(f"C{num} {'PASS' if passed else 'FAIL'}  {title}")
