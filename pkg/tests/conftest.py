from importlib import resources

import numpy as np
import pytest

from linkrecon import link_hierarchies, parse_hierarchy_spec
from linkrecon.synthetic import random_hierarchy_spec

_acceptance_results = []


@pytest.fixture
def rng():
    return np.random.default_rng(0)


@pytest.fixture(scope="session")
def income_spec():
    text = resources.files("linkrecon").joinpath("data/income.yaml").read_text(encoding="utf-8")
    return parse_hierarchy_spec(text)


@pytest.fixture(scope="session")
def expenditure_spec():
    # the published expenditure tree is not reproduced; any 26/53 tree exercises the dimensions
    spec = random_hierarchy_spec(26, 53, np.random.default_rng(53), name="expenditure", top="GDP")
    return spec


@pytest.fixture(scope="session")
def gdp_system(income_spec, expenditure_spec):
    return link_hierarchies([income_spec, expenditure_spec], "GDP")


@pytest.fixture
def toy_system():
    spec = parse_hierarchy_spec("name: toy\ntop: T\nedges: [[T, A], [T, B]]")
    return link_hierarchies([spec])


def pytest_runtest_logreport(report):
    if report.when == "call" and "acceptance" in report.keywords:
        doc = getattr(report, "criterion", None) or report.nodeid.split("::")[-1]
        _acceptance_results.append((report.outcome, doc))
    elif report.when == "setup" and report.skipped and "acceptance" in report.keywords:
        doc = getattr(report, "criterion", None) or report.nodeid.split("::")[-1]
        _acceptance_results.append(("skipped", doc))


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    marker = item.get_closest_marker("acceptance")
    if marker is not None and marker.args:
        rep.criterion = marker.args[0]


def pytest_terminal_summary(terminalreporter):
    if not _acceptance_results:
        return
    terminalreporter.section("acceptance criteria")
    for outcome, doc in _acceptance_results:
        tag = {"passed": "PASS", "failed": "FAIL"}.get(outcome, outcome.upper())
        terminalreporter.write_line(f"[{tag}] {doc}")
