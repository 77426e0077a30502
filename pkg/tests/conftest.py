"""Shared fixtures: cached problem builders and the expensive solver runs.

The converged runs on the desk-scale instances are reused by several
acceptance criteria and by the module tests, so they are built once per
session.  A terminal hook prints one PASS/FAIL line per acceptance
criterion at the end of the run.
"""

from __future__ import annotations

import re

import pytest

from vtsopt.doc import DocConfig, solve_doc
from vtsopt.ip import IpConfig, solve_ip
from vtsopt.mesh import build_problem
from vtsopt.pbm import PbmConfig, solve_pbm


@pytest.fixture(scope="session")
def problems():
    """Memoized ``build_problem``: meshes are immutable, share them."""

    cache: dict = {}

    def get(name: str, **kwargs):
        key = (name, tuple(sorted(kwargs.items())))
        if key not in cache:
            cache[key] = build_problem(name, **kwargs)
        return cache[key]

    return get


@pytest.fixture(scope="session")
def cross_method_runs(problems):
    """All three methods, converged, on the two desk-scale instances."""

    runs = {}
    for name in ("CANT-2-2-2-3", "BRIDGE-2-2-2-3"):
        prob = problems(name)
        runs[name, "pbm"] = solve_pbm(prob, PbmConfig(tol=1e-6, rho_lower=0.0))
        runs[name, "ip"] = solve_ip(prob, IpConfig(tol=1e-5, rho_lower=1e-7))
        runs[name, "doc"] = solve_doc(prob, DocConfig(tol=1e-5, rho_lower=1e-7))
    return runs


@pytest.fixture(scope="session")
def doc_sweep_runs(problems, cross_method_runs):
    """Fixed-point runs at loosening tolerances on the small cantilever."""

    prob = problems("CANT-2-2-2-3")
    return {
        1e-2: solve_doc(prob, DocConfig(tol=1e-2, rho_lower=1e-7)),
        1e-3: solve_doc(prob, DocConfig(tol=1e-3, rho_lower=1e-7)),
        1e-5: cross_method_runs["CANT-2-2-2-3", "doc"],
    }


@pytest.fixture(scope="session")
def pbm_medium_run(problems):
    """Default multiplier-method run on the level-4 cantilever."""

    return solve_pbm(problems("CANT-2-2-2-4"), PbmConfig())


# --- acceptance summary -------------------------------------------------

_CRITERIA = {
    "c01": "reduced Newton step matches the dense saddle-point solve",
    "c02": "condensed interior-point step matches the dense KKT solve",
    "c03": "analytic gradient matches central finite differences",
    "c04": "primal and dual optima coincide on analytic instances",
    "c05": "all three methods agree on the desk-scale instances",
    "c06": "fixed-point iteration count grows as the tolerance tightens",
    "c07": "multigrid-preconditioned iteration counts are mesh-independent",
    "c08": "median inner iterations per Newton solve stays small",
    "c09": "penalty kernel identities and smoothness",
    "c10": "converged multiplier runs hold the volume budget",
    "c11": "stopping certificates are consistent with the tolerances",
}

_RESULTS: dict[str, str] = {}
_TEST_NAME = re.compile(r"test_(c\d\d)")


def pytest_runtest_logreport(report):
    if "test_acceptance.py" not in report.nodeid:
        return
    match = _TEST_NAME.search(report.nodeid)
    if match is None or match.group(1) not in _CRITERIA:
        return
    key = match.group(1)
    if report.when == "call":
        _RESULTS[key] = "PASS" if report.passed else "FAIL"
    elif report.when == "setup" and (report.failed or report.skipped):
        _RESULTS[key] = "FAIL"


def pytest_terminal_summary(terminalreporter):
    if not _RESULTS:
        return
    terminalreporter.write_sep("-", "acceptance criteria")
    for key in sorted(_CRITERIA):
        outcome = _RESULTS.get(key, "NOT RUN")
        terminalreporter.write_line(
            f"criterion {key[1:]}: {outcome}  ({_CRITERIA[key]})"
        )
