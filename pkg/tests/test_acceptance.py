"""Acceptance matrix: every criterion at its stated tolerance.

The whole matrix runs once per session (about two minutes).  One pass/fail
line per criterion is printed to the terminal as it completes, followed by
its clauses; each criterion then becomes its own test below.
"""
import json

import pytest

from monadkin.acceptance import CRITERIA, SLOW, run_all

NUMBERS = sorted(CRITERIA) + [11]


@pytest.fixture(scope="module")
def matrix(tmp_path_factory, request):
    out = tmp_path_factory.mktemp("acceptance")
    capman = request.config.pluginmanager.getplugin("capturemanager")

    def show(crit):
        with capman.global_and_fixture_disabled():
            print(f"\n{crit.line()}", flush=True)
            for c in crit.clauses:
                print(f"        {'pass' if c.passed else 'FAIL'}  {c.label}  [{c.detail}]", flush=True)

    crits = run_all(out, on_result=show)
    return out, {c.number: c for c in crits}


def _params():
    for n in NUMBERS:
        marks = [pytest.mark.slow] if n in SLOW else []
        yield pytest.param(n, id=f"criterion_{n:02d}", marks=marks)


@pytest.mark.parametrize("number", list(_params()))
def test_criterion(matrix, number):
    _, crits = matrix
    crit = crits[number]
    failed = [f"{c.label} [{c.detail}]" for c in crit.clauses if not c.passed]
    assert crit.passed, f"{crit.line()}: " + "; ".join(failed)


def test_summary_records_every_criterion(matrix):
    out, crits = matrix
    doc = json.loads((out / "summary.json").read_text())
    assert [c["number"] for c in doc["criteria"]] == NUMBERS
    assert doc["all_pass"] == all(c.passed for c in crits.values())
