"""End-to-end acceptance suite: one test per criterion, one pass/fail line each.

The whole suite (criteria 1 to 10 plus the determinism rerun) runs once
through the CLI; each test then reads back its criterion's verdict.
"""

import json

import pytest

from randmaps.acceptance import CRITERIA, CriterionResult
from randmaps.cli import main

pytestmark = pytest.mark.slow

IDS = sorted(CRITERIA) + [11]


@pytest.fixture(scope="module")
def suite(tmp_path_factory):
    out = tmp_path_factory.mktemp("accept")
    code = main(["accept", "--out", str(out)])
    run = out / "accept" / "shipped-s1"
    summary = json.loads((run / "summary.json").read_text())
    manifest = json.loads((run / "manifest.json").read_text())
    results = {}
    for doc in summary["criteria"]:
        doc = dict(doc, runtime=manifest["timings"][f"criterion_{doc['id']}"])
        results[doc["id"]] = CriterionResult(**doc)
    return code, results, run


@pytest.mark.parametrize("cid", IDS)
def test_criterion(suite, cid, criterion_log):
    _, results, _ = suite
    res = results[cid]
    criterion_log[cid] = res.line()
    print(res.line())
    assert res.passed, res.line()


def test_suite_exit_code_and_files(suite):
    code, results, run = suite
    print()
    for cid in IDS:
        print(results[cid].line())
    assert sorted(results) == IDS
    assert code == 0
    for res in results.values():
        for name in res.files:
            assert (run / name).exists(), name
