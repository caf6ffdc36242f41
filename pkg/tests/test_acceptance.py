"""Acceptance criteria 1-10, one pass/fail line per criterion.

Run with ``pytest tests/test_acceptance.py -v`` (lines appear in the live
output) or directly with ``python3 tests/test_acceptance.py``.
"""

import json
import sys
import tempfile
import time
from functools import lru_cache
from pathlib import Path

import pytest

from quasiloc.cli import main
from quasiloc.suites import run_suite

SEED = 0

# criterion -> (suite, case-label filter, description)
CRITERIA = {
    1: ("cutdown", None, "cutdown norm identity on [128], 100 operators, tol 1e-8"),
    2: ("expectation", None, "sign-average equals expectation (1e-12) and sign-sup bound, 50 operators"),
    3: ("corollary43", None, "commuting cutdowns ||eae - theta(a)|| <= eps + 1e-8 on [512], 50 operators"),
    4: ("induction", None, "one induction step within 8 eps plus exact mask checks, 50 operators"),
    5: ("pipeline", None, "pipeline on [512] (1 and 2 stages) and [32,32] (k=4), eps 0.1 and 0.2"),
    6: ("commut", ("levels",), "level-set commutator bound at N=13 and reconstruction within 1/N"),
    7: ("commut", ("sandwich", "single"), "commutator search below certified eps; single entries within 1e-6"),
    8: ("higson", None, "bumps, VL -> Higson, Higson -> VL, split residual <= 2/m + 1e-6"),
    9: ("dimnuc", None, "factorization witness on [256] and 100 extractor instances"),
}


@lru_cache(maxsize=None)
def suite(name):
    start = time.perf_counter()
    result = run_suite(name, SEED)
    return result, time.perf_counter() - start


def evaluate(criterion):
    """Returns (passed, summary line)."""
    if criterion == 10:
        reports = []
        with tempfile.TemporaryDirectory() as tmp:
            for name in ("first.json", "second.json"):
                out = Path(tmp) / name
                code = main(["verify", "--suite", "pipeline", "--seed", "7", "--out", str(out)])
                rep = json.loads(out.read_text())
                rep.pop("timestamp")
                reports.append((code, rep))
        ok = reports[0] == reports[1] and reports[0][0] == 0
        return ok, "verify --suite pipeline --seed 7 twice: reports identical modulo timestamp"
    name, prefixes, text = CRITERIA[criterion]
    result, seconds = suite(name)
    cases = [c for c in result.cases if prefixes is None or c.label.startswith(prefixes)]
    failed = [c.label for c in cases if not c.passed]
    ok = bool(cases) and not failed
    line = f"{text} [{len(cases) - len(failed)}/{len(cases)} cases, suite {name} {seconds:.1f}s]"
    if failed:
        line += f" failing: {', '.join(failed[:5])}"
    return ok, line


def report_line(criterion, ok, line):
    return f"criterion {criterion:2d}: {'PASS' if ok else 'FAIL'}  {line}"


@pytest.mark.parametrize("criterion", range(1, 11))
def test_criterion(criterion, capsys):
    ok, line = evaluate(criterion)
    with capsys.disabled():
        print("\n" + report_line(criterion, ok, line))
    assert ok, line


if __name__ == "__main__":
    results = [evaluate(c) for c in range(1, 11)]
    for c, (ok, line) in enumerate(results, start=1):
        print(report_line(c, ok, line))
    sys.exit(0 if all(ok for ok, _ in results) else 1)
