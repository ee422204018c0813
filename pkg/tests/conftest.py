"""Per-criterion verdict lines for the full-scale verification gate.

Every test named ``test_criterion_<n>...`` in tests/test_acceptance.py feeds
one numbered verdict; parametrized cases and the criterion-9 property
subtests are AND-ed together.  After the run a one-line PASS/FAIL verdict
per criterion is printed, so the gate can be read without scrolling the
pytest output.
"""

import re

CRITERIA = {
    1: "stationary noise-floor level, d=2 and d=100",
    2: "annealed-flow time-change equivalence",
    3: "variance-reduced per-epoch contraction, discrete and SDDE",
    4: "discrete gradient-domination bound, both schedules",
    5: "continuous-time rate bounds, all four kinds",
    6: "decay-schedule asymptotic exponents",
    7: "landscape stretching closed form",
    8: "diffusion-model weak error order",
    9: "deterministic property suite",
}

_outcomes: dict[int, bool] = {}
_PATTERN = re.compile(r"test_criterion_(\d+)")


def pytest_runtest_logreport(report):
    if "test_acceptance" not in report.nodeid:
        return
    match = _PATTERN.search(report.nodeid)
    if not match:
        return
    n = int(match.group(1))
    if report.when == "call":
        ok = report.passed
    elif report.failed or report.skipped:  # setup error or skip: not verified
        ok = False
    else:
        return
    _outcomes[n] = _outcomes.get(n, True) and ok


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if not _outcomes:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(_outcomes):
        verdict = "PASS" if _outcomes[n] else "FAIL"
        terminalreporter.write_line(
            f"ACCEPTANCE #{n} ({CRITERIA.get(n, 'unnamed')}): {verdict}")
