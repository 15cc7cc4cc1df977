from collections import defaultdict

import pytest

CRITERIA = {
    1: "push PPR matches the exact solver within lambda per column",
    2: "exact solver fixed point and column sums",
    3: "closed-form PPR fixtures",
    4: "clique lifting counts (and benchmark statistics when present)",
    5: "model forward, gradients and invariances",
    6: "end-to-end learning on the SBM fixture and shuffle control",
    7: "higher-order PPR beats the GCN ablation on heterophilic benchmarks",
    8: "push work grows linearly in edge count",
    9: "deterministic run reports",
}

_outcomes = defaultdict(list)


def pytest_configure(config):
    config.addinivalue_line("markers", "acceptance(n): test belongs to acceptance criterion n")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    report = (yield).get_result()
    marker = item.get_closest_marker("acceptance")
    if marker is None:
        return
    if report.when == "call" or (report.when == "setup" and report.outcome != "passed"):
        reason = ""
        if report.skipped and isinstance(report.longrepr, tuple):
            reason = report.longrepr[2].removeprefix("Skipped: ")
        _outcomes[marker.args[0]].append((report.outcome, reason))


def _status(outcomes):
    kinds = {o for o, _ in outcomes}
    if "failed" in kinds:
        return "FAIL"
    if kinds == {"skipped"}:
        return "SKIPPED"
    if "skipped" in kinds:
        return "PASS (dataset part SKIPPED)"
    return "PASS"


def pytest_terminal_summary(terminalreporter):
    if not _outcomes:
        return
    terminalreporter.section("acceptance criteria")
    for n, title in CRITERIA.items():
        if n not in _outcomes:
            continue
        outcomes = _outcomes[n]
        line = f"criterion {n}: {_status(outcomes)} - {title}"
        reasons = sorted({r for o, r in outcomes if o == "skipped" and r})
        if reasons:
            line += f" [{'; '.join(reasons)}]"
        terminalreporter.write_line(line)
