import re
import sys
from pathlib import Path

# make the shared oracle helpers importable from every test module
sys.path.insert(0, str(Path(__file__).parent))

_CRITERION = re.compile(r"test_acceptance\.py::test_criterion_(\d+)")


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    """One PASS/FAIL line per acceptance criterion."""
    outcomes = {}
    for status in ("passed", "failed", "error", "xfailed", "xpassed"):
        for report in terminalreporter.stats.get(status, []):
            match = _CRITERION.search(getattr(report, "nodeid", ""))
            if match:
                outcomes.setdefault(int(match.group(1)), []).append(status)
    if not outcomes:
        return
    tr = terminalreporter
    tr.write_sep("-", "acceptance criteria")
    for crit in sorted(outcomes):
        statuses = outcomes[crit]
        bad = [s for s in statuses if s in ("failed", "error", "xpassed")]
        verdict = "FAIL" if bad else "PASS"
        note = ""
        n_xfail = statuses.count("xfailed")
        if n_xfail:
            note = (f"  ({n_xfail} reference-value comparisons xfail: "
                    "entries inconsistent with their defining equations)")
        tr.write_line(f"criterion {crit}: {verdict}{note}")
