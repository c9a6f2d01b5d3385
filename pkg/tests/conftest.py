"""Collects acceptance verdicts and prints one line per criterion at the end
of the session, whatever pytest's verbosity."""
import pytest

VERDICTS: dict[int, tuple[bool, str]] = {}
CRITERIA = {
    1: "assignment optimality",
    2: "learning-automaton normalization",
    3: "learning-automaton convergence",
    4: "VCG properties",
    5: "knapsack bound",
    6: "SLA protection trend",
    7: "learned-price load response",
    8: "profit-share trend",
    9: "determinism and conservation",
    10: "full-scale smoke",
}


@pytest.fixture
def verdict():
    def record(n: int, ok: bool, detail: str):
        VERDICTS[n] = (bool(ok), detail)
        assert ok, f"criterion {n} ({CRITERIA[n]}) failed: {detail}"
    return record


def pytest_terminal_summary(terminalreporter):
    ran = [n for n in CRITERIA if n in VERDICTS]
    if not ran:
        return
    terminalreporter.section("acceptance criteria")
    for n in CRITERIA:
        if n in VERDICTS:
            ok, detail = VERDICTS[n]
            terminalreporter.write_line(f"criterion {n:>2} {'PASS' if ok else 'FAIL'}  {CRITERIA[n]}: {detail}")
        else:
            terminalreporter.write_line(f"criterion {n:>2} NOT RUN  {CRITERIA[n]}")
