import numpy as np
import pytest

_CRITERIA: dict[int, list[str]] = {}


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def report_criterion():
    """Record and print one status line for an acceptance criterion."""

    def _report(number: int, title: str, status, detail: str = ""):
        word = status if isinstance(status, str) else ("PASS" if status else "FAIL")
        line = f"criterion {number:>2}: {word:<4}  {title}"
        if detail:
            line += f"  ({detail})"
        print(line)
        _CRITERIA.setdefault(number, []).append(line)
        return status

    return _report


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_CRITERIA):
        for line in _CRITERIA[number]:
            terminalreporter.write_line(line)
