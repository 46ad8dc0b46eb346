import pytest

_CRITERIA = []


@pytest.fixture(scope="session")
def record_criterion():
    """Collect a CriterionResult for the end-of-run summary, then assert on it."""

    def record(res):
        _CRITERIA.append(res)
        assert res.passed, res.line()

    return record


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for res in _CRITERIA:
        terminalreporter.write_line(res.line())
    n_pass = sum(r.passed for r in _CRITERIA)
    terminalreporter.write_line(f"{n_pass}/{len(_CRITERIA)} criteria passed")
