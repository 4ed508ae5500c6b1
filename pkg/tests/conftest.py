import pytest

ACCEPTANCE: dict[int, tuple[str, bool | None, str]] = {}


@pytest.fixture()
def criterion(request):
    """Record one acceptance criterion outcome for the terminal summary."""

    def record(number, title, passed, detail=""):
        ACCEPTANCE[number] = (title, passed, detail)
        status = "SKIP" if passed is None else ("PASS" if passed else "FAIL")
        print(f"criterion {number} [{status}] {title}: {detail}")
        return passed

    return record


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(ACCEPTANCE):
        title, passed, detail = ACCEPTANCE[number]
        status = "SKIP" if passed is None else ("PASS" if passed else "FAIL")
        terminalreporter.write_line(f"criterion {number} [{status}] {title}: {detail}")
