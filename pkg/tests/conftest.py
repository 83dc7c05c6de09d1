"""Shared test infrastructure: collects acceptance-criterion outcomes so the
end of the pytest run prints one PASS/FAIL line per criterion."""

_CRITERION_LINES: dict[int, str] = {}


def record_criterion(cid: int, name: str, passed: bool, detail: str) -> None:
    status = "PASS" if passed else "FAIL"
    _CRITERION_LINES[cid] = f"criterion {cid} ({name}): {status} - {detail}"


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if not _CRITERION_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for cid in sorted(_CRITERION_LINES):
        terminalreporter.write_line(_CRITERION_LINES[cid])
