VERDICTS: dict[int, tuple[bool, str]] = {}


def report(criterion: int, passed: bool, detail: str) -> None:
    VERDICTS[criterion] = (bool(passed), detail)


def pytest_terminal_summary(terminalreporter):
    if not VERDICTS:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(VERDICTS):
        passed, detail = VERDICTS[k]
        terminalreporter.write_line(f"criterion {k:2d}: {'PASS' if passed else 'FAIL'}  {detail}")
