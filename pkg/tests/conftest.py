"""Shared test state: the acceptance suite registers per-criterion verdicts
here and the terminal summary prints one line per criterion."""

acceptance_results: list = []  # (number, name, passed)


def pytest_terminal_summary(terminalreporter):
    if not acceptance_results:
        return
    terminalreporter.section("acceptance criteria")
    for number, name, ok in sorted(acceptance_results):
        verdict = "PASS" if ok else "FAIL"
        terminalreporter.write_line(f"[{verdict}] criterion {number}: {name}")
