import sys


def pytest_terminal_summary(terminalreporter):
    module = sys.modules.get("test_acceptance") or sys.modules.get("tests.test_acceptance")
    if module is None or not module.RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(module.CRITERIA):
        if number in module.RESULTS:
            terminalreporter.write_line(module.format_line(number))
        else:
            terminalreporter.write_line(f"criterion {number:2d} FAIL  (raised before reporting)")
