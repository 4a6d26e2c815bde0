"""Print one PASS/FAIL line per acceptance criterion after the run."""


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    results: dict[str, str] = {}
    for status, tag in (("passed", "PASS"), ("failed", "FAIL"), ("error", "FAIL")):
        for report in terminalreporter.stats.get(status, []):
            nodeid = getattr(report, "nodeid", "")
            if "test_acceptance.py" in nodeid and getattr(report, "when", "call") in (
                "call",
                "setup",
            ):
                name = nodeid.split("::")[-1]
                if tag == "FAIL" or name not in results:
                    results[name] = tag
    if results:
        terminalreporter.section("acceptance criteria")
        for name in sorted(results):
            terminalreporter.write_line(f"[{results[name]}] {name}")
