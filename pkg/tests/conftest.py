import pytest

_CRITERIA = {}


@pytest.fixture
def criterion(record_property):
    """Call ``criterion(number, title, detail)`` to label an acceptance test for the summary."""
    def label(number, title, detail=""):
        record_property("criterion", f"{number:>2}. {title}")
        record_property("detail", detail)
    return label


def pytest_runtest_logreport(report):
    props = dict(report.user_properties)
    if "criterion" not in props:
        return
    if report.when == "call" or (report.when == "setup" and report.outcome != "passed"):
        _CRITERIA[props["criterion"]] = (report.outcome, props.get("detail", ""))


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for name in sorted(_CRITERIA, key=lambda s: int(s.split(".")[0])):
        outcome, detail = _CRITERIA[name]
        verdict = "PASS" if outcome == "passed" else "FAIL"
        terminalreporter.write_line(f"{verdict}  {name}" + (f"  [{detail}]" if detail else ""))
