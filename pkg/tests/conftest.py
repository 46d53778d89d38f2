import pytest

_CRITERIA = {}


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    label = getattr(item.function, "criterion", None)
    if label is None:
        return
    if rep.when == "call" or (rep.when == "setup" and rep.failed):
        _CRITERIA[label] = ("PASS" if rep.passed else "FAIL",
                            getattr(item, "criterion_detail", ""))


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for label in sorted(_CRITERIA, key=lambda s: int(s.split()[0])):
        status, detail = _CRITERIA[label]
        terminalreporter.write_line(f"criterion {label}: {status}  {detail}".rstrip())


@pytest.fixture
def detail(request):
    """Attach a one-line summary to the criterion line."""
    def set_detail(text):
        request.node.criterion_detail = text
        print(text)
    return set_detail
