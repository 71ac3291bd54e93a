import pytest

# filled by test_acceptance; one (criterion, passed, detail) row per exit criterion
ACCEPTANCE: list[tuple[str, bool, str]] = []


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for name, ok, detail in sorted(ACCEPTANCE, key=lambda r: int(r[0].split()[0][2:])):
        terminalreporter.write_line(f"{'PASS' if ok else 'FAIL'}  {name}  {detail}")


@pytest.fixture
def criterion(request):
    """Record the outcome of one acceptance criterion under ``name``."""
    state = {"detail": ""}

    def note(text):
        state["detail"] = text

    yield note
    rep = getattr(request.node, "rep_call", None)
    ok = rep is not None and rep.passed
    name = request.node.get_closest_marker("criterion").args[0]
    line = f"{'PASS' if ok else 'FAIL'}  {name}  {state['detail']}"
    print(line)
    ACCEPTANCE.append((name, ok, state["detail"]))


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    if rep.when == "call":
        item.rep_call = rep
