import pytest

RESULTS = pytest.StashKey[dict]()
N_CRITERIA = 13


def pytest_configure(config):
    config.stash[RESULTS] = {}


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    marker = item.get_closest_marker("criterion")
    if marker is None or (report.when != "call" and report.passed):
        return
    number, title = marker.args
    measured = "; ".join(f"{k}={v}" for k, v in item.user_properties)
    item.config.stash[RESULTS][number] = (title, report.passed, measured)


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    results = config.stash[RESULTS]
    if not results:
        return
    terminalreporter.section("acceptance criteria")
    for k in range(1, N_CRITERIA + 1):
        if k not in results:
            terminalreporter.write_line(f"NOT RUN  criterion {k}")
            continue
        title, ok, measured = results[k]
        line = f"{'PASS' if ok else 'FAIL'}     criterion {k:2d}  {title}"
        if measured:
            line += f"  [{measured}]"
        terminalreporter.write_line(line)
