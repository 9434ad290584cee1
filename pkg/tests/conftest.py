import pytest

from tgdetect.graph import TemporalGraph
from tgdetect.ingest import Transaction

_criteria: dict[int, tuple[str, str]] = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(n, title): acceptance criterion covered by a test")


def pytest_runtest_logreport(report):
    if report.when != "call" and not (report.when == "setup" and report.outcome != "passed"):
        return
    crit = report.user_properties and dict(report.user_properties).get("criterion")
    if not crit:
        return
    n, title = crit
    prev = _criteria.get(n, (title, "PASS"))[1]
    outcome = {"passed": "PASS", "failed": "FAIL", "skipped": "SKIP"}[report.outcome]
    if prev == "FAIL" or (prev == "SKIP" and outcome == "PASS"):
        outcome = prev
    _criteria[n] = (title, outcome)


@pytest.hookimpl(tryfirst=True)
def pytest_runtest_setup(item):
    m = item.get_closest_marker("criterion")
    if m is not None:
        item.user_properties.append(("criterion", (m.args[0], m.args[1])))


def pytest_terminal_summary(terminalreporter):
    if not _criteria:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(_criteria):
        title, outcome = _criteria[n]
        terminalreporter.write_line(f"criterion {n:>2}: {outcome}  {title}")


def tx(block, src, dst, value=1, gas=21000, gas_price=10**9, h=""):
    """Transaction with value given in wei."""
    return Transaction(block, src, dst, value, gas, gas_price, h)


def graph(edges, start=None, end=None):
    """Graph from (block, src, dst[, value_wei[, gas_price]]) tuples."""
    txs = [tx(*e[:4], gas_price=e[4]) if len(e) > 4 else tx(*e) for e in edges]
    txs.sort(key=lambda t: t.block_number)
    return TemporalGraph(txs, start, end)


@pytest.fixture
def make_graph():
    return graph
