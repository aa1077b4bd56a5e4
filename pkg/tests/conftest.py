import numpy as np
import pytest

from dgsched.model import FlowSpec, InterferenceModel, NetworkModel, SimConfig


def chain_model(num_nodes=2, min_rate=0.0, delay=50.0, bidirectional=False, **kw):
    names = tuple(f"n{i}" for i in range(num_nodes))
    links = [(i, i + 1) for i in range(num_nodes - 1)]
    if bidirectional:
        links += [(i + 1, i) for i in range(num_nodes - 1)]
    flows = (FlowSpec(0, num_nodes - 1, min_rate, delay),)
    return NetworkModel(names, tuple(links), flows, **kw)


def graph_model(num_nodes, links, flows=None, **kw):
    names = tuple(f"v{i}" for i in range(num_nodes))
    if flows is None:
        flows = (FlowSpec(0, num_nodes - 1, 0.0, 50.0),)
    return NetworkModel(names, tuple(links), tuple(flows), **kw)


def conflict_model(num_links, conflicts, capacities=None):
    """Disjoint links (2i -> 2i+1) tied together only by an explicit conflict graph."""
    links = [(2 * i, 2 * i + 1) for i in range(num_links)]
    inter = InterferenceModel("conflict-graph", tuple(sorted(tuple(sorted(p)) for p in conflicts)))
    caps = tuple(capacities) if capacities is not None else ()
    return graph_model(max(2, 2 * num_links), links, interference=inter, link_capacities=caps)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def base_config():
    return SimConfig()


def pytest_terminal_summary(terminalreporter):
    mod = __import__("sys").modules.get("test_acceptance")
    verdicts = getattr(mod, "VERDICTS", None)
    if verdicts:
        terminalreporter.section("acceptance criteria")
        for n in sorted(verdicts):
            terminalreporter.write_line(verdicts[n])
