import pytest

from delayed_sharing import instances
from delayed_sharing.coordinator import reachable_graph, solve_on_graph
from delayed_sharing.second_form import reachable_graph2, solve_on_graph2


@pytest.fixture(scope="session")
def io_spec():
    return instances.load("io")


@pytest.fixture(scope="session")
def i1_spec():
    return instances.load("i1")


@pytest.fixture(scope="session")
def i2_spec():
    return instances.load("i2")


@pytest.fixture(scope="session")
def ia_spec():
    return instances.load("ia")


@pytest.fixture(scope="session")
def solved():
    """Solve every shipped instance once: name -> dict with both graphs,
    value tables, and policies."""
    out = {}
    for name in instances.NAMES:
        spec = instances.load(name)
        graph = reachable_graph(spec)
        vt, pol = solve_on_graph(graph)
        graph2 = reachable_graph2(spec)
        vt2, pol2 = solve_on_graph2(graph2)
        out[name] = {
            "spec": spec,
            "graph": graph, "vt": vt, "pol": pol,
            "graph2": graph2, "vt2": vt2, "pol2": pol2,
        }
    return out
