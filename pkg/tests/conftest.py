import warnings

import numpy as np
import pytest
from hypothesis import HealthCheck, settings
from hypothesis import strategies as st

import mona
from mona.netlist import load_graph

settings.register_profile(
    "default", max_examples=40, deadline=None, suppress_health_check=[HealthCheck.too_slow]
)
settings.load_profile("default")


@pytest.fixture(autouse=True)
def _quiet_topology_warnings():
    with warnings.catch_warnings():
        warnings.filterwarnings("ignore", message=".*A1.*")
        warnings.filterwarnings("ignore", message="inconsistent initial value.*")
        yield


def build(name, formulation):
    return mona.build(name, formulation)


@st.composite
def random_netlists(draw, kinds="RCLV", max_nodes=4, max_branches=7, with_diodes=False):
    """Connected random circuits: a spanning tree on the nodes plus extra branches."""
    n = draw(st.integers(1, max_nodes))
    nodes = [str(k) for k in range(n + 1)]  # "0" is ground
    pool = list(kinds) + (["D"] if with_diodes else [])
    lines = []
    counter = {}

    def add(kind, a, b):
        counter[kind] = counter.get(kind, 0) + 1
        name = f"{kind}{counter[kind]}"
        if kind in "RCL":
            val = draw(st.floats(0.2, 3.0))
            lines.append(f"{name} {a} {b} {val!r}")
        elif kind == "D":
            lines.append(f"{name} {a} {b} 0.5 1.5")
        else:
            lines.append(f"{name} {a} {b} sin {draw(st.floats(0.5, 2.0))!r} 1")

    for k in range(1, n + 1):
        parent = draw(st.integers(0, k - 1))
        a, b = (str(k), str(parent)) if draw(st.booleans()) else (str(parent), str(k))
        add(draw(st.sampled_from(pool)), a, b)
    extra = draw(st.integers(0, max(0, max_branches - n)))
    for _ in range(extra):
        a = draw(st.sampled_from(nodes))
        b = draw(st.sampled_from([m for m in nodes if m != a]))
        add(draw(st.sampled_from(pool)), a, b)
    return "\n".join(lines) + "\n"


def graph_of(text):
    return load_graph(text)


def rng(seed=0):
    return np.random.default_rng(seed)
