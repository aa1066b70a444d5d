"""Circuit DAEs in conventional (MNA) and magnetic oriented (MONA) nodal form."""

from .devices import DeviceModels, ModelValidityError, QuadraticEnergy, build_models
from .diagnostics import (
    ComparisonReport,
    EnergyReport,
    compare_trajectories,
    energy_balance,
    oscillation_metric,
)
from .formulations import (
    ImplicitDAE,
    assemble,
    assemble_mna,
    assemble_mona,
    check_consistency,
    consistent_initial_state,
    initial_state,
    observables,
    reconstruct_electric,
)
from .netlist import CircuitGraph, Netlist, NetlistError, load_graph, parse_netlist
from .solver import IntegratorConfig, Trajectory, newton_solve, numerical_index, simulate, step
from .topology import (
    MNA,
    MONA,
    IllPosedTopology,
    build_incidence,
    check_conditions,
    predict_index,
)


def load_example(name: str) -> CircuitGraph:
    """Circuit graph of a bundled netlist, e.g. ``"example1_cvloop"``."""
    from importlib import resources

    if not name.endswith(".cir"):
        name += ".cir"
    return load_graph((resources.files(__name__) / "data" / name).read_text())


def build(name_or_graph, formulation: str) -> ImplicitDAE:
    """Assemble a bundled example (by name) or a circuit graph in one formulation."""
    graph = load_example(name_or_graph) if isinstance(name_or_graph, str) else name_or_graph
    return assemble(formulation, build_incidence(graph), build_models(graph))
