"""Reduced partial incidence matrices and the algebraic index conditions.

Condition A1: no I-cutsets (N([A_R, A_C, A_V, A_L]^T) = 0) and no V-loops
(N(A_V) = 0). Condition A2: additionally no LI-cutsets
(N([A_R, A_C, A_V]^T) = 0) and no CV-loops (N([A_C, A_V]) = 0).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Dict, Tuple

import numpy as np

from .netlist import BRANCH_CLASSES, GROUND, CircuitGraph

RANK_TOL = 1e-10

MNA = "MNA"
MONA = "MONA"
FORMULATIONS = (MNA, MONA)


class IllPosedTopology(ValueError):
    """Raised when condition A1 fails; no index statement is available then."""

    def __init__(self, violated: Tuple[str, ...], witnesses: Dict[str, np.ndarray]):
        self.violated = violated
        self.witnesses = witnesses
        parts = []
        for name in violated:
            w = witnesses.get(name)
            vec = "" if w is None else " witness " + np.array2string(w[:, 0], precision=4)
            parts.append(f"{name}{vec}")
        super().__init__("ill-posed topology: " + "; ".join(parts))


@dataclass(frozen=True)
class IncidenceDecomposition:
    A_C: np.ndarray
    A_L: np.ndarray
    A_R: np.ndarray
    A_V: np.ndarray
    A_I: np.ndarray
    nodes: Tuple[str, ...]
    branch_names: Dict[str, Tuple[str, ...]] = field(default_factory=dict)

    def part(self, cls: str) -> np.ndarray:
        return getattr(self, "A_" + cls)

    @property
    def A(self) -> np.ndarray:
        """Full reduced incidence matrix ``[A_C, A_L, A_R, A_V, A_I]``."""
        return np.hstack([self.part(cls) for cls in BRANCH_CLASSES])

    @property
    def n_nodes(self) -> int:
        return len(self.nodes)

    def count(self, cls: str) -> int:
        return self.part(cls).shape[1]


def build_incidence(graph: CircuitGraph) -> IncidenceDecomposition:
    """Column ``j`` of class ``x``: +1 at the row of ``n+``, -1 at the row of ``n-``;
    the ground row is dropped."""
    index = graph.node_index
    mats = {}
    names = {}
    for cls in BRANCH_CLASSES:
        els = graph.branches[cls]
        M = np.zeros((len(graph.nodes), len(els)), dtype=int)
        for j, el in enumerate(els):
            if el.node_plus != GROUND:
                M[index[el.node_plus], j] = 1
            if el.node_minus != GROUND:
                M[index[el.node_minus], j] = -1
        mats["A_" + cls] = M
        names[cls] = tuple(el.name for el in els)
    return IncidenceDecomposition(nodes=graph.nodes, branch_names=names, **mats)


def null_space_dim(M: np.ndarray, tol: float = RANK_TOL) -> Tuple[int, np.ndarray]:
    """Dimension and orthonormal basis (as columns) of the null space of ``M``.

    A singular value counts as zero when it is at most ``tol * sigma_max``; if
    ``M`` is identically zero every direction is null.
    """
    M = np.asarray(M, dtype=float)
    if M.ndim != 2:
        raise ValueError("expected a 2-D matrix")
    if not np.all(np.isfinite(M)):
        raise np.linalg.LinAlgError("null space of a matrix with non-finite entries")
    n = M.shape[1]
    if n == 0:
        return 0, np.zeros((0, 0))
    if M.shape[0] == 0:
        return n, np.eye(n)
    _, s, vt = np.linalg.svd(M)
    smax = s[0] if s.size else 0.0
    if smax == 0.0:
        return n, np.eye(n)
    rank = int(np.sum(s > tol * smax))
    basis = vt[rank:].T.copy()
    return n - rank, basis


def matrix_rank(M: np.ndarray, tol: float = RANK_TOL) -> int:
    M = np.asarray(M, dtype=float)
    return M.shape[1] - null_space_dim(M, tol)[0]


# condition name -> (matrix builder, topological meaning)
_CONDITIONS = {
    "A1": (
        ("I-cutset", lambda inc: np.hstack([inc.A_R, inc.A_C, inc.A_V, inc.A_L]).T),
        ("V-loop", lambda inc: inc.A_V),
    ),
    "A2": (
        ("LI-cutset", lambda inc: np.hstack([inc.A_R, inc.A_C, inc.A_V]).T),
        ("CV-loop", lambda inc: np.hstack([inc.A_C, inc.A_V])),
    ),
}


@dataclass(frozen=True)
class ConditionReport:
    a1_holds: bool
    a2_holds: bool
    witnesses: Dict[str, np.ndarray]
    ranks: Dict[str, int]
    null_dims: Dict[str, int]
    tol: float = RANK_TOL

    def failures(self, condition: str) -> Tuple[str, ...]:
        return tuple(name for name, _ in _CONDITIONS[condition] if self.null_dims[name] > 0)


def condition_matrix(inc: IncidenceDecomposition, name: str) -> np.ndarray:
    for group in _CONDITIONS.values():
        for label, build in group:
            if label == name:
                return build(inc).astype(float)
    raise KeyError(name)


def check_conditions(inc: IncidenceDecomposition, tol: float = RANK_TOL) -> ConditionReport:
    holds = {}
    witnesses = {}
    ranks = {}
    dims = {}
    for cond, group in _CONDITIONS.items():
        ok = True
        for name, build in group:
            M = build(inc)
            dim, basis = null_space_dim(M, tol)
            dims[name] = dim
            ranks[name] = M.shape[1] - dim
            if dim > 0:
                ok = False
                witnesses[name] = basis
        holds[cond] = ok
    return ConditionReport(holds["A1"], holds["A2"], witnesses, ranks, dims, tol)


@dataclass(frozen=True)
class IndexPrediction:
    formulation: str
    predicted_index: int
    basis: Tuple[str, ...]


def predict_index(report: ConditionReport, formulation: str) -> IndexPrediction:
    """Index implied by the conditions: MNA 1 (A2) or 2 (A1 only); MONA one lower."""
    formulation = formulation.upper()
    if formulation not in FORMULATIONS:
        raise ValueError(f"unknown formulation {formulation!r}")
    if not report.a1_holds:
        raise IllPosedTopology(report.failures("A1"), report.witnesses)
    if report.a2_holds:
        index, basis = 1, ("A1", "A2")
    else:
        index, basis = 2, ("A1",)
    if formulation == MONA:
        index -= 1
    return IndexPrediction(formulation, index, basis)
