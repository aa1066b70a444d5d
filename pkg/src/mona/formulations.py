"""Conventional (MNA) and magnetic oriented (MONA) circuit equations as
fully implicit DAEs ``F(t, x, x') = 0``.

MNA unknowns ``x = (e, i_L, i_V)``::

    A_C C A_C^T e' + A_R g(A_R^T e) + A_L i_L + A_V i_V + A_I i_src(t) = 0
    L i_L' - A_L^T e                                                  = 0
    -A_V^T e + v_src(t)                                               = 0

MONA unknowns ``x = (psi, q_C, q_V)``::

    A_R g(A_R^T psi') + A_C q_C' + A_V q_V' + A_L grad eps_L(A_L^T psi) + A_I i_src(t) = 0
    -A_C^T psi' + grad eps_C(q_C)                                                     = 0
    -A_V^T psi' + v_src(t)                                                            = 0
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass
from typing import Dict, Mapping, Tuple

import numpy as np

from .devices import DeviceModels, UnsupportedModelError
from .topology import MNA, MONA, RANK_TOL, IncidenceDecomposition, check_conditions


class EvaluationError(ArithmeticError):
    def __init__(self, message: str, row: int | None = None):
        self.row = row
        super().__init__(message)


class ImplicitDAE:
    """Assembled circuit DAE with residual and analytic Jacobians.

    Instances are immutable after assembly; evaluation methods are pure.
    """

    def __init__(self, formulation: str, inc: IncidenceDecomposition, models: DeviceModels):
        self.formulation = formulation
        self.inc = inc
        self.models = models
        n = inc.n_nodes
        nC, nL, nV = inc.count("C"), inc.count("L"), inc.count("V")
        self.n_nodes = n
        if models.n_resistive != inc.count("R"):
            raise ValueError(f"{models.n_resistive} resistive models for {inc.count('R')} resistive branches")
        if models.capacitors.dim != nC or models.inductors.dim != nL:
            raise ValueError("storage model dimensions do not match the incidence matrices")
        if len(models.v_sources) != nV or len(models.i_sources) != inc.count("I"):
            raise ValueError("source count does not match the incidence matrices")

        names = inc.branch_names
        if formulation == MNA:
            blocks = [("e", n), ("i_L", nL), ("i_V", nV)]
            labels = [f"e_{k}" for k in inc.nodes]
            labels += [f"i_{k}" for k in names.get("L", ())] + [f"i_{k}" for k in names.get("V", ())]
        elif formulation == MONA:
            blocks = [("psi", n), ("q_C", nC), ("q_V", nV)]
            labels = [f"psi_{k}" for k in inc.nodes]
            labels += [f"q_{k}" for k in names.get("C", ())] + [f"q_{k}" for k in names.get("V", ())]
        else:
            raise ValueError(f"unknown formulation {formulation!r}")
        self.labels: Tuple[str, ...] = tuple(labels)
        self.slices: Dict[str, slice] = {}
        start = 0
        for name, size in blocks:
            self.slices[name] = slice(start, start + size)
            start += size
        self.size = start
        # row blocks follow the same partition as the unknowns
        self.row_blocks = tuple(self.slices.values())

        A = {cls: inc.part(cls).astype(float) for cls in ("C", "L", "R", "V", "I")}
        self._A = A
        if formulation == MNA:
            self._cap_matrix = A["C"] @ models.capacitors.differential_matrix(None) @ A["C"].T
            self._ind_matrix = models.inductors.differential_matrix(None)

    def __repr__(self):
        return f"ImplicitDAE({self.formulation}, size={self.size})"

    def split(self, x) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
        return tuple(np.asarray(x, dtype=float)[s] for s in self.slices.values())

    def _check(self, r: np.ndarray) -> np.ndarray:
        bad = np.flatnonzero(~np.isfinite(r))
        if bad.size:
            raise EvaluationError(f"non-finite residual in row {bad[0]}", int(bad[0]))
        return r

    def residual(self, t: float, x, xdot) -> np.ndarray:
        A, m = self._A, self.models
        x1, x2, x3 = self.split(x)
        d1, d2, d3 = self.split(xdot)
        with np.errstate(invalid="ignore", over="ignore"):
            if self.formulation == MNA:
                r1 = (self._cap_matrix @ d1 + A["R"] @ m.conductance_current(A["R"].T @ x1)
                      + A["L"] @ x2 + A["V"] @ x3 + A["I"] @ m.i_src(t))
                r2 = self._ind_matrix @ d2 - A["L"].T @ x1
                r3 = -A["V"].T @ x1 + m.v_src(t)
            else:
                r1 = (A["R"] @ m.conductance_current(A["R"].T @ d1) + A["C"] @ d2 + A["V"] @ d3
                      + A["L"] @ m.inductors.gradient(A["L"].T @ x1) + A["I"] @ m.i_src(t))
                r2 = -A["C"].T @ d1 + m.capacitors.gradient(x2)
                r3 = -A["V"].T @ d1 + m.v_src(t)
        return self._check(np.concatenate([r1, r2, r3]))

    def jacobians(self, t: float, x, xdot) -> Tuple[np.ndarray, np.ndarray]:
        """Analytic ``(dF/dx, dF/dx')``."""
        A, m = self._A, self.models
        s1, s2, s3 = self.slices.values()
        x1, x2, _ = self.split(x)
        d1 = np.asarray(xdot, dtype=float)[s1]
        Jx = np.zeros((self.size, self.size))
        Jd = np.zeros((self.size, self.size))
        if self.formulation == MNA:
            G = m.conductance_slopes(A["R"].T @ x1)
            Jx[s1, s1] = (A["R"] * G) @ A["R"].T
            Jx[s1, s2] = A["L"]
            Jx[s1, s3] = A["V"]
            Jx[s2, s1] = -A["L"].T
            Jx[s3, s1] = -A["V"].T
            Jd[s1, s1] = self._cap_matrix
            Jd[s2, s2] = self._ind_matrix
        else:
            G = m.conductance_slopes(A["R"].T @ d1)
            Jx[s1, s1] = A["L"] @ m.inductors.hessian(A["L"].T @ x1) @ A["L"].T
            Jx[s2, s2] = m.capacitors.hessian(x2)
            Jd[s1, s1] = (A["R"] * G) @ A["R"].T
            Jd[s1, s2] = A["C"]
            Jd[s1, s3] = A["V"]
            Jd[s2, s1] = -A["C"].T
            Jd[s3, s1] = -A["V"].T
        return self._check(Jx), self._check(Jd)

    def time_derivative(self, t: float) -> np.ndarray:
        """Partial derivative ``dF/dt`` (only the source terms depend on t)."""
        m = self.models
        out = np.zeros(self.size)
        s1, _, s3 = self.slices.values()
        out[s1] = self._A["I"] @ m.i_src_dot(t)
        out[s3] = m.v_src_dot(t)
        return out

    def pencil(self, t: float = 0.0, x=None, xdot=None) -> Tuple[np.ndarray, np.ndarray]:
        """``(E, A)`` of the linearisation ``E dx' + A dx`` at ``(t, x, x')`` (default: origin)."""
        x = np.zeros(self.size) if x is None else x
        xdot = np.zeros(self.size) if xdot is None else xdot
        Jx, Jd = self.jacobians(t, x, xdot)
        return Jd, Jx

    def resistive_voltages(self, x, xdot) -> np.ndarray:
        """Branch voltages ``v_R``: ``A_R^T e`` (MNA) or ``A_R^T psi'`` (MONA)."""
        src = x if self.formulation == MNA else xdot
        return self._A["R"].T @ np.asarray(src, dtype=float)[self.slices["e" if self.formulation == MNA else "psi"]]

    def stored_energy(self, x) -> float:
        x1, x2, x3 = self.split(x)
        A, m = self._A, self.models
        if self.formulation == MONA:
            return m.energy(A["L"].T @ x1, x2)
        if not (m.inductors.linear and m.capacitors.linear):
            raise UnsupportedModelError("MNA energy needs forward maps q(v), phi(i)")
        return m.energy(m.inductors.forward(x2), m.capacitors.forward(A["C"].T @ x1))


def _assemble(formulation: str, inc: IncidenceDecomposition, models: DeviceModels) -> ImplicitDAE:
    report = check_conditions(inc)
    if not report.a1_holds:
        warnings.warn(f"condition A1 violated ({', '.join(report.failures('A1'))}); "
                      f"the {formulation} system is not guaranteed regular", stacklevel=3)
    return ImplicitDAE(formulation, inc, models)


def assemble_mna(inc: IncidenceDecomposition, models: DeviceModels) -> ImplicitDAE:
    if not (models.inductors.linear and models.capacitors.linear):
        raise UnsupportedModelError("MNA assembly supports linear capacitors and inductors only")
    return _assemble(MNA, inc, models)


def assemble_mona(inc: IncidenceDecomposition, models: DeviceModels) -> ImplicitDAE:
    return _assemble(MONA, inc, models)


def assemble(formulation: str, inc: IncidenceDecomposition, models: DeviceModels) -> ImplicitDAE:
    formulation = formulation.upper()
    return assemble_mna(inc, models) if formulation == MNA else assemble_mona(inc, models)


def residual(dae: ImplicitDAE, t, x, xdot) -> np.ndarray:
    return dae.residual(t, x, xdot)


def jacobians(dae: ImplicitDAE, t, x, xdot) -> Tuple[np.ndarray, np.ndarray]:
    return dae.jacobians(t, x, xdot)


def initial_state(dae: ImplicitDAE, overrides: Mapping[str, float] | None = None, tol: float = 1e-9) -> np.ndarray:
    """Native initial vector from capacitor voltages / inductor currents by element name.

    Unlisted elements start at zero; MONA starts from psi = 0 and q_V = 0
    unless an inductor current forces a nonzero flux ``A_L^T psi``.
    """
    overrides = dict(overrides or {})
    inc, m = dae.inc, dae.models
    cap_names = list(inc.branch_names.get("C", ()))
    ind_names = list(inc.branch_names.get("L", ()))
    unknown = set(overrides) - set(cap_names) - set(ind_names)
    if unknown:
        raise KeyError(f"initial overrides name no capacitor/inductor: {sorted(unknown)}")
    v_C = np.array([float(overrides.get(n, 0.0)) for n in cap_names])
    i_L = np.array([float(overrides.get(n, 0.0)) for n in ind_names])
    x = np.zeros(dae.size)
    s1, s2, _ = dae.slices.values()
    A_C = inc.A_C.astype(float)
    A_L = inc.A_L.astype(float)

    def solve_nodes(M, rhs, what):
        if not np.any(rhs):
            return np.zeros(dae.n_nodes)
        sol = np.linalg.lstsq(M, rhs, rcond=None)[0]
        if np.linalg.norm(M @ sol - rhs) > tol * (1 + np.linalg.norm(rhs)):
            raise ValueError(f"initial {what} values are not realisable by node potentials")
        return sol

    if dae.formulation == MNA:
        x[s1] = solve_nodes(A_C.T, v_C, "capacitor voltage")
        x[s2] = i_L
    else:
        if np.any(i_L):
            x[s1] = solve_nodes(A_L.T, m.inductors.forward(i_L), "inductor flux")
        if np.any(v_C):
            x[s2] = m.capacitors.forward(v_C)
    return x


@dataclass(frozen=True)
class Consistency:
    classification: str
    residual_norm: float
    xdot0: np.ndarray
    jacobian_rank: int

    @property
    def consistent(self) -> bool:
        return self.classification == "consistent"


def _lstsq(M, b):
    sol, _, rank, _ = np.linalg.lstsq(M, b, rcond=RANK_TOL)
    return sol, rank


def _gauss_newton(F, J, z, max_iter: int = 50) -> np.ndarray:
    """Minimise ``|F(z)|`` by Gauss-Newton with step halving.

    Halving only kicks in when a full step fails to reduce the residual, so
    that exponential device laws far from the start do not derail it.
    """
    z = np.asarray(z, dtype=float)
    with np.errstate(over="ignore", invalid="ignore"):
        r = F(z)
        norm = np.linalg.norm(r)
        for _ in range(max_iter):
            step, _ = _lstsq(J(z), -r)
            lam = 1.0
            for _ in range(40):
                trial = z + lam * step
                try:
                    rt = F(trial)
                except EvaluationError:
                    rt = None
                if rt is not None and np.linalg.norm(rt) <= norm:
                    break
                lam *= 0.5
            else:
                break
            z, r, norm = trial, rt, np.linalg.norm(rt)
            if np.linalg.norm(lam * step, np.inf) <= 1e-15 * (1.0 + np.linalg.norm(z, np.inf)):
                break
    return z


def check_consistency(dae: ImplicitDAE, t0: float, x0, max_iter: int = 50) -> Consistency:
    """Initial derivative minimising ``|F(t0, x0, x0')|`` and a consistency verdict.

    The minimiser is found by Gauss-Newton on ``x0'``. When ``dF/dx'`` is
    singular the minimiser is not unique; among the minimisers we take the one
    that best satisfies the once-differentiated algebraic rows
    ``W^T (dF/dt + dF/dx x0') = 0`` (``W`` spanning the left null space), so
    index-1 systems receive their consistent derivative. Constraints hidden
    deeper than one differentiation are left alone.
    """
    x0 = np.asarray(x0, dtype=float)
    xd = np.zeros(dae.size)

    def gauss_newton(xd):
        return _gauss_newton(lambda z: dae.residual(t0, x0, z),
                             lambda z: dae.jacobians(t0, x0, z)[1], xd, max_iter)

    xd = gauss_newton(xd)
    Jx, Jd = dae.jacobians(t0, x0, xd)
    U, s, Vt = np.linalg.svd(Jd)
    r = int(np.sum(s > RANK_TOL * s[0])) if s.size and s[0] > 0 else 0
    if r < dae.size:
        W, Z = U[:, r:], Vt[r:].T
        H = W.T @ Jx @ Z
        rhs = -W.T @ (dae.time_derivative(t0) + Jx @ xd)
        a, _ = _lstsq(H, rhs)
        xd = gauss_newton(xd + Z @ a)
    res = float(np.linalg.norm(dae.residual(t0, x0, xd), np.inf))
    ok = res <= 1e-10 * (1.0 + np.linalg.norm(x0, np.inf))
    return Consistency("consistent" if ok else "inconsistent", res, xd, r)


def consistent_initial_state(dae: ImplicitDAE, t0: float, x0, max_iter: int = 50) -> np.ndarray:
    """Complete ``x0`` consistently without touching its stored-energy part.

    Only directions in the null space of ``dF/dx'`` (the purely algebraic
    unknowns, e.g. MNA potentials not fixed by capacitor voltages, and source
    currents) are changed; Gauss-Newton then minimises ``|F(t0, x, x')|`` jointly
    over those directions and ``x'``. A formulation whose leading matrix is
    regular is returned unchanged, and a constraint that the fixed part
    violates (such as a capacitor voltage clashing with a source) stays violated.
    """
    x0 = np.asarray(x0, dtype=float)
    _, Jd = dae.jacobians(t0, x0, np.zeros(dae.size))
    _, s, Vt = np.linalg.svd(Jd)
    r = int(np.sum(s > RANK_TOL * s[0])) if s.size and s[0] > 0 else 0
    if r == dae.size:
        return x0.copy()
    Z = Vt[r:].T
    y = np.zeros(Z.shape[1])
    xd = np.zeros(dae.size)
    k = Z.shape[1]

    def F(z):
        return dae.residual(t0, x0 + Z @ z[:k], z[k:])

    def J(z):
        Jx, Jd = dae.jacobians(t0, x0 + Z @ z[:k], z[k:])
        return np.hstack([Jx @ Z, Jd])

    z = _gauss_newton(F, J, np.concatenate([y, xd]), max_iter)
    return x0 + Z @ z[:k]


@dataclass(frozen=True)
class ElectricReconstruction:
    t: np.ndarray
    e: np.ndarray
    phi_L: np.ndarray
    i_L: np.ndarray
    v_C: np.ndarray
    i_C: np.ndarray
    i_V: np.ndarray

    def columns(self, dae: ImplicitDAE) -> Dict[str, np.ndarray]:
        """Named series: ``e_<node>``, ``i_<V>``, ``phi_<L>``."""
        names = dae.inc.branch_names
        out: Dict[str, np.ndarray] = {}
        for k, node in enumerate(dae.inc.nodes):
            out[f"e_{node}"] = self.e[:, k]
        for k, name in enumerate(names.get("V", ())):
            out[f"i_{name}"] = self.i_V[:, k]
        for k, name in enumerate(names.get("L", ())):
            out[f"phi_{name}"] = self.phi_L[:, k]
        return out


def reconstruct_electric(trajectory) -> ElectricReconstruction:
    """Electric quantities of a MONA trajectory from its solved derivative samples."""
    dae = trajectory.dae
    if dae.formulation != MONA:
        raise ValueError("reconstruction applies to MONA trajectories")
    if trajectory.xdot is None:
        raise ValueError("trajectory carries no derivative samples")
    A_L = dae.inc.A_L.astype(float)
    A_C = dae.inc.A_C.astype(float)
    s1, s2, s3 = dae.slices.values()
    psi, psid = trajectory.x[:, s1], trajectory.xdot[:, s1]
    phi = psi @ A_L
    i_L = np.zeros_like(phi)
    for n, p in enumerate(phi):
        i_L[n] = dae.models.inductors.gradient(p)
    return ElectricReconstruction(
        t=trajectory.t,
        e=psid.copy(),
        phi_L=phi,
        i_L=i_L,
        v_C=psid @ A_C,
        i_C=trajectory.xdot[:, s2].copy(),
        i_V=trajectory.xdot[:, s3].copy(),
    )


def observables(trajectory) -> Dict[str, np.ndarray]:
    """Common electric observables of either formulation: node potentials
    ``e_<node>``, inductor currents ``i_<L>`` and source currents ``i_<V>``."""
    dae = trajectory.dae
    names = dae.inc.branch_names
    out: Dict[str, np.ndarray] = {}
    if dae.formulation == MNA:
        e, i_L, i_V = (trajectory.x[:, s] for s in dae.slices.values())
    else:
        rec = reconstruct_electric(trajectory)
        e, i_L, i_V = rec.e, rec.i_L, rec.i_V
    for k, node in enumerate(dae.inc.nodes):
        out[f"e_{node}"] = e[:, k]
    for k, name in enumerate(names.get("L", ())):
        out[f"i_{name}"] = i_L[:, k]
    for k, name in enumerate(names.get("V", ())):
        out[f"i_{name}"] = i_V[:, k]
    return out

