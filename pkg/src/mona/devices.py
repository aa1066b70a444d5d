"""Constitutive device models.

Resistive branches (linear resistors and diodes) are described by their
current map ``g(v_R)`` and its derivative ``G(v_R)``; storage elements by
energy functionals whose gradients give the branch current (inductors, as a
function of flux linkage) or voltage (capacitors, as a function of charge).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Tuple

import numpy as np
from scipy.linalg import cho_factor, cho_solve

from .netlist import CircuitGraph, Waveform

EXP_CLAMP = 700.0


class ModelValidityError(ValueError):
    """A device matrix is not symmetric positive definite (violates A0)."""


class UnsupportedModelError(TypeError):
    """An operation needs a capability the device model does not provide."""


def check_spd(M: np.ndarray, what: str) -> None:
    M = np.asarray(M, dtype=float)
    if M.size == 0:
        return
    if not np.allclose(M, M.T, rtol=1e-12, atol=0.0):
        raise ModelValidityError(f"{what} is not symmetric")
    lam = np.linalg.eigvalsh(M)
    if lam[0] <= 0.0:
        raise ModelValidityError(f"{what} is not positive definite (smallest eigenvalue {lam[0]:.3e})")


class EnergyFunctional:
    """Strictly convex stored-energy functional ``x -> eps(x)``.

    Subclasses implement ``energy``, ``gradient`` and ``hessian``. Linear
    models also provide ``forward`` (the inverse of the gradient map, e.g.
    ``q = C v``), which the conventional formulation needs.
    """

    dim: int = 0
    linear: bool = False

    def energy(self, x: np.ndarray) -> float:
        raise NotImplementedError

    def gradient(self, x: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def hessian(self, x: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def forward(self, y: np.ndarray) -> np.ndarray:
        raise UnsupportedModelError(f"{type(self).__name__} has no closed-form forward map")

    def differential_matrix(self, y: np.ndarray) -> np.ndarray:
        """Differential capacitance/inductance at gradient value ``y``."""
        raise UnsupportedModelError(f"{type(self).__name__} has no closed-form forward map")


class QuadraticEnergy(EnergyFunctional):
    """``eps(x) = 1/2 x^T M^{-1} x`` for an SPD capacitance or inductance matrix ``M``."""

    linear = True

    def __init__(self, matrix):
        M = np.atleast_2d(np.asarray(matrix, dtype=float))
        if M.shape == (1, 0) or M.size == 0:
            M = np.zeros((0, 0))
        check_spd(M, "storage matrix")
        self.matrix = M
        self.dim = M.shape[0]
        if self.dim:
            self._factor = cho_factor(M)
            inv = cho_solve(self._factor, np.eye(self.dim))
            self._inverse = 0.5 * (inv + inv.T)
        else:
            self._inverse = np.zeros((0, 0))

    def gradient(self, x):
        x = np.asarray(x, dtype=float)
        if not self.dim:
            return np.zeros(0)
        return cho_solve(self._factor, x)

    def energy(self, x):
        x = np.asarray(x, dtype=float)
        return 0.5 * float(x @ self.gradient(x)) if self.dim else 0.0

    def hessian(self, x=None):
        return self._inverse.copy()

    def forward(self, y):
        return self.matrix @ np.asarray(y, dtype=float)

    def differential_matrix(self, y=None):
        return self.matrix


@dataclass(frozen=True)
class DeviceModels:
    """Per-class constitutive laws for one circuit.

    ``resistor_kind[j]`` is ``"R"`` or ``"D"``; for resistors ``res_a`` is the
    resistance, for diodes ``res_a, res_b`` are ``is`` and ``k`` in
    ``i = is*(exp(k*v) + 1)``.
    """

    resistor_kind: Tuple[str, ...]
    res_a: np.ndarray
    res_b: np.ndarray
    inductors: EnergyFunctional
    capacitors: EnergyFunctional
    v_sources: Tuple[Waveform, ...] = ()
    i_sources: Tuple[Waveform, ...] = ()
    _diode: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        kinds = np.array([k == "D" for k in self.resistor_kind], dtype=bool)
        object.__setattr__(self, "_diode", kinds)
        lin = ~kinds
        if np.any(self.res_a[lin] <= 0):
            raise ModelValidityError("resistances must be positive")
        if np.any(self.res_a[kinds] * self.res_b[kinds] <= 0):
            raise ModelValidityError("diode slope is*k must be positive")

    @property
    def n_resistive(self) -> int:
        return len(self.resistor_kind)

    @property
    def has_diodes(self) -> bool:
        return bool(self._diode.any())

    @property
    def linear(self) -> bool:
        return not self.has_diodes and self.inductors.linear and self.capacitors.linear

    def _exp_arg(self, v):
        return np.minimum(self.res_b[self._diode] * v[self._diode], EXP_CLAMP)

    def conductance_current(self, v_R) -> np.ndarray:
        v = np.asarray(v_R, dtype=float)
        i = np.empty_like(v)
        lin = ~self._diode
        i[lin] = v[lin] / self.res_a[lin]
        i[self._diode] = self.res_a[self._diode] * (np.exp(self._exp_arg(v)) + 1.0)
        return i

    def conductance_slopes(self, v_R) -> np.ndarray:
        """Diagonal of ``G(v_R) = dg/dv``."""
        v = np.asarray(v_R, dtype=float)
        d = np.empty_like(v)
        lin = ~self._diode
        d[lin] = 1.0 / self.res_a[lin]
        dd = self._diode
        d[dd] = self.res_a[dd] * self.res_b[dd] * np.exp(self._exp_arg(v))
        return d

    def conductance_matrix(self, v_R) -> np.ndarray:
        return np.diag(self.conductance_slopes(v_R))

    def clamped(self, v_R) -> bool:
        """True if any diode exponent hit the overflow clamp."""
        v = np.asarray(v_R, dtype=float)
        return bool(np.any(self.res_b[self._diode] * v[self._diode] >= EXP_CLAMP))

    def v_src(self, t: float) -> np.ndarray:
        return np.array([w(t) for w in self.v_sources])

    def v_src_dot(self, t: float) -> np.ndarray:
        return np.array([w.derivative(t) for w in self.v_sources])

    def i_src(self, t: float) -> np.ndarray:
        return np.array([w(t) for w in self.i_sources])

    def i_src_dot(self, t: float) -> np.ndarray:
        return np.array([w.derivative(t) for w in self.i_sources])

    def energy(self, phi_L, q_C) -> float:
        return self.inductors.energy(phi_L) + self.capacitors.energy(q_C)

    def energy_gradient(self, phi_L, q_C) -> Tuple[np.ndarray, np.ndarray]:
        return self.inductors.gradient(phi_L), self.capacitors.gradient(q_C)

    def energy_hessian(self, phi_L, q_C, validate: bool = False) -> Tuple[np.ndarray, np.ndarray]:
        L_inv = self.inductors.hessian(phi_L)
        C_inv = self.capacitors.hessian(q_C)
        if validate:
            check_spd(L_inv, "inductive energy Hessian")
            check_spd(C_inv, "capacitive energy Hessian")
        return L_inv, C_inv

    def with_storage(self, inductors: EnergyFunctional | None = None,
                     capacitors: EnergyFunctional | None = None) -> "DeviceModels":
        """Copy with the inductor and/or capacitor functionals replaced."""
        return DeviceModels(
            self.resistor_kind, self.res_a, self.res_b,
            inductors if inductors is not None else self.inductors,
            capacitors if capacitors is not None else self.capacitors,
            self.v_sources, self.i_sources,
        )


def eval_conductance_current(models: DeviceModels, v_R) -> np.ndarray:
    return models.conductance_current(v_R)


def eval_energy(models: DeviceModels, phi_L, q_C) -> float:
    return models.energy(phi_L, q_C)


def eval_energy_gradient(models: DeviceModels, phi_L, q_C):
    return models.energy_gradient(phi_L, q_C)


def eval_energy_hessian(models: DeviceModels, phi_L, q_C, validate: bool = False):
    return models.energy_hessian(phi_L, q_C, validate)


def inductance_matrix(graph: CircuitGraph) -> np.ndarray:
    names = [el.name for el in graph.branches["L"]]
    L = np.diag([float(el.value) for el in graph.branches["L"]]) if names else np.zeros((0, 0))
    pos = {n: k for k, n in enumerate(names)}
    for k in graph.couplings:
        a, b = pos[k.nodes[0]], pos[k.nodes[1]]
        L[a, b] = L[b, a] = float(k.value)
    return L


def build_models(graph: CircuitGraph) -> DeviceModels:
    """Linear storage models and resistor/diode laws from the netlist values."""
    res = graph.branches["R"]
    kinds = tuple(el.kind for el in res)
    a = np.array([el.params[0] for el in res], dtype=float)
    b = np.array([el.params[1] if el.kind == "D" else 0.0 for el in res], dtype=float)
    caps = np.diag([float(el.value) for el in graph.branches["C"]]) if graph.branches["C"] else np.zeros((0, 0))
    try:
        inductors = QuadraticEnergy(inductance_matrix(graph))
    except ModelValidityError as exc:
        raise ModelValidityError(f"inductance matrix: {exc}") from None
    try:
        capacitors = QuadraticEnergy(caps)
    except ModelValidityError as exc:
        raise ModelValidityError(f"capacitance matrix: {exc}") from None
    return DeviceModels(
        resistor_kind=kinds,
        res_a=a,
        res_b=b,
        inductors=inductors,
        capacitors=capacitors,
        v_sources=tuple(el.waveform for el in graph.branches["V"]),
        i_sources=tuple(el.waveform for el in graph.branches["I"]),
    )
