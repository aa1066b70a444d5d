"""Energy balance, passivity and cross-formulation comparison of trajectories.

Along exact solutions the stored energy obeys

    d/dt (eps_L + eps_C) = -<g(v_R), v_R> - <A_I^T e, i_src> - <i_V, v_src>

for both formulations. :func:`energy_balance` evaluates the discrete version
of this identity with a quadrature that matches the integrator, so that the
residual measures quadrature error rather than a scheme mismatch.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field
from typing import Dict, Iterable, List, Mapping, Sequence, TextIO, Tuple

import numpy as np

from .formulations import ImplicitDAE, observables
from .solver import IMPLICIT_EULER, Trajectory
from .topology import MNA

DISSIPATION_GUARD = 1e-14


@dataclass(frozen=True)
class EnergyReport:
    """Per-sample energy and power series plus per-step balance residuals.

    ``stored``, ``dissipation`` and ``source_power`` have one entry per grid
    point; ``residual`` has one entry per step.
    """

    t: np.ndarray
    stored: np.ndarray
    dissipation: np.ndarray
    source_power: np.ndarray
    residual: np.ndarray

    def is_passive(self, slack: float = 1e-12) -> bool:
        """Stored energy nonincreasing at every step within ``slack (1 + eps_0)``."""
        tol = slack * (1.0 + abs(self.stored[0]))
        return bool(np.all(np.diff(self.stored) <= tol))

    def columns(self) -> Dict[str, np.ndarray]:
        step_residual = np.concatenate([[np.nan], self.residual])
        return {
            "t": self.t,
            "stored": self.stored,
            "dissipation": self.dissipation,
            "source_power": self.source_power,
            "balance_residual": step_residual,
        }


def _electric_series(traj: Trajectory) -> Tuple[np.ndarray, np.ndarray]:
    """Node potentials and voltage-source currents at every grid point."""
    dae = traj.dae
    if dae.formulation == MNA:
        return traj.x[:, dae.slices["e"]], traj.x[:, dae.slices["i_V"]]
    return traj.xdot[:, dae.slices["psi"]], traj.xdot[:, dae.slices["q_V"]]


def energy_balance(traj: Trajectory, dae: ImplicitDAE | None = None, models=None) -> EnergyReport:
    """Discrete energy balance of a trajectory.

    ``residual[n] = eps(t_{n+1}) - eps(t_n) + Q_n(p_diss + p_src)`` where
    ``Q_n`` is the right-endpoint rule for implicit Euler steps and the
    trapezoidal rule otherwise. ``dae`` and ``models`` default to the ones the
    trajectory was computed with.
    """
    dae = traj.dae if dae is None else dae
    models = dae.models if models is None else models
    A_I = dae.inc.A_I.astype(float)
    e, i_V = _electric_series(traj)
    n = len(traj.t)
    stored = np.array([dae.stored_energy(x) for x in traj.x])
    diss = np.zeros(n)
    src = np.zeros(n)
    for k in range(n):
        v_R = dae.resistive_voltages(traj.x[k], traj.xdot[k])
        diss[k] = float(models.conductance_current(v_R) @ v_R)
        t = traj.t[k]
        src[k] = float((A_I.T @ e[k]) @ models.i_src(t)) + float(i_V[k] @ models.v_src(t))
    power = diss + src
    tau = np.diff(traj.t)
    quad = np.where(
        np.array([s == IMPLICIT_EULER for s in traj.step_schemes], dtype=bool),
        tau * power[1:],
        0.5 * tau * (power[:-1] + power[1:]),
    ) if n > 1 else np.zeros(0)
    residual = np.diff(stored) + quad
    return EnergyReport(traj.t.copy(), stored, diss, src, residual)


def oscillation_metric(series: Sequence[float]) -> Tuple[float, float]:
    """``(alternation_fraction, amplitude)`` of a sampled series.

    The alternation fraction is the share of consecutive first-difference
    pairs with strictly opposite signs; the amplitude is the median absolute
    first difference over the second half of the series.
    """
    s = np.asarray(series, dtype=float)
    if s.ndim != 1 or s.size < 3:
        raise ValueError("oscillation_metric needs a 1-D series of length >= 3")
    d = np.diff(s)
    alternation = float(np.mean(d[:-1] * d[1:] < 0.0))
    tail = np.diff(s[s.size // 2:])
    amplitude = float(np.median(np.abs(tail))) if tail.size else 0.0
    return alternation, amplitude


def sign_change_indices(values: Sequence[float]) -> List[int]:
    """Grid indices at which a sampled source first shows a new nonzero sign."""
    signs = np.sign(np.asarray(values, dtype=float))
    out = []
    last = 0.0
    for k, s in enumerate(signs):
        if s == 0.0:
            continue
        if last != 0.0 and s != last:
            out.append(k)
        last = s
    return out


def windowed_alternation(series: Sequence[float], events: Iterable[int], window: int = 5) -> float:
    """Alternation fraction restricted to the ``window`` steps after each event.

    For an event at index ``k`` the samples ``k-1 .. k+window`` are examined,
    so that the jump itself and the following steps contribute difference
    pairs. Returns 0 when no event has a complete window.
    """
    s = np.asarray(series, dtype=float)
    flips = 0
    pairs = 0
    for k in events:
        lo, hi = k - 1, k + window + 1
        if lo < 0 or hi > s.size:
            continue
        d = np.diff(s[lo:hi])
        flips += int(np.sum(d[:-1] * d[1:] < 0.0))
        pairs += d.size - 1
    return flips / pairs if pairs else 0.0


@dataclass(frozen=True)
class ComparisonReport:
    """Max-norm differences of shared observables between two formulations.

    For a step-size sequence ``dts`` the ``differences`` entries are lists with
    one value per step size and ``order`` holds the fitted log-log slopes.
    """

    dts: Tuple[float, ...]
    differences: Dict[str, List[float]]
    order: Dict[str, float] = field(default_factory=dict)

    def max_difference(self, name: str) -> float:
        return self.differences[name][-1]

    def columns(self) -> Dict[str, np.ndarray]:
        out = {"dt": np.array(self.dts)}
        for name, vals in self.differences.items():
            out[f"diff_{name}"] = np.array(vals)
        return out


def _check_grids(a: Trajectory, b: Trajectory) -> None:
    if a.t.shape != b.t.shape or not np.allclose(a.t, b.t, rtol=0.0, atol=1e-12 * max(1.0, abs(a.t[-1]))):
        raise ValueError("trajectories are not on the same time grid")


def trajectory_differences(a: Trajectory, b: Trajectory,
                           names: Sequence[str] | None = None) -> Dict[str, float]:
    """Max-norm difference of every observable present in both trajectories."""
    _check_grids(a, b)
    oa, ob = observables(a), observables(b)
    if names is None:
        names = [k for k in oa if k in ob]
    missing = [k for k in names if k not in oa or k not in ob]
    if missing:
        raise KeyError(f"observables not available in both trajectories: {missing}")
    return {k: float(np.max(np.abs(oa[k] - ob[k]))) for k in names}


def convergence_order(dts: Sequence[float], errors: Sequence[float]) -> float:
    """Least-squares slope of ``log(error)`` against ``log(dt)``."""
    dts = np.asarray(dts, dtype=float)
    errors = np.asarray(errors, dtype=float)
    if dts.size < 2 or dts.size != errors.size:
        raise ValueError("need at least two (dt, error) pairs")
    if np.any(errors <= 0.0):
        return float("nan")
    slope, _ = np.polyfit(np.log(dts), np.log(errors), 1)
    return float(slope)


def compare_trajectories(traj_a, traj_b, observable_map: Sequence[str] | None = None) -> ComparisonReport:
    """Compare two runs, or two equally long sequences of runs over step sizes.

    Observables are the common electric quantities (node potentials, inductor
    currents, source currents) with MONA values reconstructed from the
    derivative samples.
    """
    if isinstance(traj_a, Trajectory):
        traj_a, traj_b = [traj_a], [traj_b]
    if len(traj_a) != len(traj_b) or not traj_a:
        raise ValueError("trajectory sequences must be nonempty and of equal length")
    dts = tuple(ta.dt for ta in traj_a)
    diffs: Dict[str, List[float]] = {}
    for ta, tb in zip(traj_a, traj_b):
        for name, val in trajectory_differences(ta, tb, observable_map).items():
            diffs.setdefault(name, []).append(val)
    order = {}
    if len(dts) >= 2:
        order = {name: convergence_order(dts, vals) for name, vals in diffs.items()}
    return ComparisonReport(dts, diffs, order)


def format_number(value: float) -> str:
    return "%.17g" % value


def write_csv(out: TextIO, columns: Mapping[str, Sequence[float]],
              comments: Iterable[str] = ()) -> None:
    """Write equally long named columns; ``comments`` follow as ``# ...`` lines."""
    names = list(columns)
    data = [np.asarray(columns[k], dtype=float) for k in names]
    lengths = {len(c) for c in data}
    if len(lengths) > 1:
        raise ValueError("columns have different lengths")
    writer = csv.writer(out, lineterminator="\n")
    writer.writerow(names)
    for row in zip(*data):
        writer.writerow([format_number(v) for v in row])
    for line in comments:
        out.write(f"# {line}\n")


def read_csv(text: str) -> Dict[str, np.ndarray]:
    """Inverse of :func:`write_csv`; comment lines are skipped."""
    rows = [r for r in csv.reader(io.StringIO(text)) if r and not r[0].startswith("#")]
    header, body = rows[0], rows[1:]
    values = np.array([[float(v) for v in r] for r in body]) if body else np.zeros((0, len(header)))
    return {name: values[:, k] for k, name in enumerate(header)}
