"""Command-line front end: ``mona analyze | run | compare``.

Exit codes: 0 success, 1 input error, 2 topology rejection, 3 solver failure.

Scenario files hold ``key = value`` lines with keys matching the long flags
(``netlist``, ``formulation``, ``scheme``, ``dt``, ``t_end``,
``startup_ie_steps``, ``out``, and for ``compare`` also ``dt_list`` and
``observables``) plus ``init.<element> = value`` initial capacitor voltages or
inductor currents. Flags given on the command line override file values.
"""

from __future__ import annotations

import argparse
import sys
import warnings
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Dict, List, Sequence, TextIO, Tuple

import numpy as np

from .devices import ModelValidityError, build_models
from .diagnostics import (
    compare_trajectories,
    oscillation_metric,
    sign_change_indices,
    windowed_alternation,
    write_csv,
)
from .formulations import (
    assemble,
    consistent_initial_state,
    initial_state,
    observables,
    reconstruct_electric,
)
from .netlist import CircuitGraph, NetlistError, load_graph
from .solver import IntegratorConfig, SimulationError, SingularPencilError, Trajectory, numerical_index, simulate
from .topology import MNA, MONA, build_incidence, check_conditions, predict_index

EXIT_OK, EXIT_INPUT, EXIT_TOPOLOGY, EXIT_SOLVER = 0, 1, 2, 3

# whole-series alternation above this marks a run as oscillatory; near source
# discontinuities the windowed alternation uses the lower threshold
OSCILLATION_FLAG = 0.5
WINDOW_FLAG = 0.3
EVENT_WINDOW = 5


class InputError(ValueError):
    pass


@dataclass(frozen=True)
class Scenario:
    netlist: str
    formulation: str = "both"
    scheme: str = "tr"
    dt: float = 0.1
    t_end: float = 10.0
    startup_ie_steps: int = 0
    init: Dict[str, float] = field(default_factory=dict)
    out: str | None = None
    dt_list: Tuple[float, ...] = ()
    observables: Tuple[str, ...] = ()
    consistent_init: bool = False

    def validate(self) -> None:
        if self.formulation not in ("mna", "mona", "both"):
            raise InputError(f"formulation must be mna, mona or both, got {self.formulation!r}")
        if self.scheme not in ("ie", "tr"):
            raise InputError(f"scheme must be ie or tr, got {self.scheme!r}")
        if not self.dt > 0:
            raise InputError("dt must be positive")
        if not self.t_end > 0:
            raise InputError("t_end must be positive")
        if self.startup_ie_steps < 0:
            raise InputError("startup_ie_steps must be >= 0")
        if any(not d > 0 for d in self.dt_list):
            raise InputError("dt_list entries must be positive")

    @property
    def formulations(self) -> Tuple[str, ...]:
        return (MNA, MONA) if self.formulation == "both" else (self.formulation.upper(),)

    def config(self, dt: float | None = None) -> IntegratorConfig:
        return IntegratorConfig(scheme=self.scheme, dt=self.dt if dt is None else dt,
                                t_end=self.t_end, startup_ie_steps=self.startup_ie_steps)


_CASTS = {
    "netlist": str, "formulation": str.lower, "scheme": str.lower, "dt": float,
    "t_end": float, "startup_ie_steps": int, "out": str,
    "dt_list": lambda s: tuple(float(v) for v in s.split(",") if v.strip()),
    "observables": lambda s: tuple(v.strip() for v in s.split(",") if v.strip()),
    "consistent_init": lambda s: _parse_bool(s),
}


def _parse_bool(text: str) -> bool:
    low = text.strip().lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise ValueError(text)


def parse_scenario_text(text: str, base: Path | None = None) -> Dict[str, object]:
    """Key/value pairs of a scenario file, cast to their field types."""
    values: Dict[str, object] = {}
    init: Dict[str, float] = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise InputError(f"scenario line {lineno}: expected key = value")
        key, value = (s.strip() for s in line.split("=", 1))
        key = key.replace("-", "_")
        try:
            if key.startswith("init."):
                init[key[5:]] = float(value)
            elif key in _CASTS:
                values[key] = _CASTS[key](value)
            else:
                raise InputError(f"scenario line {lineno}: unknown key {key!r}")
        except ValueError as exc:
            if isinstance(exc, InputError):
                raise
            raise InputError(f"scenario line {lineno}: bad value for {key}: {value!r}") from None
    if base is not None:
        for key in ("netlist", "out"):
            if key in values and not Path(str(values[key])).is_absolute():
                candidate = base / str(values[key])
                if key == "out" or candidate.exists():
                    values[key] = str(candidate)
    if init:
        values["init"] = init
    return values


def build_scenario(args: argparse.Namespace) -> Scenario:
    values: Dict[str, object] = {}
    if getattr(args, "scenario", None):
        path = Path(args.scenario)
        try:
            text = path.read_text()
        except OSError as exc:
            raise InputError(f"cannot read scenario file: {exc}") from None
        values.update(parse_scenario_text(text, path.parent))
    for key in _CASTS:
        flag = getattr(args, key, None)
        if flag is not None:
            values[key] = flag
    if "netlist" not in values:
        raise InputError("no netlist given (use --netlist or a scenario file)")
    scenario = Scenario(**values)
    scenario.validate()
    return scenario


def resolve_netlist(path: str) -> Path:
    """A netlist path, falling back to the bundled examples by file name."""
    p = Path(path)
    if p.exists():
        return p
    bundled = resources.files("mona") / "data" / p.name
    if bundled.is_file():
        return Path(str(bundled))
    raise InputError(f"netlist not found: {path}")


def load_circuit(path: str) -> CircuitGraph:
    p = resolve_netlist(path)
    try:
        return load_graph(p.read_text())
    except OSError as exc:
        raise InputError(f"cannot read netlist: {exc}") from None


# ---------------------------------------------------------------- analyze

def analyze_report(graph: CircuitGraph) -> Tuple[List[str], int]:
    """Report lines and exit code for the topological analysis of a circuit."""
    inc = build_incidence(graph)
    report = check_conditions(inc)
    lines = [
        f"nodes (non-ground): {inc.n_nodes}",
        "incidence: " + ", ".join(f"A_{c} {inc.n_nodes}x{inc.count(c)}" for c in ("C", "L", "R", "V", "I")),
    ]
    for cond in ("A1", "A2"):
        for name in _condition_names(cond):
            dim = report.null_dims[name]
            verdict = "none" if dim == 0 else f"{dim} found"
            lines.append(f"  {cond} check {name}: {verdict}")
            if dim:
                for w in report.witnesses[name].T:
                    lines.append("    witness " + np.array2string(w, precision=4, suppress_small=True))

    def verdict(cond, holds):
        return "holds" if holds else "FAILS (" + ", ".join(report.failures(cond)) + ")"

    parts = [f"A1: {verdict('A1', report.a1_holds)}", f"A2: {verdict('A2', report.a2_holds)}"]
    if not report.a1_holds:
        lines.append("; ".join(parts) + "; no index statement (ill-posed topology)")
        return lines, EXIT_TOPOLOGY

    predicted = {f: predict_index(report, f).predicted_index for f in (MNA, MONA)}
    parts.append(f"index MNA={predicted[MNA]}, MONA={predicted[MONA]}")
    models = build_models(graph)
    oracle = {}
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        for f in (MNA, MONA):
            try:
                oracle[f] = numerical_index(*assemble(f, inc, models).pencil())
            except SingularPencilError:
                oracle[f] = None
    text = "/".join("-" if oracle[f] is None else str(oracle[f]) for f in (MNA, MONA))
    if models.linear:
        parts.append(f"oracle: {text}")
        lines.append("; ".join(parts))
    else:
        lines.append("; ".join(parts))
        lines.append(f"oracle (linearised at the zero state): {text}")
    return lines, EXIT_OK


def _condition_names(cond: str) -> Tuple[str, ...]:
    return ("I-cutset", "V-loop") if cond == "A1" else ("LI-cutset", "CV-loop")


def cmd_analyze(args: argparse.Namespace, out: TextIO) -> int:
    graph = load_circuit(args.netlist)
    lines, code = analyze_report(graph)
    out.write("\n".join(lines) + "\n")
    return code


# ---------------------------------------------------------------- run

def run_formulation(graph: CircuitGraph, formulation: str, scenario: Scenario,
                    dt: float | None = None) -> Tuple[Trajectory, str | None]:
    """Simulate one formulation; returns the (possibly partial) trajectory and
    the failure message, if any."""
    inc = build_incidence(graph)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        dae = assemble(formulation, inc, build_models(graph))
        try:
            x0 = initial_state(dae, scenario.init)
        except (KeyError, ValueError) as exc:
            raise InputError(str(exc).strip("'\"")) from None
        if scenario.consistent_init:
            x0 = consistent_initial_state(dae, 0.0, x0)
        try:
            return simulate(dae, scenario.config(dt), x0), None
        except SimulationError as exc:
            return exc.trajectory, str(exc)


def trajectory_columns(traj: Trajectory) -> Dict[str, np.ndarray]:
    """CSV columns: ``t``, the native unknowns and, for MONA, the
    reconstructed ``e_``, ``i_<V>`` and ``phi_`` series."""
    cols: Dict[str, np.ndarray] = {"t": traj.t}
    for k, label in enumerate(traj.dae.labels):
        cols[label] = traj.x[:, k]
    if traj.dae.formulation == MONA:
        cols.update(reconstruct_electric(traj).columns(traj.dae))
    return cols


def write_trajectory(out: TextIO, traj: Trajectory, failure: str | None) -> None:
    comments = [f"flag: {f}" for f in traj.flags if failure is None or f != failure]
    if failure is not None:
        comments.append(f"ABORTED at t={traj.aborted_at:.17g}: {failure}")
    write_csv(out, trajectory_columns(traj), comments)


def _summary(formulation: str, traj: Trajectory, failure: str | None) -> str:
    it = traj.newton_iterations
    stats = f"newton max={int(it.max())} mean={it.mean():.2f}" if it.size else "no steps"
    status = "ABORTED" if failure else "ok"
    return f"{formulation}: {status}, {len(traj.t) - 1} steps, {stats}, flags={len(traj.flags)}"


def _output_paths(scenario: Scenario) -> Dict[str, Path | None]:
    forms = scenario.formulations
    if scenario.out is None:
        if len(forms) == 1:
            return {forms[0]: None}
        stem = Path(scenario.netlist).stem
        return {f: Path(f"{stem}_{f.lower()}.csv") for f in forms}
    out = Path(scenario.out)
    if len(forms) == 1:
        return {forms[0]: out}
    return {f: out.with_name(f"{out.stem}_{f.lower()}{out.suffix or '.csv'}") for f in forms}


def cmd_run(args: argparse.Namespace, out: TextIO, err: TextIO) -> int:
    scenario = build_scenario(args)
    graph = load_circuit(scenario.netlist)
    code = EXIT_OK
    for formulation, path in _output_paths(scenario).items():
        traj, failure = run_formulation(graph, formulation, scenario)
        if path is None:
            write_trajectory(out, traj, failure)
        else:
            path.parent.mkdir(parents=True, exist_ok=True)
            with path.open("w", newline="") as fh:
                write_trajectory(fh, traj, failure)
        err.write(_summary(formulation, traj, failure) + (f" -> {path}" if path else "") + "\n")
        if failure:
            code = EXIT_SOLVER
    return code


# ---------------------------------------------------------------- compare

def oscillation_rows(traj: Trajectory, names: Sequence[str]) -> List[Tuple[str, float, float, float, bool]]:
    """``(name, alternation, amplitude, windowed alternation, flagged)`` per observable.

    The windowed value looks at the steps following sign changes of
    discontinuous sources; it is NaN when the circuit has none.
    """
    obs = observables(traj)
    models = traj.dae.models
    events: List[int] = []
    for w in models.v_sources + models.i_sources:
        if w.is_discontinuous():
            events += sign_change_indices([w(t) for t in traj.t])
    events = sorted(set(events))
    rows = []
    for name in names:
        alt, amp = oscillation_metric(obs[name])
        win = windowed_alternation(obs[name], events, EVENT_WINDOW) if events else float("nan")
        flagged = alt > OSCILLATION_FLAG or (bool(events) and win > WINDOW_FLAG)
        rows.append((name, alt, amp, win, flagged))
    return rows


def cmd_compare(args: argparse.Namespace, out: TextIO, err: TextIO) -> int:
    scenario = build_scenario(args)
    dts = scenario.dt_list or (scenario.dt,)
    if list(dts) != sorted(dts, reverse=True):
        raise InputError("dt_list must be descending")
    graph = load_circuit(scenario.netlist)
    runs: Dict[str, List[Trajectory]] = {MNA: [], MONA: []}
    for dt in dts:
        for formulation in (MNA, MONA):
            traj, failure = run_formulation(graph, formulation, scenario, dt)
            if failure:
                err.write(f"{formulation} dt={dt:g}: {failure}\n")
                return EXIT_SOLVER
            runs[formulation].append(traj)
    names = list(scenario.observables) or None
    try:
        report = compare_trajectories(runs[MNA], runs[MONA], names)
    except KeyError as exc:
        raise InputError(str(exc).strip("'\"")) from None
    names = list(report.differences)

    out.write("max |MNA - MONA| per observable\n")
    out.write("  dt        " + "  ".join(f"{n:>12}" for n in names) + "\n")
    for k, dt in enumerate(report.dts):
        out.write(f"  {dt:<8g}  " + "  ".join(f"{report.differences[n][k]:12.4e}" for n in names) + "\n")
    if report.order:
        out.write("  order     " + "  ".join(f"{report.order[n]:12.3f}" for n in names) + "\n")
    out.write("oscillation (alternation, amplitude, after-jump alternation)\n")
    osc_cols: Dict[str, list] = {"dt": [], "formulation": []}
    for k, dt in enumerate(report.dts):
        for code, formulation in enumerate((MNA, MONA)):
            rows = oscillation_rows(runs[formulation][k], names)
            osc_cols["dt"].append(dt)
            osc_cols["formulation"].append(code)
            for name, alt, amp, win, flagged in rows:
                mark = "  OSCILLATORY" if flagged else ""
                out.write(f"  dt={dt:<8g} {formulation:<4} {name:>8}: {alt:.3f}, {amp:.4e}, {win:.3f}{mark}\n")
                osc_cols.setdefault(f"alt_{name}", []).append(alt)
                osc_cols.setdefault(f"amp_{name}", []).append(amp)
                osc_cols.setdefault(f"win_{name}", []).append(win)
                osc_cols.setdefault(f"flag_{name}", []).append(float(flagged))

    if scenario.out:
        outdir = Path(scenario.out)
        outdir.mkdir(parents=True, exist_ok=True)
        orders = [f"order {n} = {report.order[n]:.17g}" for n in names if n in report.order]
        with (outdir / "comparison.csv").open("w", newline="") as fh:
            write_csv(fh, report.columns(), orders)
        with (outdir / "oscillation.csv").open("w", newline="") as fh:
            write_csv(fh, osc_cols, ["formulation code: 0 = MNA, 1 = MONA"])
        for formulation, trajs in runs.items():
            for traj in trajs:
                path = outdir / f"{formulation.lower()}_dt{traj.dt:g}.csv"
                with path.open("w", newline="") as fh:
                    write_trajectory(fh, traj, None)
        err.write(f"wrote {outdir}\n")
    return EXIT_OK


# ---------------------------------------------------------------- entry point

def _float_list(text: str) -> Tuple[float, ...]:
    try:
        return _CASTS["dt_list"](text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="mona", description="MNA/MONA circuit DAE analysis and simulation")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("analyze", help="check topological conditions and predict the index")
    p.add_argument("--netlist", required=True)

    def sim_flags(p, single: bool):
        p.add_argument("--netlist")
        p.add_argument("--scenario", help="key = value scenario file; flags override it")
        p.add_argument("--scheme", choices=("ie", "tr"), type=str.lower)
        p.add_argument("--t-end", dest="t_end", type=float)
        p.add_argument("--startup-ie-steps", dest="startup_ie_steps", type=int)
        p.add_argument("--out")
        p.add_argument("--consistent-init", dest="consistent_init", action="store_true", default=None,
                       help="solve for the purely algebraic unknowns at t0 before integrating")
        if single:
            p.add_argument("--formulation", choices=("mna", "mona", "both"), type=str.lower)
            p.add_argument("--dt", type=float)

    p = sub.add_parser("run", help="simulate and write CSV output")
    sim_flags(p, single=True)
    p = sub.add_parser("compare", help="compare MNA and MONA over a list of step sizes")
    sim_flags(p, single=False)
    p.add_argument("--dt-list", dest="dt_list", type=_float_list)
    p.add_argument("--observables", type=_CASTS["observables"])
    return parser


def main(argv: Sequence[str] | None = None, out: TextIO | None = None, err: TextIO | None = None) -> int:
    out = sys.stdout if out is None else out
    err = sys.stderr if err is None else err
    args = build_parser().parse_args(argv)
    try:
        if args.command == "analyze":
            return cmd_analyze(args, out)
        if args.command == "run":
            return cmd_run(args, out, err)
        return cmd_compare(args, out, err)
    except (InputError, NetlistError, ModelValidityError) as exc:
        err.write(f"error: {exc}\n")
        return EXIT_INPUT
    except OSError as exc:
        err.write(f"error: {exc}\n")
        return EXIT_INPUT


def main_entry() -> None:
    sys.exit(main())


if __name__ == "__main__":
    main_entry()
