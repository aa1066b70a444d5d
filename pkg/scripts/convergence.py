"""Step-size studies on the CV-loop circuit.

* MNA versus MONA node potentials under tau-halving (cross-formulation order);
* each formulation against a tau/16 reference of itself (scheme order);
* the per-step energy balance residual of MONA under the trapezoidal rule.
"""

import argparse
import warnings

import numpy as np

import mona
from mona.diagnostics import compare_trajectories, convergence_order, energy_balance
from mona.solver import IntegratorConfig, simulate


def runs(formulation, scheme, dts, t_end):
    dae = mona.build("example1_cvloop", formulation)
    return [simulate(dae, IntegratorConfig(scheme, dt, t_end)) for dt in dts]


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--dt-list", default="0.1,0.05,0.025,0.0125")
    parser.add_argument("--t-end", type=float, default=10.0)
    args = parser.parse_args()
    dts = [float(v) for v in args.dt_list.split(",")]
    warnings.simplefilter("ignore")

    mna, mo = runs("MNA", "tr", dts, args.t_end), runs("MONA", "tr", dts, args.t_end)
    rep = compare_trajectories(mna, mo, ["e_1", "e_2", "e_3"])
    print("MNA vs MONA (TR):")
    for name, vals in rep.differences.items():
        print(f"  {name}: " + ", ".join(f"{v:.2e}" for v in vals) + f"  order {rep.order[name]:.2f}")

    for scheme in ("ie", "tr"):
        for formulation in ("MNA", "MONA"):
            ref = runs(formulation, scheme, [dts[-1] / 16], args.t_end)[0]
            stride = [round(dt / ref.dt) for dt in dts]
            errs = []
            for dt, traj, s in zip(dts, runs(formulation, scheme, dts, args.t_end), stride):
                e = traj.xdot if formulation == "MONA" else traj.x
                r = ref.xdot if formulation == "MONA" else ref.x
                errs.append(np.max(np.abs(e[:, :3] - r[::s, :3])))
            print(f"{formulation:4} {scheme}: potential error vs fine reference "
                  + ", ".join(f"{v:.2e}" for v in errs) + f"  order {convergence_order(dts, errs):.2f}")

    peaks = [np.max(np.abs(energy_balance(t).residual)) for t in mo]
    print("MONA TR energy balance residual: " + ", ".join(f"{p:.3e}" for p in peaks)
          + "  halving factors " + ", ".join(f"{a / b:.2f}" for a, b in zip(peaks, peaks[1:])))


if __name__ == "__main__":
    main()
