#!/usr/bin/env python3
"""Vehicle corridor experiment: train the dynamics net, report its
prediction-error bound, then run the closed-loop corridor episode.

Equivalent to `milp-safeguard train` followed by `milp-safeguard simulate`
with the trained net, but without retraining in between.
"""

import argparse
import math
import os
import sys

import numpy as np
import yaml

from milp_safeguard.cli import _train_from_block, load_scenario
from milp_safeguard.nn_model import save_network
from milp_safeguard.plants import VehiclePlant
from milp_safeguard.runtime import GOAL_REACHED, run_episode
from milp_safeguard.sets import Hypercube

DEFAULT_SCENARIO = os.path.join(os.path.dirname(__file__), os.pardir,
                                "scenarios", "vehicle_corridor.yaml")


def main() -> int:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--scenario", default=DEFAULT_SCENARIO)
    ap.add_argument("--out", default="vehicle_out")
    args = ap.parse_args()

    with open(args.scenario) as f:
        doc = yaml.safe_load(f)
    b = doc["bounds"]
    X = Hypercube(np.asarray(b["x_lo"], float), np.asarray(b["x_hi"], float))
    U = Hypercube(np.asarray(b["u_lo"], float), np.asarray(b["u_hi"], float))
    plant = VehiclePlant(wheelbase=float(doc["plant"]["l"]),
                         dt=float(doc["plant"]["dt"]))

    print("training ...")
    net, eps, mse = _train_from_block(doc["network"], X, U, plant)
    print("eps_x:", " ".join(f"{v:.5f}" for v in eps),
          f"({math.degrees(eps[2]):.2f} deg)")
    print(f"final mse: {mse:.3e}")

    os.makedirs(args.out, exist_ok=True)
    net_path = os.path.join(args.out, "net.json")
    save_network(net, net_path)
    doc["network"] = {"kind": "file", "path": os.path.abspath(net_path)}
    scen_path = os.path.join(args.out, "scenario.yaml")
    with open(scen_path, "w") as f:
        yaml.safe_dump(doc, f)

    scenario, _ = load_scenario(scen_path)
    print("planning and running episode ...")
    log = run_episode(scenario)
    bad = log.safety_violations(scenario.unsafe)
    ms = [st.solve_ms for st in log.steps if st.status == "Optimal"]
    print(f"status: {log.status}  steps: {len(log.steps)}  "
          f"violations: {len(bad)}  "
          f"median solve: {float(np.median(ms)):.1f} ms")
    log.to_csv(os.path.join(args.out, "trajectory.csv"))
    return 0 if log.status == GOAL_REACHED and not bad else 1


if __name__ == "__main__":
    sys.exit(main())
