"""Mandel problem with both preconditioners; prints iteration counts and the probe history.

    python scripts/mandel.py --nx 64 [--csv out.csv]
"""

import argparse
import csv

import numpy as np

from biotpit.assembly import build_system
from biotpit.benchmarks import mandel_case, mandel_cryer_indicator
from biotpit.krylov import KrylovConfig
from biotpit.mesh import build_uniform_mesh
from biotpit.timeloop import TimeGrid, prepare, run_sequential


def main():
    ap = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("--nx", type=int, default=64)
    ap.add_argument("--tau", default="0.1")
    ap.add_argument("--T", default="10")
    ap.add_argument("--csv", help="write the probe pressure history here")
    args = ap.parse_args()

    case = mandel_case()
    mesh = build_uniform_mesh(args.nx, args.nx, case.domain)
    grid = TimeGrid.from_final_time(args.T, args.tau)
    system = build_system(mesh, case, grid.tau)
    node = mesh.node_at(*case.extras["probe"])
    hist = {}
    for kind in ("p1", "p2"):
        res = run_sequential(prepare(system, case, grid, kind), KrylovConfig(tol=1e-7))
        its = res.iterations
        print(f"{kind}: mean {its.mean():.2f} min {its.min()} max {its.max()} iterations, max residual {res.max_residual():.1e}")
        hist[kind] = res.solutions[:, system.dofs.p[node]]
    ind = mandel_cryer_indicator(grid.times(), hist["p1"])
    print(f"probe {case.extras['probe']}: p0={ind.initial_value:.6f} peak={ind.peak_value:.6f} at t={ind.peak_time:g} present={ind.present}")
    if args.csv:
        with open(args.csv, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["t", "p_p1", "p_p2"])
            w.writerows(np.column_stack([grid.times(), hist["p1"], hist["p2"]]))


if __name__ == "__main__":
    main()
