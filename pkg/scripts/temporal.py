"""Temporal error sweep for the trigonometric case.

The spatial error at the chosen mesh is a floor under the temporal error, so
the successive ratios drift towards 1 as tau shrinks; use --nx 128 for a
cleaner first-order picture (slow).

    python scripts/temporal.py --nx 64 --taus 1/2 1/4 1/8 1/16
"""

import argparse

from biotpit.assembly import build_system
from biotpit.benchmarks import convergence_order, l2_error, trig_case
from biotpit.krylov import KrylovConfig
from biotpit.mesh import build_uniform_mesh
from biotpit.timeloop import TimeGrid, prepare, run_sequential


def main():
    ap = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("--nx", type=int, default=64)
    ap.add_argument("--taus", nargs="+", default=["1/2", "1/4", "1/8", "1/16"])
    args = ap.parse_args()

    case = trig_case()
    mesh = build_uniform_mesh(args.nx, args.nx)
    errs = []
    for tau in args.taus:
        grid = TimeGrid.from_final_time("1", tau)
        system = build_system(mesh, case, grid.tau)
        res = run_sequential(prepare(system, case, grid), KrylovConfig(tol=1e-7))
        e = l2_error(mesh, res.final[system.dofs.p], lambda x, y, t: case.exact(x, y, t)[2], grid.T)
        ratio = f"{e / errs[-1][1]:.3f}" if errs else ""
        print(f"tau={tau:>6}  L2(p)={e:.8f}  ratio={ratio}")
        errs.append((grid.tau, e))
    print(f"fitted order {convergence_order(errs):.3f}")


if __name__ == "__main__":
    main()
