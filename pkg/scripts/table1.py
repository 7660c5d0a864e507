"""Spatial error table for the trigonometric case at t = 1.

    python scripts/table1.py --levels 16 32 64 [--tau 1/1024] [--load-rule gauss]
"""

import argparse
from dataclasses import replace

from biotpit.assembly import build_system
from biotpit.benchmarks import convergence_order, l2_error, trig_case
from biotpit.krylov import KrylovConfig
from biotpit.mesh import build_uniform_mesh
from biotpit.timeloop import TimeGrid, prepare, run_sequential

REFERENCE = {16: 0.02180138, 32: 0.00592069, 64: 0.00152259, 128: 0.00038509}


def main():
    ap = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("--levels", type=int, nargs="+", default=[16, 32, 64])
    ap.add_argument("--tau", default="1/1024")
    ap.add_argument("--load-rule", choices=("gauss", "vertex"), default="gauss")
    ap.add_argument("--no-stabilization", action="store_true")
    args = ap.parse_args()

    case = replace(trig_case(), stabilized=not args.no_stabilization, load_rule=args.load_rule)
    grid = TimeGrid.from_final_time("1", args.tau)
    rows = []
    print(f"{'h':>7} {'L2(p)':>12} {'reference':>12} {'rel':>8} {'its/step':>9}")
    for nx in args.levels:
        mesh = build_uniform_mesh(nx, nx)
        system = build_system(mesh, case, grid.tau)
        res = run_sequential(prepare(system, case, grid), KrylovConfig(tol=1e-7))
        err = l2_error(mesh, res.final[system.dofs.p], lambda x, y, t: case.exact(x, y, t)[2], grid.T)
        ref = REFERENCE.get(nx)
        rel = f"{err / ref - 1:+.1%}" if ref else ""
        print(f"{'1/' + str(nx):>7} {err:12.8f} {ref or float('nan'):12.8f} {rel:>8} {res.iterations.mean():9.2f}")
        rows.append((1 / nx, err))
    if len(rows) > 1:
        print(f"fitted order {convergence_order(rows):.3f}")


if __name__ == "__main__":
    main()
