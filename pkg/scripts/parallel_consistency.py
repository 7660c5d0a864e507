"""Pipeline against sequential and inverted-serial runs of the trig case.

    python scripts/parallel_consistency.py --nx 32 --tau 1/256 --threads 2 4 8 16
"""

import argparse

import numpy as np

from biotpit.assembly import build_system
from biotpit.benchmarks import l2_error, trig_case
from biotpit.krylov import KrylovConfig
from biotpit.mesh import build_uniform_mesh
from biotpit.timeloop import TimeGrid, prepare, run_calibrated, run_inverted_serial, run_sequential


def main():
    ap = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("--nx", type=int, default=32)
    ap.add_argument("--tau", default="1/256")
    ap.add_argument("--threads", type=int, nargs="+", default=[2, 4, 8, 16])
    ap.add_argument("--tol", type=float, default=1e-7)
    args = ap.parse_args()

    case = trig_case()
    mesh = build_uniform_mesh(args.nx, args.nx)
    grid = TimeGrid.from_final_time("1", args.tau)
    prob = prepare(build_system(mesh, case, grid.tau), case, grid)
    cfg = KrylovConfig(tol=args.tol)
    p = prob.system.dofs.p

    def err(X):
        return l2_error(mesh, X[p], lambda x, y, t: case.exact(x, y, t)[2], grid.T)

    seq = run_sequential(prob, cfg)
    e_seq = err(seq.final)
    print(f"sequential  L2(p)={e_seq:.8f}  {seq.wall_seconds:.1f}s")
    for k in args.threads:
        pipe, attempts = run_calibrated(prob, cfg, k, min(16, grid.n_time))
        inv = run_inverted_serial(prob, pipe.schedule, cfg)
        print(
            f"threads={k:<3} n_iter={pipe.schedule.n_iter} L2(p)={err(pipe.final):.8f} "
            f"|dL2|={abs(err(pipe.final) - e_seq):.1e} "
            f"max|pipe-inv|={np.abs(pipe.solutions - inv.solutions).max():.1e} "
            f"attempts={attempts}"
        )


if __name__ == "__main__":
    main()
