"""Barry-Mercer point source with and without stabilization, sequential vs pipeline.

    python scripts/barry_mercer.py --nx 64 --threads 16 --K 1e-6 --T 1e-4
"""

import argparse

from biotpit.assembly import build_system
from biotpit.benchmarks import barry_mercer_case, l2_error
from biotpit.krylov import KrylovConfig
from biotpit.mesh import build_uniform_mesh
from biotpit.timeloop import SweepSchedule, TimeGrid, prepare, run_calibrated, run_pipeline_parallel, run_sequential


def main():
    ap = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("--nx", type=int, default=64)
    ap.add_argument("--threads", type=int, default=16)
    ap.add_argument("--K", type=float, default=1e-6)
    ap.add_argument("--T", default="1e-4")
    ap.add_argument("--n-time", type=int, default=16)
    ap.add_argument("--tol", type=float, default=1e-7)
    args = ap.parse_args()

    mesh = build_uniform_mesh(args.nx, args.nx)
    grid = TimeGrid.from_final_time(args.T, f"{args.T}/{args.n_time}")
    zero = lambda x, y: 0 * x  # noqa: E731
    for stab in (True, False):
        case = barry_mercer_case(K=args.K, stabilized=stab)
        prob = prepare(build_system(mesh, case, grid.tau), case, grid)
        p = prob.system.dofs.p
        if stab:
            cfg = KrylovConfig(tol=args.tol)
            seq = run_sequential(prob, cfg)
            pipe, _ = run_calibrated(prob, cfg, args.threads, grid.n_time)
        else:
            cfg = KrylovConfig(tol=args.tol, max_iters=160)
            seq = run_sequential(prob, cfg, strict=False)
            pipe = run_pipeline_parallel(prob, SweepSchedule(10, args.threads), cfg)
        diff = l2_error(mesh, seq.final[p] - pipe.final[p], zero)
        print(
            f"stabilized={stab!s:<5} |p_seq|={l2_error(mesh, seq.final[p], zero):.3e} "
            f"|p_seq - p_pipe|={diff:.3e} seq residual={seq.max_residual():.1e} pipe residual={pipe.max_residual():.1e}"
        )


if __name__ == "__main__":
    main()
