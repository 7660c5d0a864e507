"""Wall-clock speedup of the pipeline engine over thread counts, with the E1*E2 model.

    python scripts/speedup.py --case trig --nx 64 --tau 1/256 --threads 1 2 4 8 --out speedup.csv
"""

import argparse

from biotpit.cli import RunConfig, run
from biotpit.reporting import emit_csv, format_table, speedup_table


def main():
    ap = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("--case", default="trig")
    ap.add_argument("--nx", type=int, default=64)
    ap.add_argument("--tau", default="1/256")
    ap.add_argument("--T", default=None)
    ap.add_argument("--precond", default="p1")
    ap.add_argument("--threads", type=int, nargs="+", default=[1, 2, 4, 8])
    ap.add_argument("--n-iter", type=int, default=None, help="per-visit budget at the largest thread count")
    ap.add_argument("--out", default="speedup.csv")
    args = ap.parse_args()

    records = []
    top = max(args.threads)
    for k in sorted(args.threads):
        # keep N_iter fixed across thread counts when a budget is given
        n_iter = None if args.n_iter is None else args.n_iter * top // k
        cfg = RunConfig(
            case=args.case, nx=args.nx, tau=args.tau, T=args.T, engine="pipeline", precond=args.precond,
            threads=k, n_iter=n_iter, efficiency=True, output=f"{args.out}.t{k}.csv",
        )
        _, recs = run(cfg)
        records.extend(recs)
    emit_csv(records, args.out)
    print(format_table(speedup_table(records)))
    print(f"wrote {args.out}")


if __name__ == "__main__":
    main()
