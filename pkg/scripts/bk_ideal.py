"""Barrett-Kok heralding in the ideal limit, optionally for several pulse widths.

    python scripts/bk_ideal.py --n-traj 2000 --tau 0.03 0.1
"""
import argparse
import time

from entsched.qmcs.bk import BKConfig, run_bk
from entsched.qmcs.hamiltonian import AtomCavityParams


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--n-traj", type=int, default=2000)
    ap.add_argument("--tau", type=float, nargs="+", default=[0.03])
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()

    params = AtomCavityParams.symmetric().ideal()
    for tau in args.tau:
        t0 = time.perf_counter()
        r = run_bk(params, BKConfig(n_traj=args.n_traj, n_traj2=args.n_traj, tau=tau, seed=args.seed), log=print)
        fids = " ".join(f"{f:.4f}" for f in r.branch_fidelities)
        rates = " ".join(f"{p:.4f}" for p in r.branch_rates)
        print(f"tau {tau}: F [{fids}]  rates [{rates}]  total {r.total_rate:.4f}  "
              f"chosen {r.chosen_branch} (F {r.chosen_fidelity:.4f})  {time.perf_counter() - t0:.0f} s")


if __name__ == "__main__":
    main()
