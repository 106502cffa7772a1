"""Fidelity-spread and network-size sweeps for the baseline strategies.

    python scripts/sweeps.py --out-dir results/
"""
import argparse
from pathlib import Path

from entsched.env import SimConfig
from entsched.harness import results_csv, run_sweep, sweep_summary_json
from entsched.preinfo import GenParams
from entsched.schedulers import Strategy, StrategyConfig


def show(axis, rows):
    print(f"\n{axis:<16}{'strategy':<10}{'mean mu':>10}{'2 sigma':>10}")
    for r in rows:
        print(f"{r.value:<16g}{r.strategy:<10}{r.summary.mean_mu:>10.3f}{r.summary.two_sigma_halfwidth:>10.3f}")


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--episodes", type=int, default=100)
    ap.add_argument("--seed", type=int, default=99)
    ap.add_argument("--strategies", default="random,mst,greedy")
    ap.add_argument("--out-dir", type=Path)
    args = ap.parse_args()

    strats = [StrategyConfig(kind=Strategy(k)) for k in args.strategies.split(",")]
    sim = SimConfig(n_qubits=40, t_mem_steps=6000.0)
    jobs = [
        ("sigma_fidelity", [0.0, 0.03, 0.06, 0.09], GenParams()),
        ("n_qubits", [20, 40, 80], GenParams(sigma_fidelity=0.09)),
    ]
    for axis, values, gen in jobs:
        rows = run_sweep(axis, values, strats, sim, gen, args.episodes, args.seed)
        show(axis, rows)
        if args.out_dir:
            args.out_dir.mkdir(parents=True, exist_ok=True)
            everything = [res for r in rows for res in r.results]
            (args.out_dir / f"sweep_{axis}.csv").write_text(results_csv(everything, with_time=False))
            (args.out_dir / f"sweep_{axis}.json").write_text(sweep_summary_json(axis, rows))


if __name__ == "__main__":
    main()
