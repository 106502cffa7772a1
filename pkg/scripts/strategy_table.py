"""Mean peak score per strategy on one network size, with 2-sigma bars.

    python scripts/strategy_table.py --n-qubits 40 --episodes 100 [--ckpt checkpoints/qupairs_q40.ckpt]
"""
import argparse

from entsched.agents import Agent
from entsched.env import SimConfig
from entsched.harness import compare_strategies, run_batch, summarize, write_results_csv
from entsched.preinfo import GenParams
from entsched.schedulers import Strategy, StrategyConfig


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--n-qubits", type=int, default=40)
    ap.add_argument("--sigma-f", type=float, default=0.09)
    ap.add_argument("--episodes", type=int, default=100)
    ap.add_argument("--seed", type=int, default=99)
    ap.add_argument("--t-mem", type=float, default=6000.0)
    ap.add_argument("--ckpt", help="adds the learned strategy stored in this checkpoint")
    ap.add_argument("--out", help="CSV of all episodes")
    args = ap.parse_args()

    sim = SimConfig(n_qubits=args.n_qubits, t_mem_steps=args.t_mem)
    gen = GenParams(sigma_fidelity=args.sigma_f)
    runs = [(StrategyConfig(kind=Strategy(k)), None) for k in ("random", "mst", "greedy")]
    if args.ckpt:
        agent = Agent.load(args.ckpt)
        runs.append((StrategyConfig(kind=agent.strategy), agent))
    everything, rows = [], []
    for strat, agent in runs:
        res = run_batch(args.episodes, args.seed, sim, gen, strat, agent)
        everything += res
        rows.append((strat.kind.value, summarize(res)))
    ref = rows[0][1]
    print(f"{'strategy':<20}{'mean mu':>10}{'2 sigma':>10}{'d vs random':>14}{'2^d':>8}")
    for name, s in rows:
        d, r = compare_strategies(ref, s)
        print(f"{name:<20}{s.mean_mu:>10.3f}{s.two_sigma_halfwidth:>10.3f}{d:>14.3f}{r:>8.2f}")
    if args.out:
        write_results_csv(everything, args.out, with_time=False)


if __name__ == "__main__":
    main()
