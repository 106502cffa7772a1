"""Paired comparison of a trained checkpoint against the greedy baseline.

    python scripts/evaluate_learned.py checkpoints/qupairs_q20.ckpt --n-qubits 20
"""
import argparse

from entsched.agents import Agent
from entsched.env import SimConfig
from entsched.harness import paired_improvement, run_batch, summarize
from entsched.preinfo import GenParams
from entsched.schedulers import Strategy, StrategyConfig


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("ckpt")
    ap.add_argument("--n-qubits", type=int, default=20)
    ap.add_argument("--sigma-f", type=float, default=0.09)
    ap.add_argument("--episodes", type=int, default=100)
    ap.add_argument("--seed", type=int, default=99)
    ap.add_argument("--mixing-weight", type=float, default=0.1)
    args = ap.parse_args()

    agent = Agent.load(args.ckpt)
    sim = SimConfig(n_qubits=args.n_qubits, t_mem_steps=6000.0)
    gen = GenParams(sigma_fidelity=args.sigma_f)
    base = run_batch(args.episodes, args.seed, sim, gen, StrategyConfig(kind=Strategy.GREEDY))
    new = run_batch(args.episodes, args.seed, sim, gen, StrategyConfig(kind=agent.strategy), agent, mixing_weight=args.mixing_weight)
    out = paired_improvement(base, new)
    print(f"greedy       {summarize(base).mean_mu:.3f}")
    print(f"{agent.strategy.value:<12} {summarize(new).mean_mu:.3f}")
    print(f"delta {out['delta_mu']:+.3f}  2^delta {2 ** out['delta_mu']:.3f}  t {out['t']:.2f}  one-sided p {out['p_value']:.3g}")


if __name__ == "__main__":
    main()
