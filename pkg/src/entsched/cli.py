"""Command line entry point: ``entsched <subcommand> ...``."""
from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import replace

import numpy as np

from . import rng as rngmod
from .config import Experiment, load_config
from .errors import ConfigError, LoadError
from .harness import (
    compare_strategies,
    paired_improvement,
    read_results_csv,
    results_csv,
    run_batch,
    run_episode,
    run_sweep,
    summarize,
    sweep_summary_json,
)
from .metrics import write_trajectory_csv
from .preinfo import generate_preinfo, load_preinfo, save_preinfo
from .schedulers import Strategy

log = logging.getLogger("entsched")


def _experiment(args) -> Experiment:
    return load_config(args.config) if getattr(args, "config", None) else Experiment()


def _write(text: str, path: str | None):
    if path in (None, "-"):
        sys.stdout.write(text)
    else:
        with open(path, "w", newline="") as fh:
            fh.write(text)


def _agent(path: str | None, kind: Strategy):
    from .agents import Agent

    if not kind.learned:
        return None
    if not path:
        raise ConfigError(f"strategy {kind.value} needs a checkpoint (--ckpt or [run] checkpoint)")
    agent = Agent.load(path)
    if agent.strategy is not kind:
        raise ConfigError(f"checkpoint {path} holds a {agent.variant} model, which serves {agent.strategy.value}, not {kind.value}")
    return agent


def cmd_gen_preinfo(args) -> int:
    exp = _experiment(args)
    n = args.n_qubits or exp.sim.n_qubits
    gen = replace(exp.gen, rng_seed=args.seed) if args.seed is not None else exp.gen
    save_preinfo(generate_preinfo(gen, n), args.out)
    return 0


def cmd_simulate(args) -> int:
    exp = _experiment(args)
    strat = replace(exp.strategy, kind=Strategy(args.strategy)) if args.strategy else exp.strategy
    agent = _agent(args.ckpt or exp.run.checkpoint, strat.kind)
    preinfo = load_preinfo(args.preinfo) if args.preinfo else None
    sim = exp.sim
    if preinfo is not None and preinfo.n_qubits != sim.n_qubits:
        sim = replace(sim, n_qubits=preinfo.n_qubits, max_workers=None)
    if args.trajectory:
        seed = args.seed if args.seed is not None else exp.run.base_seed
        pi = preinfo or generate_preinfo(replace(exp.gen, rng_seed=seed), sim.n_qubits)
        res, traj = run_episode(replace(sim, rng_seed=seed), pi, strat, agent, mixing_weight=exp.run.mixing_weight, sigma_fidelity=exp.gen.sigma_fidelity)
        write_trajectory_csv(traj, args.trajectory)
        _write(results_csv([res], with_time=not args.no_time), args.out)
        return 0
    n = args.episodes or exp.run.n_episodes
    results = run_batch(n, exp.run.base_seed, sim, exp.gen, strat, agent, preinfo=preinfo, mixing_weight=exp.run.mixing_weight)
    _write(results_csv(results, with_time=not args.no_time), args.out)
    return 0


def cmd_train(args) -> int:
    from .agents import build_model, save_checkpoint
    from .agents.train import env_factory, train

    exp = _experiment(args)
    model_cfg = exp.model
    if args.variant:
        model_cfg = replace(model_cfg, variant=args.variant)
    if model_cfg.variant == "fc" and model_cfg.fc_n_qubits is None:
        model_cfg = replace(model_cfg, fc_n_qubits=exp.sim.n_qubits)
    model = build_model(model_cfg.validate())
    tcfg = replace(exp.train, epochs=args.epochs) if args.epochs else exp.train

    def report(epoch, mean_mu, running, loss):
        if epoch % max(1, args.log_every) == 0 or epoch == tcfg.epochs - 1:
            log.info("epoch %d  mu %.3f  running %.3f  loss %.3e", epoch, mean_mu, running, loss)

    result = train(env_factory(exp.sim, exp.gen, tcfg.rng_seed), model, tcfg, log=report)
    save_checkpoint(model, args.out, extra={
        "n_qubits": exp.sim.n_qubits,
        "epochs": tcfg.epochs,
        "best_epoch": result.best_epoch,
        "best_running_mu": f"{result.best_running_mu:.6f}",
    })
    log.info("best running mu %.3f at epoch %d, %.1f s", result.best_running_mu, result.best_epoch, result.wall_time)
    return 0


def cmd_evaluate(args) -> int:
    from .agents import Agent

    exp = _experiment(args)
    agent = Agent.load(args.ckpt)
    sim = replace(exp.sim, n_qubits=args.n_qubits, max_workers=None) if args.n_qubits else exp.sim
    n = args.episodes or exp.run.n_episodes
    learned = run_batch(n, exp.run.base_seed, sim, exp.gen, replace(exp.strategy, kind=agent.strategy), agent, mixing_weight=exp.run.mixing_weight)
    base = run_batch(n, exp.run.base_seed, sim, exp.gen, replace(exp.strategy, kind=Strategy(args.baseline)))
    sa, sb = summarize(base), summarize(learned)
    delta, ratio = compare_strategies(sa, sb)
    report = {
        "baseline": args.baseline,
        "learned": agent.strategy.value,
        "baseline_mean_mu": sa.mean_mu,
        "baseline_two_sigma": sa.two_sigma_halfwidth,
        "learned_mean_mu": sb.mean_mu,
        "learned_two_sigma": sb.two_sigma_halfwidth,
        "delta_mu": delta,
        "two_pow_delta": ratio,
        "paired": paired_improvement(base, learned),
    }
    if args.out:
        _write(results_csv(base + learned, with_time=not args.no_time), args.out)
    print(json.dumps(report, indent=2, sort_keys=True))
    return 0


def cmd_sweep(args) -> int:
    exp = _experiment(args)
    sw = exp.sweep
    axis = args.axis or sw.axis
    values = [float(v) for v in args.values.split(",")] if args.values else list(sw.values)
    kinds = [Strategy(s) for s in (args.strategies.split(",") if args.strategies else sw.strategies)]
    strategies = [replace(exp.strategy, kind=k) for k in kinds]
    agents = {}
    ckpt = args.ckpt or exp.run.checkpoint
    for k in kinds:
        if k.learned:
            agents[k] = _agent(ckpt, k)
    n = args.episodes or exp.run.n_episodes
    rows = run_sweep(axis, values, strategies, exp.sim, exp.gen, n, exp.run.base_seed, agents, mixing_weight=exp.run.mixing_weight)
    results = [r for row in rows for r in row.results]
    # wall-clock time is left blank by default so that re-runs are byte-identical
    _write(results_csv(results, with_time=args.with_time), args.out)
    if args.summary:
        _write(sweep_summary_json(axis, rows) + "\n", args.summary)
    return 0


def _qmcs_params(exp: Experiment, i: int, j: int):
    """Node parameters for the pair (i, j): qubit i is node A, qubit j node B."""
    from .qmcs.hamiltonian import AtomCavityParams

    q = exp.qmcs
    if q.node_spread <= 0:
        return exp.atoms
    g = rngmod.stream(q.seed, rngmod.INIT, 7).normal(1.0, q.node_spread, q.n_qubits)
    g = np.clip(g, 0.05, None)
    return AtomCavityParams(replace(exp.atoms.A, g=exp.atoms.A.g * float(g[i])), replace(exp.atoms.B, g=exp.atoms.B.g * float(g[j])))


def _qmcs_pairs(exp: Experiment):
    q = exp.qmcs
    if q.pairs.strip() == "all":
        return [(i, j) for i in range(q.n_qubits) for j in range(i + 1, q.n_qubits)]
    out = []
    for token in q.pairs.split():
        try:
            a, b = (int(x) for x in token.split("-"))
        except ValueError:
            raise ConfigError(f"bad pair {token!r} in [qmcs] pairs; expected i-j") from None
        if not (0 <= a < q.n_qubits and 0 <= b < q.n_qubits) or a == b:
            raise ConfigError(f"pair {token!r} out of range for {q.n_qubits} qubits")
        out.append((min(a, b), max(a, b)))
    return out


def cmd_qmcs(args) -> int:
    from .qmcs.bk import qmcs_csv, run_bk

    exp = _experiment(args)
    bk = exp.bk
    if args.n_traj:
        bk = replace(bk, n_traj=args.n_traj, n_traj2=args.n_traj)
    results = {}
    for k, (i, j) in enumerate(_qmcs_pairs(exp)):
        cfg = replace(bk, seed=rngmod.derive_seed(bk.seed, rngmod.TRAJ, i, j))
        results[(i, j)] = run_bk(_qmcs_params(exp, i, j), cfg, log=lambda m: log.info("pair %d-%d: %s", i, j, m))
    _write(qmcs_csv(results), args.out)
    return 0


def cmd_stats(args) -> int:
    results = read_results_csv(args.results)
    groups: dict = {}
    for r in results:
        groups.setdefault((r.strategy, r.n_qubits, r.sigma_fidelity), []).append(r)
    out = []
    for (strategy, nq, sf), rs in sorted(groups.items(), key=lambda kv: (kv[0][1], kv[0][2], kv[0][0])):
        s = summarize(rs, bins=args.bins)
        out.append({"strategy": strategy, "n_qubits": nq, "sigma_f": sf, **s.to_dict()})
    _write(json.dumps(out, indent=2, sort_keys=True) + "\n", args.out)
    return 0


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("-v", "--verbose", action="store_true", help="log progress")
    p = argparse.ArgumentParser(prog="entsched", description="Entanglement scheduling simulator", parents=[common])
    sub = p.add_subparsers(dest="command", required=True)
    strategies = [s.value for s in Strategy]

    g = sub.add_parser("gen-preinfo", parents=[common], help="sample a pre-information file")
    g.add_argument("--config")
    g.add_argument("--n-qubits", type=int)
    g.add_argument("--seed", type=int)
    g.add_argument("--out", required=True)
    g.set_defaults(fn=cmd_gen_preinfo)

    s = sub.add_parser("simulate", parents=[common], help="run a batch of episodes")
    s.add_argument("--config")
    s.add_argument("--strategy", choices=strategies)
    s.add_argument("--ckpt")
    s.add_argument("--preinfo", help="fixed pre-information file for every episode")
    s.add_argument("--episodes", type=int)
    s.add_argument("--trajectory", help="run one episode and write its trajectory here")
    s.add_argument("--seed", type=int, help="episode seed for --trajectory")
    s.add_argument("--no-time", action="store_true", help="leave wall_time_s blank")
    s.add_argument("--out", default="-")
    s.set_defaults(fn=cmd_simulate)

    t = sub.add_parser("train", parents=[common], help="train a learned scheduler")
    t.add_argument("--config")
    t.add_argument("--variant", choices=["qupairs", "qubit", "fc"])
    t.add_argument("--epochs", type=int)
    t.add_argument("--log-every", type=int, default=50)
    t.add_argument("--out", required=True)
    t.set_defaults(fn=cmd_train)

    e = sub.add_parser("evaluate", parents=[common], help="paired comparison of a checkpoint against a baseline")
    e.add_argument("--config")
    e.add_argument("--ckpt", required=True)
    e.add_argument("--baseline", default="greedy", choices=["random", "mst", "greedy"])
    e.add_argument("--n-qubits", type=int)
    e.add_argument("--episodes", type=int)
    e.add_argument("--no-time", action="store_true")
    e.add_argument("--out")
    e.set_defaults(fn=cmd_evaluate)

    w = sub.add_parser("sweep", parents=[common], help="batches over a grid of sigma_fidelity or n_qubits")
    w.add_argument("--config")
    w.add_argument("--axis", choices=["sigma_fidelity", "n_qubits"])
    w.add_argument("--values", help="comma separated")
    w.add_argument("--strategies", help="comma separated")
    w.add_argument("--ckpt")
    w.add_argument("--episodes", type=int)
    w.add_argument("--with-time", action="store_true", help="record wall-clock times (breaks byte-identical re-runs)")
    w.add_argument("--summary")
    w.add_argument("--out", default="-")
    w.set_defaults(fn=cmd_sweep)

    q = sub.add_parser("qmcs", parents=[common], help="Barrett-Kok pre-information per qubit pair")
    q.add_argument("--config")
    q.add_argument("--n-traj", type=int, help="sets both n_traj and n_traj2")
    q.add_argument("--out", default="-")
    q.set_defaults(fn=cmd_qmcs)

    st = sub.add_parser("stats", parents=[common], help="summaries of a results CSV")
    st.add_argument("--results", required=True)
    st.add_argument("--bins", type=int, default=30)
    st.add_argument("--out", default="-")
    st.set_defaults(fn=cmd_stats)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    try:
        return args.fn(args)
    except (ConfigError, LoadError, ValueError, OSError) as exc:
        print(f"entsched: error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
