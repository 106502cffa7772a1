"""Episode orchestration, batches, sweeps and summary statistics."""
from __future__ import annotations

import csv
import io
import json
import math
import os
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from typing import Callable, Sequence

import numpy as np

from . import rng as rngmod
from .env import EnvState, SimConfig
from .errors import ConfigError
from .metrics import TrajectoryPoint, peak_mu, trajectory_point
from .preinfo import GenParams, PreInfo, generate_preinfo
from .schedulers import (
    Strategy,
    StrategyConfig,
    greedy_matrix,
    mst_matrix,
    mst_plan,
    random_matrix,
    select_actions,
)

RESULTS_HEADER = ["seed", "strategy", "n_qubits", "sigma_f", "mu_peak", "step_at_peak", "n_max_final", "wall_time_s"]


@dataclass
class EpisodeResult:
    seed: int
    strategy: str
    n_qubits: int
    sigma_fidelity: float
    mu_peak: float
    step_at_peak: int
    n_max_final: int
    wall_time: float
    truncated: bool = False
    stalled: bool = False

    def row(self, with_time: bool = True) -> list:
        return [
            self.seed,
            self.strategy,
            self.n_qubits,
            repr(float(self.sigma_fidelity)),
            repr(float(self.mu_peak)),
            self.step_at_peak,
            self.n_max_final,
            f"{self.wall_time:.6f}" if with_time else "",
        ]


class Scheduler:
    """Builds the action matrix for a state according to a strategy."""

    def __init__(self, strategy: StrategyConfig, preinfo: PreInfo, t_mem_steps: float, seed: int, agent=None, mixing_weight: float = 0.1):
        self.strategy = strategy.validate()
        self.preinfo = preinfo
        self.t_mem_steps = t_mem_steps
        self.agent = agent
        self.mixing_weight = mixing_weight
        self.rng = rngmod.stream(seed, rngmod.STRATEGY)
        self._plan = mst_plan(preinfo, t_mem_steps) if strategy.kind is Strategy.MST else None
        if strategy.kind.learned and agent is None:
            raise ConfigError(f"strategy {strategy.kind.value} needs a model")

    def matrix(self, state: EnvState) -> np.ndarray:
        kind = self.strategy.kind
        if kind is Strategy.RANDOM:
            return random_matrix(state, self.rng, self.strategy.action_threshold)
        if kind is Strategy.GREEDY:
            return greedy_matrix(state, self.preinfo, self.t_mem_steps)
        if kind is Strategy.MST:
            return mst_matrix(self._plan, state)
        return self.agent.action_matrix(state, self.preinfo, self.t_mem_steps, self.mixing_weight)

    def schedule(self, state: EnvState) -> list:
        """Assign workers until scheduling is complete; returns assigned pairs."""
        if self.strategy.kind is Strategy.TRANSFORMER_QUBIT:
            return self._schedule_qubit_level(state)
        if len(state.workers) >= state.config.max_workers:
            return []
        # one sequential pass exhausts every assignable pair, so f1 holds after it
        matrix = self.matrix(state)
        pairs = [a for a in select_actions(matrix, state, self.strategy) if not a.is_idle]
        if not pairs and self._lift_threshold(matrix, state):
            pairs = [a for a in select_actions(matrix, state, self.strategy, use_threshold=False) if not a.is_idle]
        state.assign_actions(pairs)
        return [a.pair for a in pairs]

    def _lift_threshold(self, matrix, state) -> bool:
        policy = self.strategy.stall_policy
        if policy == "fallback":
            return not state.workers
        if policy == "vacuous":
            finite = matrix[np.isfinite(matrix)]
            return not (finite < self.strategy.action_threshold).any()
        return False

    def _schedule_qubit_level(self, state):
        from .agents.qubit import qubit_level_select

        thr = self.strategy.action_threshold
        assigned = []
        while len(state.workers) < state.config.max_workers:
            action = qubit_level_select(self.agent, state, self.preinfo, self.t_mem_steps, thr, self.mixing_weight)
            if action.is_idle and self._lift_threshold(greedy_matrix(state, self.preinfo, self.t_mem_steps), state):
                action = qubit_level_select(self.agent, state, self.preinfo, self.t_mem_steps, None, self.mixing_weight)
            if action.is_idle:
                break
            state.assign_actions([action])
            assigned.append(action.pair)
        return assigned


def run_episode(
    config: SimConfig,
    preinfo: PreInfo,
    strategy: StrategyConfig,
    agent=None,
    *,
    mixing_weight: float = 0.1,
    sigma_fidelity: float = float("nan"),
    on_schedule: Callable | None = None,
    on_step: Callable | None = None,
) -> tuple[EpisodeResult, list[TrajectoryPoint]]:
    """Run one scheduling episode to termination.

    Scheduling happens at step 0 and after every step that established a
    link, provided at least two qubits are idle.  The episode ends when the
    largest cluster exceeds ``stop_fraction * n_qubits``, at ``max_steps``
    (truncated), or when no worker is active and nothing can be scheduled
    (stalled; the score can only decay from there).

    ``on_schedule(state)`` is called before every scheduling round and
    ``on_step(state, point)`` after every recorded trajectory point.
    """
    t0 = time.perf_counter()
    state = EnvState(config, preinfo)
    sched = Scheduler(strategy, preinfo, config.t_mem_steps, config.rng_seed, agent, mixing_weight)
    t_mem = config.t_mem_steps
    traj = [trajectory_point(state, preinfo, t_mem)]
    if on_step is not None:
        on_step(state, traj[0])
    stalled = False

    def schedule():
        if on_schedule is not None:
            on_schedule(state)
        return sched.schedule(state)

    schedule()
    while not state.is_terminal():
        if not state.workers:
            stalled = True
            break
        entries = state.advance()
        traj.append(trajectory_point(state, preinfo, t_mem))
        if on_step is not None:
            on_step(state, traj[-1])
        if entries and not state.is_terminal() and int((~state.busy).sum()) >= 2:
            schedule()
    truncated = (not stalled) and state.n_max <= config.stop_fraction * config.n_qubits
    mu_star, step_star = peak_mu(traj)
    result = EpisodeResult(
        seed=config.rng_seed,
        strategy=strategy.kind.value,
        n_qubits=config.n_qubits,
        sigma_fidelity=sigma_fidelity,
        mu_peak=mu_star,
        step_at_peak=step_star,
        n_max_final=state.n_max,
        wall_time=time.perf_counter() - t0,
        truncated=truncated,
        stalled=stalled,
    )
    return result, traj


# --- batches -------------------------------------------------------------

def episode_seed(base_seed: int, index: int) -> int:
    return rngmod.derive_seed(base_seed, rngmod.EPISODE, index)


def _threads() -> int:
    raw = os.environ.get("ENTSCHED_THREADS", "1")
    try:
        return max(1, int(raw))
    except ValueError:
        raise ConfigError(f"ENTSCHED_THREADS must be an integer, got {raw!r}") from None


def run_batch(
    n_episodes: int,
    base_seed: int,
    sim: SimConfig,
    gen: GenParams,
    strategy: StrategyConfig,
    agent=None,
    *,
    preinfo: PreInfo | None = None,
    mixing_weight: float = 0.1,
    threads: int | None = None,
) -> list[EpisodeResult]:
    """Run ``n_episodes`` independent episodes.

    Episode ``k`` draws its pre-information (unless ``preinfo`` is fixed) and
    its environment randomness from ``episode_seed(base_seed, k)``, so two
    batches with the same base seed see the same systems and the same
    per-pair coin flips whatever the strategy.  Results come back in episode
    order regardless of ``threads``.
    """
    if n_episodes < 1:
        raise ConfigError("n_episodes must be >= 1")

    def one(k: int) -> EpisodeResult:
        seed = episode_seed(base_seed, k)
        pi = preinfo if preinfo is not None else generate_preinfo(replace(gen, rng_seed=seed), sim.n_qubits)
        cfg = replace(sim, rng_seed=seed)
        res, _ = run_episode(cfg, pi, strategy, agent, mixing_weight=mixing_weight, sigma_fidelity=gen.sigma_fidelity)
        return res

    workers = threads if threads is not None else _threads()
    if workers <= 1:
        return [one(k) for k in range(n_episodes)]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(one, range(n_episodes)))


# --- statistics ----------------------------------------------------------

@dataclass
class StatsSummary:
    n: int
    mean_mu: float
    std_mu: float  # sample standard deviation (ddof=1)
    sigma_mu: float  # standard error of the mean
    two_sigma_halfwidth: float
    bin_edges: list
    counts: list
    cdf: list
    gaussian_fit: tuple
    degenerate: bool = False

    def to_dict(self) -> dict:
        d = asdict(self)
        d["gaussian_fit"] = list(self.gaussian_fit)
        return d


def summarize(results: Sequence, hist_max: float | None = None, bins: int = 30) -> StatsSummary:
    """Mean, spread, histogram with CDF and a moment-matched Gaussian.

    ``results`` may hold :class:`EpisodeResult` objects or plain numbers.
    The histogram has ``bins`` fixed-width bins on ``[0, hist_max]``
    (default ``0.75 * n_qubits``); values beyond the range land in the edge
    bins.  ``sigma_mu`` is the standard error of the mean, so
    ``two_sigma_halfwidth`` is the half-width of a 2-sigma interval for the
    mean."""
    vals = np.array([r.mu_peak if isinstance(r, EpisodeResult) else float(r) for r in results], dtype=float)
    if len(vals) < 2:
        raise ConfigError(f"need at least 2 results to summarize, got {len(vals)}")
    if hist_max is None:
        nq = [r.n_qubits for r in results if isinstance(r, EpisodeResult)]
        hist_max = 0.75 * max(nq) if nq else float(vals.max())
    if not hist_max > 0:
        hist_max = 1.0
    mean = float(vals.mean())
    std = float(vals.std(ddof=1))
    se = std / math.sqrt(len(vals))
    edges = np.linspace(0.0, hist_max, bins + 1)
    idx = np.clip(np.searchsorted(edges, vals, side="right") - 1, 0, bins - 1)
    counts = np.bincount(idx, minlength=bins)
    cdf = np.cumsum(counts) / len(vals)
    return StatsSummary(
        n=len(vals),
        mean_mu=mean,
        std_mu=std,
        sigma_mu=se,
        two_sigma_halfwidth=2.0 * se,
        bin_edges=edges.tolist(),
        counts=counts.tolist(),
        cdf=cdf.tolist(),
        gaussian_fit=(mean, std),
        degenerate=std == 0.0,
    )


def compare_strategies(a: StatsSummary, b: StatsSummary) -> tuple[float, float]:
    """``(mean_b - mean_a, 2 ** (mean_b - mean_a))``."""
    delta = b.mean_mu - a.mean_mu
    return delta, 2.0 ** delta


def paired_improvement(base: Sequence[EpisodeResult], new: Sequence[EpisodeResult]) -> dict:
    """One-sided paired t-test that ``new`` beats ``base`` episode by episode."""
    from scipy import stats

    if len(base) != len(new):
        raise ConfigError("paired batches must have equal length")
    for x, y in zip(base, new):
        if x.seed != y.seed:
            raise ConfigError(f"episode seeds differ ({x.seed} vs {y.seed}); batches are not paired")
    d = np.array([y.mu_peak - x.mu_peak for x, y in zip(base, new)])
    if np.all(d == d[0]):
        p = 0.0 if d[0] > 0 else 1.0
        t = math.inf if d[0] > 0 else (-math.inf if d[0] < 0 else 0.0)
    else:
        t, p = stats.ttest_1samp(d, 0.0, alternative="greater")
    return {"delta_mu": float(d.mean()), "t": float(t), "p_value": float(p), "n": len(d)}


# --- sweeps and persistence -----------------------------------------------

@dataclass
class SweepRow:
    value: float
    strategy: str
    summary: StatsSummary
    results: list = field(repr=False, default_factory=list)


SWEEP_AXES = ("sigma_fidelity", "n_qubits")


def run_sweep(
    axis: str,
    values: Sequence,
    strategies: Sequence[StrategyConfig],
    sim: SimConfig,
    gen: GenParams,
    n_episodes: int,
    base_seed: int,
    agents: dict | None = None,
    *,
    mixing_weight: float = 0.1,
    threads: int | None = None,
) -> list[SweepRow]:
    """Cross product of sweep values and strategies, one batch each.

    Learned strategies take their model from ``agents[kind]``; in an
    ``n_qubits`` sweep the same model serves every size.  The FC network has
    a fixed input width, so it cannot take part in an ``n_qubits`` sweep."""
    if axis not in SWEEP_AXES:
        raise ConfigError(f"sweep axis must be one of {SWEEP_AXES}, got {axis!r}")
    if not values:
        raise ConfigError("sweep needs at least one value")
    agents = agents or {}
    if axis == "n_qubits" and any(s.kind is Strategy.FC for s in strategies) and len(set(values)) > 1:
        raise ConfigError("the fc strategy has a fixed input size and cannot be transferred across n_qubits")
    rows = []
    for v in values:
        if axis == "sigma_fidelity":
            s_cfg, g_cfg = sim, replace(gen, sigma_fidelity=float(v))
        else:
            s_cfg, g_cfg = replace(sim, n_qubits=int(v), max_workers=int(v) // 2), gen
        for strat in strategies:
            agent = agents.get(strat.kind) if strat.kind.learned else None
            res = run_batch(n_episodes, base_seed, s_cfg, g_cfg, strat, agent, mixing_weight=mixing_weight, threads=threads)
            rows.append(SweepRow(float(v), strat.kind.value, summarize(res), res))
    return rows


def results_csv(results: Sequence[EpisodeResult], with_time: bool = True) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(RESULTS_HEADER)
    for r in results:
        w.writerow(r.row(with_time))
    return buf.getvalue()


def write_results_csv(results: Sequence[EpisodeResult], path, with_time: bool = True) -> None:
    with open(path, "w", newline="") as fh:
        fh.write(results_csv(results, with_time))


def read_results_csv(path) -> list[EpisodeResult]:
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    out = []
    for r in rows:
        out.append(EpisodeResult(
            seed=int(r["seed"]),
            strategy=r["strategy"],
            n_qubits=int(r["n_qubits"]),
            sigma_fidelity=float(r["sigma_f"]),
            mu_peak=float(r["mu_peak"]),
            step_at_peak=int(r["step_at_peak"]),
            n_max_final=int(r["n_max_final"]),
            wall_time=float(r["wall_time_s"]) if r["wall_time_s"] else float("nan"),
        ))
    return out


def sweep_summary_json(axis: str, rows: Sequence[SweepRow]) -> str:
    payload = [{"axis": axis, "value": r.value, "strategy": r.strategy, **r.summary.to_dict()} for r in rows]
    return json.dumps(payload, indent=2, sort_keys=True)
