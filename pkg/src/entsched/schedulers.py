"""Rule-based action matrices and the shared threshold scheduler.

An action matrix is a symmetric ``n x n`` float array of per-pair costs.
Pairs that can never be chosen in the current state carry ``MASKED``
(``inf``): the diagonal, established links and, unless the environment allows
them, pairs already inside the same cluster.
"""
from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

import numpy as np

from .env import IDLE, Action, DisjointSet, EnvState
from .errors import ConfigError
from .metrics import expected_error_matrix

MASKED = np.inf


class Strategy(str, Enum):
    RANDOM = "random"
    MST = "mst"
    GREEDY = "greedy"
    FC = "fc"
    TRANSFORMER = "transformer"
    TRANSFORMER_QUBIT = "transformer-qubit"

    @property
    def learned(self) -> bool:
        return self in (Strategy.FC, Strategy.TRANSFORMER, Strategy.TRANSFORMER_QUBIT)


@dataclass
class StrategyConfig:
    kind: Strategy = Strategy.GREEDY
    action_threshold: float = 0.02
    # What the scheduler does when no assignable pair passes the threshold.
    # "vacuous": if no unmasked entry anywhere is below it, the threshold
    # carries no information and is ignored.  "fallback": ignore it only when
    # no worker is active (otherwise the episode would stall).  "strict":
    # always idle.
    stall_policy: str = "vacuous"

    def __post_init__(self):
        self.kind = Strategy(self.kind)

    def validate(self):
        if not self.action_threshold > 0:
            raise ConfigError(f"action_threshold must be positive, got {self.action_threshold}")
        if self.stall_policy not in ("fallback", "vacuous", "strict"):
            raise ConfigError(f"unknown stall_policy {self.stall_policy!r}")
        return self


def _masked(base: np.ndarray, state: EnvState) -> np.ndarray:
    out = np.array(base, dtype=float, copy=True)
    out[state.structural_mask()] = MASKED
    return out


def random_matrix(state: EnvState, rng: np.random.Generator, threshold: float = 0.02) -> np.ndarray:
    """i.i.d. uniform costs in ``[0, threshold)`` so no legal pair is filtered."""
    n = state.n_qubits
    iu = np.triu_indices(n, k=1)
    m = np.zeros((n, n))
    m[iu] = rng.uniform(0.0, threshold, size=len(iu[0]))
    m = m + m.T
    return _masked(m, state)


def greedy_matrix(state: EnvState, preinfo, t_mem_steps: float) -> np.ndarray:
    return _masked(expected_error_matrix(preinfo.fidelity, preinfo.success_prob, t_mem_steps), state)


def mst_plan(preinfo, t_mem_steps: float) -> list[tuple[int, int, float]]:
    """Kruskal on the complete graph of expected link errors.

    Returns the ``n - 1`` tree edges as ``(i, j, weight)`` in ascending
    weight order, ties broken by ``(i, j)``."""
    n = preinfo.n_qubits
    if n < 2:
        raise ConfigError("need at least 2 qubits for a spanning tree")
    w = expected_error_matrix(preinfo.fidelity, preinfo.success_prob, t_mem_steps)
    iu, ju = np.triu_indices(n, k=1)
    weights = w[iu, ju]
    order = np.lexsort((ju, iu, weights))
    dsu = DisjointSet(n)
    plan = []
    for k in order:
        i, j = int(iu[k]), int(ju[k])
        if not dsu.same(i, j):
            dsu.union(i, j)
            plan.append((i, j, float(weights[k])))
            if len(plan) == n - 1:
                break
    return plan


def mst_matrix(plan, state: EnvState) -> np.ndarray:
    """Only not-yet-established tree edges are finite."""
    n = state.n_qubits
    m = np.full((n, n), MASKED)
    for i, j, wt in plan:
        if not state.established[i, j]:
            m[i, j] = m[j, i] = wt
    return m


def candidate_pairs(matrix: np.ndarray, state: EnvState, threshold: float | None):
    """Assignable upper-triangle pairs sorted by ``(cost, i, j)``."""
    n = state.n_qubits
    if matrix.shape != (n, n):
        raise ConfigError(f"action matrix is {matrix.shape}, state has {n} qubits")
    idle = state.idle_mask()
    iu, ju = np.triu_indices(n, k=1)
    cost = matrix[iu, ju]
    ok = np.isfinite(cost) & idle[iu] & idle[ju]
    ok &= ~state.structural_mask()[iu, ju]
    if threshold is not None:
        ok &= cost < threshold
    iu, ju, cost = iu[ok], ju[ok], cost[ok]
    order = np.lexsort((ju, iu, cost))
    return iu[order], ju[order], cost[order]


def select_actions(matrix: np.ndarray, state: EnvState, config: StrategyConfig, *, use_threshold: bool = True) -> list[Action]:
    """Sequential minimum-cost selection under the idle threshold.

    Repeatedly takes the cheapest pair below ``action_threshold`` whose qubits
    are both idle and not yet chosen, until none is left or the workers are
    full.  Unused worker capacity is returned as idle actions."""
    capacity = state.config.max_workers - len(state.workers)
    if capacity <= 0:
        return []
    iu, ju, _ = candidate_pairs(matrix, state, config.action_threshold if use_threshold else None)
    used = np.zeros(state.n_qubits, dtype=bool)
    actions = []
    for i, j in zip(iu.tolist(), ju.tolist()):
        if used[i] or used[j]:
            continue
        actions.append(Action((i, j)))
        used[i] = used[j] = True
        if len(actions) == capacity:
            break
    actions.extend([IDLE] * (capacity - len(actions)))
    return actions


def pairs_of(actions) -> list[tuple[int, int]]:
    return [a.pair for a in actions if not a.is_idle]
