"""Two-pass pair selection with the qubit-level model."""
from __future__ import annotations

import numpy as np

from ..env import IDLE, Action
from ..metrics import expected_error_matrix
from .encoding import encode_qubits


def qubit_level_select(agent, state, preinfo, t_mem_steps: float, threshold: float | None, mixing_weight: float = 0.1) -> Action:
    """Pick one pair: the first pass scores qubits and fixes ``i``, the
    second pass (with ``i`` marked) scores partners ``j``.

    A qubit's first-pass cost is its cheapest legal expected error plus
    ``mixing_weight`` times its score; a partner's cost is the pair's expected
    error plus ``mixing_weight`` times its second-pass score.  Returns idle
    when no legal pair costs less than ``threshold``."""
    n = state.n_qubits
    if len(state.workers) >= state.config.max_workers:
        return IDLE
    idle = state.idle_mask()
    legal = ~state.structural_mask() & idle[:, None] & idle[None, :]
    if not legal.any():
        return IDLE
    base = expected_error_matrix(preinfo.fidelity, preinfo.success_prob, t_mem_steps)
    ok = legal & (base < threshold) if threshold is not None else legal
    if not ok.any():
        return IDLE
    s1 = agent.predict(encode_qubits(state, preinfo, t_mem_steps))
    best = np.where(ok, base, np.inf).min(axis=1)
    cost_i = np.where(np.isfinite(best), best + mixing_weight * s1, np.inf)
    i = int(np.argmin(cost_i))
    s2 = agent.predict(encode_qubits(state, preinfo, t_mem_steps, selected=i))
    cost_j = np.where(legal[i], base[i] + mixing_weight * s2, np.inf)
    if threshold is not None:
        cost_j = np.where(cost_j < threshold, cost_j, np.inf)
    if not np.isfinite(cost_j).any():
        # the mixed score pushed every partner over the threshold; fall back
        # to the cheapest partner by expected error alone
        cost_j = np.where(ok[i], base[i], np.inf)
    j = int(np.argmin(cost_j))
    return Action.of(i, j)
