import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from conftest import certain_preinfo, config, prufer_min_tree_weight
from entsched.env import Action, Worker, new_env
from entsched.errors import ConfigError
from entsched.harness import Scheduler
from entsched.preinfo import GenParams, PreInfo, generate_preinfo, homogeneous_preinfo
from entsched.schedulers import (
    MASKED,
    Strategy,
    StrategyConfig,
    greedy_matrix,
    mst_matrix,
    mst_plan,
    random_matrix,
    select_actions,
)


def _weights_preinfo(w):
    """PreInfo whose expected errors at R=1, t_mem=inf are exactly w."""
    return PreInfo(1.0 - w, np.ones_like(w))


def _sym(rng, n):
    w = rng.uniform(0.001, 0.2, (n, n))
    w = np.triu(w, 1)
    return w + w.T


def test_prufer_oracle_sanity():
    # path 0-1-2 cheaper than anything through the 0-2 edge
    w = np.array([[0, 1, 5], [1, 0, 2], [5, 2, 0]], dtype=float)
    assert prufer_min_tree_weight(w) == 3


def test_mst_matches_exhaustive_enumeration():
    rng = np.random.default_rng(2024)
    sizes = [2, 3, 4, 5, 6, 7] * 9 + [8] * 4
    for n in sizes:
        w = _sym(rng, n)
        plan = mst_plan(_weights_preinfo(w), np.inf)
        assert len(plan) == n - 1
        got = sum(wt for _, _, wt in plan)
        assert got == pytest.approx(prufer_min_tree_weight(w), abs=1e-12)


def test_mst_triangle_and_order():
    w = np.array([[0, 0.02, 0.03], [0.02, 0, 0.01], [0.03, 0.01, 0]])
    plan = mst_plan(_weights_preinfo(w), np.inf)
    assert [(i, j) for i, j, _ in plan] == [(1, 2), (0, 1)]
    assert [wt for *_, wt in plan] == pytest.approx([0.01, 0.02])


def test_mst_ties_use_lexicographic_order():
    plan = mst_plan(homogeneous_preinfo(5, 0.98, 1.0), 1000.0)
    assert [(i, j) for i, j, _ in plan] == [(0, 1), (0, 2), (0, 3), (0, 4)]
    with pytest.raises(ConfigError):
        mst_plan(homogeneous_preinfo(1, 0.98, 1.0), 1000.0)


def test_mst_matrix_shrinks_as_edges_are_built():
    pi = generate_preinfo(GenParams(rng_seed=8), 5)
    plan = mst_plan(pi, 1000.0)
    s = new_env(config(5), certain_preinfo(5))
    assert np.isfinite(mst_matrix(plan, s)).sum() == 2 * 4
    i, j, _ = plan[0]
    s.assign_actions([Action.of(i, j)])
    s.advance()
    assert np.isfinite(mst_matrix(plan, s)).sum() == 2 * 3
    for i, j, _ in plan[1:]:
        s.established[i, j] = s.established[j, i] = True
    assert not np.isfinite(mst_matrix(plan, s)).any()


def _matrix(n, entries):
    m = np.full((n, n), 0.5)
    np.fill_diagonal(m, MASKED)
    for (i, j), v in entries.items():
        m[i, j] = m[j, i] = v
    return m


def test_select_sequential_trace():
    s = new_env(config(4, max_workers=2), certain_preinfo(4))
    m = _matrix(4, {(0, 1): 0.001, (1, 2): 0.002, (2, 3): 0.003})
    acts = select_actions(m, s, StrategyConfig())
    assert [a.pair for a in acts] == [(0, 1), (2, 3)]


def test_select_single_and_none():
    s = new_env(config(4), certain_preinfo(4))
    acts = select_actions(_matrix(4, {(1, 3): 0.01}), s, StrategyConfig())
    assert [a.pair for a in acts if not a.is_idle] == [(1, 3)]
    assert len(acts) == 2
    acts = select_actions(_matrix(4, {}), s, StrategyConfig())
    assert all(a.is_idle for a in acts)
    m = np.full((4, 4), 0.02)
    assert all(a.is_idle for a in select_actions(m, s, StrategyConfig()))


def test_greedy_prefers_lower_error():
    f = np.full((4, 4), 0.9)
    f[0, 1] = f[1, 0] = 0.999
    f[2, 3] = f[3, 2] = 0.99
    pi = PreInfo(f, np.ones((4, 4)))
    s = new_env(config(4, max_workers=1), pi)
    m = greedy_matrix(s, pi, np.inf)
    assert select_actions(m, s, StrategyConfig())[0].pair == (0, 1)


def test_homogeneous_greedy_ties_go_lexicographic():
    pi = homogeneous_preinfo(6, 0.99, 1.0)
    s = new_env(config(6), pi)
    m = greedy_matrix(s, pi, 1000.0)
    finite = m[np.isfinite(m)]
    assert np.all(finite == finite[0])
    assert [a.pair for a in select_actions(m, s, StrategyConfig())] == [(0, 1), (2, 3), (4, 5)]


def test_random_matrix_is_below_threshold_and_reproducible():
    s = new_env(config(6), certain_preinfo(6))
    a = random_matrix(s, np.random.default_rng(1))
    b = random_matrix(s, np.random.default_rng(1))
    assert np.array_equal(a, b)
    finite = a[np.isfinite(a)]
    assert finite.max() < 0.02
    assert np.array_equal(a, a.T)
    assert not np.isfinite(np.diag(a)).any()


def _random_state(seed, n=8):
    rng = np.random.default_rng(seed)
    s = new_env(config(n, rng_seed=seed), homogeneous_preinfo(n, 0.98, 0.5))
    for _ in range(int(rng.integers(0, 6))):
        idle = sorted(s.idle_qubits())
        if len(idle) >= 2 and len(s.workers) < s.config.max_workers:
            a, b = rng.choice(idle, 2, replace=False)
            if s.is_legal_pair(int(a), int(b)):
                s.assign_actions([Action.of(int(a), int(b))])
        s.advance()
    m = rng.uniform(0.0, 0.04, (n, n))
    m = np.triu(m, 1)
    m = m + m.T
    m[s.structural_mask()] = MASKED
    return s, m


@given(st.integers(0, 10**6))
def test_selection_threshold_and_matching(seed):
    s, m = _random_state(seed)
    acts = select_actions(m, s, StrategyConfig())
    pairs = [a.pair for a in acts if not a.is_idle]
    idle = s.idle_qubits()
    used = [q for p in pairs for q in p]
    assert len(used) == len(set(used))
    assert set(used) <= idle
    assert all(m[i, j] < 0.02 for i, j in pairs)
    assert len(acts) == s.config.max_workers - len(s.workers)


@given(st.integers(0, 10**6), st.permutations(range(8)))
def test_selection_is_label_equivariant(seed, perm):
    s, m = _random_state(seed)
    # continuous random costs, so the tie rule never decides
    base = {a.pair for a in select_actions(m, s, StrategyConfig()) if not a.is_idle}
    p = np.array(perm)
    inv = np.argsort(p)
    s2 = new_env(config(8), homogeneous_preinfo(8, 0.98, 0.5))
    s2.established = s.established[np.ix_(inv, inv)]
    for e in s.progress:
        s2.dsu.union(int(p[e.qubit_i]), int(p[e.qubit_j]))
    s2.workers = [Worker(*sorted((int(p[w.qubit_i]), int(p[w.qubit_j]))), w.start_step) for w in s.workers]
    s2.busy = s.busy[inv]
    got = {a.pair for a in select_actions(m[np.ix_(inv, inv)], s2, StrategyConfig()) if not a.is_idle}
    back = {tuple(sorted((int(inv[i]), int(inv[j])))) for i, j in got}
    assert back == base


def test_shape_mismatch_is_config_error():
    s = new_env(config(4), certain_preinfo(4))
    with pytest.raises(ConfigError):
        select_actions(np.zeros((3, 3)), s, StrategyConfig())


def test_stall_policies():
    # every expected error sits above the threshold
    pi = homogeneous_preinfo(4, 0.95, 1.0)
    for policy, expect in (("vacuous", 2), ("fallback", 2), ("strict", 0)):
        s = new_env(config(4), pi)
        sched = Scheduler(StrategyConfig(stall_policy=policy), pi, 1000.0, seed=0)
        assert len(sched.schedule(s)) == expect
    with pytest.raises(ConfigError):
        StrategyConfig(stall_policy="nope").validate()
    with pytest.raises(ConfigError):
        StrategyConfig(action_threshold=0).validate()


def test_vacuous_does_not_lift_when_some_entry_passes():
    f = np.full((4, 4), 0.95)
    f[0, 1] = f[1, 0] = 0.999
    pi = PreInfo(f, np.ones((4, 4)))
    s = new_env(config(4), pi)
    sched = Scheduler(StrategyConfig(), pi, 1000.0, seed=0)
    assert sched.schedule(s) == [(0, 1)]
    # (2,3) is above threshold and (0,1) passes, so only one worker runs
    assert len(s.workers) == 1


def test_learned_strategy_needs_a_model():
    with pytest.raises(ConfigError):
        Scheduler(StrategyConfig(kind=Strategy.TRANSFORMER), certain_preinfo(4), 1000.0, seed=0)
    assert Strategy("transformer-qubit").learned and not Strategy.MST.learned
