import csv

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from conftest import bfs_partition, certain_preinfo, config
from entsched.env import (
    Action,
    DisjointSet,
    EnvState,
    SimConfig,
    assign_actions,
    bfs_components,
    idle_qubits,
    is_terminal,
    largest_component,
    new_env,
    step,
    write_progress_csv,
)
from entsched.errors import ConfigError, RejectedAction
from entsched.preinfo import homogeneous_preinfo


def test_fresh_env_has_singletons_and_no_workers():
    s = new_env(config(4), certain_preinfo(4))
    assert sorted(len(c) for c in s.dsu.components()) == [1, 1, 1, 1]
    assert s.workers == []
    assert idle_qubits(s) == {0, 1, 2, 3}


def test_default_workers_is_half_the_qubits():
    assert SimConfig(n_qubits=40).max_workers == 20
    assert SimConfig(n_qubits=7).max_workers == 3


def test_config_validation():
    with pytest.raises(ConfigError):
        SimConfig(n_qubits=1).validate()
    with pytest.raises(ConfigError):
        SimConfig(n_qubits=4, max_workers=3).validate()
    with pytest.raises(ConfigError):
        SimConfig(stop_fraction=0.0).validate()
    with pytest.raises(ConfigError):
        EnvState(config(5), certain_preinfo(4))


def test_idle_qubits_follow_workers_not_links():
    s = new_env(config(4), homogeneous_preinfo(4, 0.98, 1.0))
    assign_actions(s, [Action.of(2, 3)])
    step(s)
    assert s.established[2, 3]
    assign_actions(s, [Action.of(0, 1)])
    # (2,3) is linked but has no worker, so both stay idle
    assert idle_qubits(s) == {2, 3}


def test_assign_rejections_name_the_pair():
    s = new_env(config(6), certain_preinfo(6))
    with pytest.raises(RejectedAction) as e:
        assign_actions(s, [Action.of(0, 1), Action.of(0, 1)])
    assert e.value.pair == (0, 1)
    with pytest.raises(RejectedAction) as e:
        assign_actions(s, [Action.of(0, 1), Action.of(0, 2)])
    assert e.value.pair == (0, 2)
    # a rejected batch leaves the state untouched
    assert s.workers == []
    assign_actions(s, [Action.of(0, 1)])
    with pytest.raises(RejectedAction):
        assign_actions(s, [Action.of(1, 2)])


def test_worker_capacity():
    s = new_env(config(6, max_workers=1), certain_preinfo(6))
    with pytest.raises(RejectedAction) as e:
        assign_actions(s, [Action.of(0, 1), Action.of(2, 3)])
    assert "capacity" in e.value.reason


def test_established_and_same_cluster_pairs_are_rejected():
    s = new_env(config(4), certain_preinfo(4))
    assign_actions(s, [Action.of(0, 1)])
    step(s)
    assign_actions(s, [Action.of(1, 2)])
    step(s)
    with pytest.raises(RejectedAction):
        assign_actions(s, [Action.of(0, 1)])
    with pytest.raises(RejectedAction):
        assign_actions(s, [Action.of(0, 2)])
    s2 = new_env(config(4, allow_intra_component_links=True), certain_preinfo(4))
    assign_actions(s2, [Action.of(0, 1)])
    step(s2)
    assign_actions(s2, [Action.of(1, 2)])
    step(s2)
    assign_actions(s2, [Action.of(0, 2)])  # cycle edge allowed by the flag


def test_idle_actions_are_noops():
    s = new_env(config(4), certain_preinfo(4))
    assign_actions(s, [Action(), Action()])
    assert s.workers == []


def test_certain_and_impossible_success():
    s = new_env(config(4), homogeneous_preinfo(4, 0.98, 1.0))
    assign_actions(s, [Action.of(0, 1)])
    _, entries = step(s)
    assert [(e.qubit_i, e.qubit_j, e.success_step, e.n_max_after) for e in entries] == [(0, 1, 1, 2)]
    f = np.full((4, 4), 0.98)
    r = np.zeros((4, 4))
    from entsched.preinfo import PreInfo

    s = new_env(config(4), PreInfo(f, r))
    assign_actions(s, [Action.of(0, 1)])
    for _ in range(5):
        _, entries = step(s)
        assert entries == []
    assert len(s.workers) == 1 and s.step == 5


def test_step_without_workers_still_counts():
    s = new_env(config(4), certain_preinfo(4))
    step(s)
    step(s)
    assert s.step == 2


def test_bernoulli_success_fraction():
    pi = homogeneous_preinfo(2, 0.98, 0.5)
    n = 10_000
    hits = 0
    for seed in range(n):
        s = new_env(config(2, rng_seed=seed), pi)
        assign_actions(s, [Action.of(0, 1)])
        hits += bool(step(s)[1])
    assert abs(hits / n - 0.5) < 0.02


def test_geometric_steps_to_success():
    r = 0.2
    pi = homogeneous_preinfo(2, 0.98, r)
    waits = []
    for seed in range(4000):
        s = new_env(config(2, rng_seed=seed), pi)
        assign_actions(s, [Action.of(0, 1)])
        while not step(s)[1]:
            pass
        waits.append(s.step)
    waits = np.array(waits)
    sd = np.sqrt((1 - r) / r ** 2) / np.sqrt(len(waits))
    assert abs(waits.mean() - 1 / r) < 3 * sd


def test_largest_component_examples():
    s = new_env(config(5), certain_preinfo(5))
    assert largest_component(s) == (1, frozenset({0}))
    assign_actions(s, [Action.of(0, 1)])
    step(s)
    assign_actions(s, [Action.of(1, 2)])
    step(s)
    assert largest_component(s) == (3, frozenset({0, 1, 2}))


def test_terminal_rule_is_strict():
    cfg = config(40)
    s = new_env(cfg, certain_preinfo(40))
    s.n_max = 30
    assert not is_terminal(s, cfg)
    s.n_max = 31
    assert is_terminal(s, cfg)
    s.n_max = 1
    s.step = cfg.max_steps
    assert is_terminal(s, cfg)


@given(st.integers(2, 10), st.lists(st.tuples(st.integers(0, 9), st.integers(0, 9)), max_size=40), st.integers(0, 2**32))
def test_dsu_matches_bfs(n, ops, seed):
    dsu = DisjointSet(n)
    edges = []
    for a, b in ops:
        a, b = a % n, b % n
        dsu.union(a, b)
        edges.append((a, b))
        assert set(dsu.components()) == set(bfs_partition(n, edges))


def test_dsu_bfs_two_hundred_sequences():
    rng = np.random.default_rng(5)
    for _ in range(200):
        n = int(rng.integers(2, 11))
        dsu = DisjointSet(n)
        edges = []
        for _ in range(int(rng.integers(0, 3 * n))):
            a, b = (int(x) for x in rng.integers(0, n, 2))
            dsu.union(a, b)
            edges.append((a, b))
        assert set(dsu.components()) == set(bfs_partition(n, edges))


def test_bfs_components_on_adjacency():
    adj = np.zeros((5, 5), dtype=bool)
    adj[0, 3] = adj[3, 0] = True
    assert set(bfs_components(adj)) == {frozenset({0, 3}), frozenset({1}), frozenset({2}), frozenset({4})}


@given(st.integers(0, 10**6))
def test_random_episodes_keep_invariants(seed):
    n = 8
    rng = np.random.default_rng(seed)
    pi = homogeneous_preinfo(n, 0.98, 0.4)
    s = new_env(config(n, rng_seed=seed), pi)
    for _ in range(30):
        idle = sorted(idle_qubits(s))
        rng.shuffle(idle)
        acts = []
        for a, b in zip(idle[::2], idle[1::2]):
            if s.is_legal_pair(a, b) and len(s.workers) + len(acts) < s.config.max_workers:
                acts.append(Action.of(a, b))
        assign_actions(s, acts)
        step(s)
        busy = [q for w in s.workers for q in (w.qubit_i, w.qubit_j)]
        assert len(busy) == len(set(busy))
        edges = [(e.qubit_i, e.qubit_j) for e in s.progress]
        assert set(s.dsu.components()) == set(bfs_partition(n, edges))
        assert set(bfs_components(s.established)) == set(bfs_partition(n, edges))
        after = [e.n_max_after for e in s.progress]
        assert after == sorted(after)
        assert largest_component(s)[0] == max(len(c) for c in bfs_partition(n, edges))


def _trace(seed):
    n = 6
    s = new_env(config(n, rng_seed=seed), homogeneous_preinfo(n, 0.98, 0.3))
    assign_actions(s, [Action.of(0, 1), Action.of(2, 3), Action.of(4, 5)])
    for _ in range(20):
        step(s)
    return s.progress


def test_same_seed_same_progress():
    assert _trace(3) == _trace(3)
    assert _trace(3) != _trace(4)


def test_progress_csv(tmp_path):
    p = tmp_path / "prog.csv"
    write_progress_csv(_trace(1), p)
    rows = list(csv.reader(open(p)))
    assert rows[0] == ["step", "qubit_i", "qubit_j", "n_max_after"]
    assert len(rows) == len(_trace(1)) + 1


def test_action_canonical_order():
    assert Action.of(3, 1).pair == (1, 3)
    with pytest.raises(ValueError):
        Action.of(2, 2)
