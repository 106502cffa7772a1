import itertools
import os

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from entsched.env import SimConfig
from entsched.preinfo import GenParams, generate_preinfo, homogeneous_preinfo

settings.register_profile("default", deadline=None, max_examples=60, suppress_health_check=[HealthCheck.too_slow])
settings.register_profile("ci", deadline=None, max_examples=25, suppress_health_check=[HealthCheck.too_slow])
settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "default"))


def bfs_partition(n, edges):
    """Reference components by breadth-first search over an edge list."""
    adj = {q: set() for q in range(n)}
    for i, j in edges:
        adj[i].add(j)
        adj[j].add(i)
    seen, parts = set(), []
    for s in range(n):
        if s in seen:
            continue
        comp, queue = {s}, [s]
        while queue:
            u = queue.pop()
            for v in adj[u]:
                if v not in comp:
                    comp.add(v)
                    queue.append(v)
        seen |= comp
        parts.append(frozenset(comp))
    return parts


def prufer_min_tree_weight(w):
    """Minimum spanning-tree weight by decoding every Pruefer sequence."""
    n = len(w)
    if n == 2:
        return w[0, 1]
    codes = np.array(list(itertools.product(range(n), repeat=n - 2)), dtype=np.int64)
    m = len(codes)
    deg = np.ones((m, n), dtype=np.int64)
    for k in range(n - 2):
        np.add.at(deg, (np.arange(m), codes[:, k]), 1)
    total = np.zeros(m)
    rows = np.arange(m)
    for k in range(n - 2):
        leaf = np.argmax(deg == 1, axis=1)
        total += w[leaf, codes[:, k]]
        deg[rows, leaf] -= 1
        deg[rows, codes[:, k]] -= 1
    last = np.argsort(deg != 1, axis=1, kind="stable")[:, :2]
    total += w[last[:, 0], last[:, 1]]
    return total.min()


@pytest.fixture
def small_preinfo():
    return generate_preinfo(GenParams(sigma_fidelity=0.09, rng_seed=11), 8)


def certain_preinfo(n, fidelity=0.98):
    return homogeneous_preinfo(n, fidelity, 1.0)


def config(n, **kw):
    return SimConfig(n_qubits=n, **kw)


# acceptance outcomes, criterion number -> (passed, detail)
ACCEPTANCE: dict[int, tuple[bool, str]] = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(ACCEPTANCE):
        ok, detail = ACCEPTANCE[k]
        terminalreporter.write_line(f"ACCEPTANCE criterion {k}: {'PASS' if ok else 'FAIL'}  {detail}")
