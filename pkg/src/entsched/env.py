"""Discrete-time probabilistic environment for heralded entanglement scheduling.

Workers attempt entanglement on qubit pairs; every step each attempt succeeds
independently with probability ``R_ij``.  Successful links are merged into a
disjoint-set forest so the largest cluster is always available in O(α(n)).

Randomness: each step draws one uniform per unordered pair from the episode's
environment stream, whether or not the pair is being attempted.  An attempt on
``(i, j)`` at step ``t`` therefore sees the same uniform under every scheduling
strategy, which gives paired strategy comparisons common random numbers.
"""
from __future__ import annotations

import copy
import csv
import math
from dataclasses import dataclass
from typing import Iterable, NamedTuple

import numpy as np

from . import rng as rngmod
from .errors import ConfigError, RejectedAction
from .preinfo import PreInfo


@dataclass
class SimConfig:
    n_qubits: int = 40
    max_workers: int | None = None  # None -> floor(n_qubits / 2)
    stop_fraction: float = 0.75
    max_steps: int = 20_000
    allow_intra_component_links: bool = False
    t_mem_steps: float = 6.0e3
    rng_seed: int = 0

    def __post_init__(self):
        if self.max_workers is None:
            self.max_workers = self.n_qubits // 2

    def validate(self):
        if self.n_qubits < 2:
            raise ConfigError(f"n_qubits must be >= 2, got {self.n_qubits}")
        if not (1 <= self.max_workers <= self.n_qubits // 2):
            raise ConfigError(f"max_workers must lie in [1, {self.n_qubits // 2}], got {self.max_workers}")
        if not (0.0 < self.stop_fraction <= 1.0):
            raise ConfigError(f"stop_fraction must lie in (0, 1], got {self.stop_fraction}")
        if self.max_steps < 1:
            raise ConfigError("max_steps must be positive")
        if not self.t_mem_steps > 0:
            raise ConfigError(f"t_mem_steps must be positive, got {self.t_mem_steps}")
        if self.rng_seed < 0:
            raise ConfigError("rng_seed must be non-negative")
        return self


class Action(NamedTuple):
    """``pair`` is a canonical ``(i, j)`` with ``i < j``, or ``None`` for idle."""

    pair: tuple[int, int] | None = None

    @property
    def is_idle(self) -> bool:
        return self.pair is None

    @classmethod
    def of(cls, i: int, j: int) -> "Action":
        if i == j:
            raise ValueError(f"pair needs two distinct qubits, got ({i},{j})")
        return cls((i, j) if i < j else (j, i))


IDLE = Action()


class ProgressEntry(NamedTuple):
    qubit_i: int
    qubit_j: int
    success_step: int
    n_max_after: int


class Worker(NamedTuple):
    qubit_i: int
    qubit_j: int
    start_step: int


class DisjointSet:
    """Union by size with path halving; tracks the smallest member per root."""

    def __init__(self, n: int):
        self.parent = list(range(n))
        self.size = [1] * n
        self.min_member = list(range(n))

    def find(self, x: int) -> int:
        parent = self.parent
        while parent[x] != x:
            parent[x] = parent[parent[x]]
            x = parent[x]
        return x

    def union(self, a: int, b: int) -> int:
        ra, rb = self.find(a), self.find(b)
        if ra == rb:
            return ra
        if self.size[ra] < self.size[rb]:
            ra, rb = rb, ra
        self.parent[rb] = ra
        self.size[ra] += self.size[rb]
        self.min_member[ra] = min(self.min_member[ra], self.min_member[rb])
        return ra

    def same(self, a: int, b: int) -> bool:
        return self.find(a) == self.find(b)

    def components(self) -> list[frozenset[int]]:
        groups: dict[int, set[int]] = {}
        for x in range(len(self.parent)):
            groups.setdefault(self.find(x), set()).add(x)
        return [frozenset(g) for g in groups.values()]


class EnvState:
    def __init__(self, config: SimConfig, preinfo: PreInfo):
        config.validate()
        if preinfo.n_qubits != config.n_qubits:
            raise ConfigError(f"pre-information is {preinfo.n_qubits}x{preinfo.n_qubits}, config says n_qubits={config.n_qubits}")
        n = config.n_qubits
        self.config = config
        self.preinfo = preinfo
        self.step = 0
        self.established = np.zeros((n, n), dtype=bool)
        self.workers: list[Worker] = []
        self.busy = np.zeros(n, dtype=bool)
        self.dsu = DisjointSet(n)
        self.progress: list[ProgressEntry] = []
        self.n_max = 1
        self.rng = rngmod.stream(config.rng_seed, rngmod.ENV)
        self._iu = np.triu_indices(n, k=1)
        self._pair_index = np.full((n, n), -1, dtype=np.int64)
        self._pair_index[self._iu] = np.arange(len(self._iu[0]))

    @property
    def n_qubits(self) -> int:
        return self.config.n_qubits

    def copy(self) -> "EnvState":
        return copy.deepcopy(self)

    # --- queries -------------------------------------------------------

    def idle_qubits(self) -> set[int]:
        """Qubits not held by an active attempt.  Established links do not
        occupy a qubit; clusters grow by reusing linked qubits."""
        return {int(q) for q in np.flatnonzero(~self.busy)}

    def idle_mask(self) -> np.ndarray:
        return ~self.busy

    def is_legal_pair(self, i: int, j: int) -> bool:
        if i == j or self.busy[i] or self.busy[j] or self.established[i, j]:
            return False
        return self.config.allow_intra_component_links or not self.dsu.same(i, j)

    def component_labels(self) -> np.ndarray:
        return np.array([self.dsu.find(q) for q in range(self.n_qubits)])

    def structural_mask(self) -> np.ndarray:
        """True where a pair can never be a useful action in this state:
        diagonal, established links and (by default) same-cluster pairs."""
        n = self.n_qubits
        mask = self.established | np.eye(n, dtype=bool)
        if not self.config.allow_intra_component_links:
            labels = self.component_labels()
            mask |= labels[:, None] == labels[None, :]
        return mask

    def largest_component(self) -> tuple[int, frozenset[int]]:
        """Size and members of the largest cluster; ties go to the cluster
        holding the lowest qubit index."""
        dsu = self.dsu
        best_root, best_key = None, None
        for x in range(self.n_qubits):
            if dsu.parent[x] != x:
                continue
            key = (-dsu.size[x], dsu.min_member[x])
            if best_key is None or key < best_key:
                best_root, best_key = x, key
        members = frozenset(q for q in range(self.n_qubits) if dsu.find(q) == best_root)
        return len(members), members

    def largest_root(self) -> int:
        dsu = self.dsu
        best_root, best_key = 0, None
        for x in range(self.n_qubits):
            if dsu.parent[x] == x:
                key = (-dsu.size[x], dsu.min_member[x])
                if best_key is None or key < best_key:
                    best_root, best_key = x, key
        return best_root

    def is_terminal(self, config: SimConfig | None = None) -> bool:
        config = config or self.config
        return self.n_max > config.stop_fraction * config.n_qubits or self.step >= config.max_steps

    def scheduling_complete(self) -> bool:
        """f1: no further pair could be assigned under the environment rules."""
        if len(self.workers) >= self.config.max_workers:
            return True
        idle = np.flatnonzero(~self.busy)
        for a in range(len(idle)):
            for b in range(a + 1, len(idle)):
                if self.is_legal_pair(int(idle[a]), int(idle[b])):
                    return False
        return True

    # --- transitions ---------------------------------------------------

    def assign_actions(self, actions: Iterable[Action]) -> "EnvState":
        """Turn Pair actions into worker attempts starting at the current step.

        The whole batch is validated before anything is applied."""
        pending: list[tuple[int, int]] = []
        used: set[int] = set()
        for action in actions:
            if action.is_idle:
                continue
            i, j = action.pair
            n = self.n_qubits
            if not (0 <= i < n and 0 <= j < n) or i == j:
                raise RejectedAction((i, j), "indices out of range or equal")
            if (i, j) in pending:
                raise RejectedAction((i, j), "duplicate pair in batch")
            if self.busy[i] or self.busy[j] or i in used or j in used:
                raise RejectedAction((i, j), "qubit busy")
            if self.established[i, j]:
                raise RejectedAction((i, j), "link already established")
            if not self.config.allow_intra_component_links and self.dsu.same(i, j):
                raise RejectedAction((i, j), "qubits already in the same cluster")
            if len(self.workers) + len(pending) + 1 > self.config.max_workers:
                raise RejectedAction((i, j), "worker capacity exceeded")
            pending.append((i, j))
            used.update((i, j))
        for i, j in pending:
            self.workers.append(Worker(i, j, self.step))
            self.busy[i] = self.busy[j] = True
        return self

    def advance(self) -> list[ProgressEntry]:
        """One entanglement trial step for every active worker."""
        self.step += 1
        u = self.rng.random(len(self._iu[0]))
        if not self.workers:
            return []
        r = self.preinfo.success_prob
        new_entries = []
        remaining = []
        for w in sorted(self.workers):
            i, j = w.qubit_i, w.qubit_j
            if u[self._pair_index[i, j]] < r[i, j]:
                self.established[i, j] = self.established[j, i] = True
                self.busy[i] = self.busy[j] = False
                root = self.dsu.union(i, j)
                self.n_max = max(self.n_max, self.dsu.size[root])
                entry = ProgressEntry(i, j, self.step, self.n_max)
                self.progress.append(entry)
                new_entries.append(entry)
            else:
                remaining.append(w)
        self.workers = remaining
        return new_entries


# --- functional surface ---------------------------------------------------

def new_env(config: SimConfig, preinfo: PreInfo) -> EnvState:
    return EnvState(config, preinfo)


def idle_qubits(state: EnvState) -> set[int]:
    return state.idle_qubits()


def assign_actions(state: EnvState, actions: Iterable[Action]) -> EnvState:
    return state.assign_actions(actions)


def step(state: EnvState) -> tuple[EnvState, list[ProgressEntry]]:
    entries = state.advance()
    return state, entries


def largest_component(state: EnvState) -> tuple[int, frozenset[int]]:
    return state.largest_component()


def is_terminal(state: EnvState, config: SimConfig | None = None) -> bool:
    return state.is_terminal(config)


def bfs_components(adjacency: np.ndarray) -> list[frozenset[int]]:
    """Connected components of a boolean adjacency matrix by breadth-first search."""
    n = adjacency.shape[0]
    seen = [False] * n
    out = []
    for s in range(n):
        if seen[s]:
            continue
        seen[s] = True
        comp, frontier = [s], [s]
        while frontier:
            nxt = []
            for v in frontier:
                for w in np.flatnonzero(adjacency[v]):
                    w = int(w)
                    if not seen[w]:
                        seen[w] = True
                        comp.append(w)
                        nxt.append(w)
            frontier = nxt
        out.append(frozenset(comp))
    return out


def write_progress_csv(progress: Iterable[ProgressEntry], path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["step", "qubit_i", "qubit_j", "n_max_after"])
        for e in progress:
            w.writerow([e.success_step, e.qubit_i, e.qubit_j, e.n_max_after])


def default_max_workers(n_qubits: int) -> int:
    return math.floor(n_qubits / 2)
