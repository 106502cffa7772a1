"""Link errors, cluster error and the cluster-state quantum volume score."""
from __future__ import annotations

import csv
import math
from typing import Iterable, NamedTuple, Sequence

import numpy as np


class TrajectoryPoint(NamedTuple):
    step: int
    n_max: int
    epsilon: float
    mu: float


def link_error(fidelity: float, elapsed_steps: float, t_mem_steps: float) -> float:
    """Error of a stored link after ``elapsed_steps`` of memory decay."""
    return 1.0 - fidelity * math.exp(-elapsed_steps / t_mem_steps)


def expected_link_error(fidelity: float, success_prob: float, t_mem_steps: float) -> float:
    """Link error after the expected wait of ``1/R`` attempt steps.

    Used as the greedy edge weight and as the base of every action matrix.
    A pair that can never succeed costs 1."""
    if success_prob <= 0.0:
        return 1.0
    return 1.0 - fidelity * math.exp(-1.0 / (success_prob * t_mem_steps))


def expected_error_matrix(fidelity: np.ndarray, success_prob: np.ndarray, t_mem_steps: float) -> np.ndarray:
    """Element-wise :func:`expected_link_error`; the diagonal is left at 1."""
    r = np.asarray(success_prob, dtype=float)
    out = np.ones_like(r)
    ok = r > 0
    out[ok] = 1.0 - np.asarray(fidelity)[ok] * np.exp(-1.0 / (r[ok] * t_mem_steps))
    np.fill_diagonal(out, 1.0)
    return out


def cluster_edges(state) -> list[tuple[int, int, int]]:
    """Established links ``(i, j, success_step)`` inside the largest cluster."""
    root = state.largest_root()
    find = state.dsu.find
    return [(e.qubit_i, e.qubit_j, e.success_step) for e in state.progress if find(e.qubit_i) == root]


def cluster_error(state, preinfo, t_mem_steps: float) -> float:
    """Sum of decayed link errors over every link inside the largest cluster."""
    f = preinfo.fidelity
    now = state.step
    total = 0.0
    for i, j, t in cluster_edges(state):
        total += 1.0 - f[i, j] * math.exp(-(now - t) / t_mem_steps)
    return total


def mu(n_max: int, epsilon: float) -> float:
    """``min(n, 1/(n*eps))``; zero error scores the full cluster size."""
    if epsilon <= 0.0:
        return float(n_max)
    return min(float(n_max), 1.0 / (n_max * epsilon))


def trajectory_point(state, preinfo, t_mem_steps: float) -> TrajectoryPoint:
    eps = cluster_error(state, preinfo, t_mem_steps)
    return TrajectoryPoint(state.step, state.n_max, eps, mu(state.n_max, eps))


def peak_mu(trajectory: Sequence[TrajectoryPoint]) -> tuple[float, int]:
    """Largest score and the earliest step that attains it."""
    if not trajectory:
        raise ValueError("empty trajectory")
    best = trajectory[0]
    for p in trajectory[1:]:
        if p.mu > best.mu:
            best = p
    return best.mu, best.step


def write_trajectory_csv(trajectory: Iterable[TrajectoryPoint], path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["step", "n_max", "epsilon", "mu"])
        for p in trajectory:
            w.writerow([p.step, p.n_max, repr(float(p.epsilon)), repr(float(p.mu))])


def read_trajectory_csv(path) -> list[TrajectoryPoint]:
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    return [TrajectoryPoint(int(r["step"]), int(r["n_max"]), float(r["epsilon"]), float(r["mu"])) for r in rows]
