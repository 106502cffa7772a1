"""Training loop for the learned schedulers.

Each epoch rolls out a few full episodes with the current model mixed into
the greedy matrix.  At the step where an episode reaches its peak score the
realised error of every link in the largest cluster becomes a regression
target; all other tokens are masked out.  One Adam step on the masked mean
squared error follows.  The score itself only selects which weights to keep.
"""
from __future__ import annotations

import copy
import math
import time
from dataclasses import dataclass, field, replace
from typing import Callable

import numpy as np

from .. import rng as rngmod
from ..env import SimConfig
from ..errors import ConfigError, TrainingDiverged
from ..metrics import cluster_edges
from ..preinfo import GenParams, generate_preinfo
from ..schedulers import StrategyConfig
from . import Agent
from .encoding import encode_qubits, encode_tokens
from .nn import Adam, batch_loss_and_grads


@dataclass
class TrainConfig:
    epochs: int = 3000
    learning_rate: float = 3e-3
    episodes_per_epoch: int = 4
    mixing_weight: float = 0.1
    rng_seed: int = 0
    avg_window: int = 20  # epochs in the running average used for model selection

    def validate(self):
        if self.epochs < 1 or self.episodes_per_epoch < 1:
            raise ConfigError("epochs and episodes_per_epoch must be positive")
        if not self.learning_rate > 0:
            raise ConfigError(f"learning_rate must be positive, got {self.learning_rate}")
        if not 0.0 <= self.mixing_weight <= 1.0:
            raise ConfigError(f"mixing_weight must lie in [0, 1], got {self.mixing_weight}")
        if self.avg_window < 1:
            raise ConfigError("avg_window must be positive")
        return self


@dataclass
class TrainResult:
    model: object
    history: list = field(default_factory=list)  # (epoch, mean mu, loss)
    best_epoch: int = -1
    best_running_mu: float = -math.inf
    wall_time: float = 0.0


def env_factory(sim: SimConfig, gen: GenParams, seed: int) -> Callable:
    """Fresh system and coin flips for every (epoch, episode)."""

    def make(epoch: int, k: int):
        s = rngmod.derive_seed(seed, rngmod.TRAIN, epoch, k)
        return replace(sim, rng_seed=s), generate_preinfo(replace(gen, rng_seed=s), sim.n_qubits)

    return make


def peak_targets(state, preinfo, t_mem_steps: float, variant: str):
    """Tokens, realised-error targets and mask for the current state."""
    n = state.n_qubits
    f = preinfo.fidelity
    edges = cluster_edges(state)
    if variant == "qubit":
        tokens = encode_qubits(state, preinfo, t_mem_steps)
        total = np.zeros(n)
        count = np.zeros(n)
        for i, j, t in edges:
            e = 1.0 - f[i, j] * math.exp(-(state.step - t) / t_mem_steps)
            total[[i, j]] += e
            count[[i, j]] += 1
        mask = count > 0
        target = np.where(mask, total / np.maximum(count, 1), 0.0)
        return tokens, target.astype(tokens.dtype), mask
    tokens = encode_tokens(state, preinfo, t_mem_steps)
    target = np.zeros(n * n, dtype=tokens.dtype)
    mask = np.zeros(n * n, dtype=bool)
    for i, j, t in edges:
        e = 1.0 - f[i, j] * math.exp(-(state.step - t) / t_mem_steps)
        for r in (i * n + j, j * n + i):
            target[r] = e
            mask[r] = True
    return tokens, target, mask


def rollout(agent, sim: SimConfig, preinfo, mixing_weight: float, strategy: StrategyConfig | None = None):
    """One episode; returns the result and the training sample at its peak."""
    from ..harness import run_episode

    strategy = strategy or StrategyConfig(kind=agent.strategy)
    best = {"mu": -math.inf, "sample": None}

    def capture(state, point):
        if point.mu > best["mu"]:
            best["mu"] = point.mu
            best["sample"] = peak_targets(state, preinfo, sim.t_mem_steps, agent.variant)

    result, _ = run_episode(sim, preinfo, strategy, agent, mixing_weight=mixing_weight, on_step=capture)
    return result, best["sample"]


def train(make_env: Callable, model, config: TrainConfig, log: Callable | None = None, strategy: StrategyConfig | None = None) -> TrainResult:
    """Train ``model`` in place and return the best weights seen.

    ``make_env(epoch, k)`` must return ``(SimConfig, PreInfo)``."""
    config.validate()
    t0 = time.perf_counter()
    agent = Agent(model, attention_chunk=None)
    opt = Adam(model.params, lr=config.learning_rate)
    out = TrainResult(model=model)
    best_params = copy.deepcopy(model.params)
    recent: list[float] = []
    for epoch in range(config.epochs):
        batch, mus = [], []
        for k in range(config.episodes_per_epoch):
            sim, preinfo = make_env(epoch, k)
            result, sample = rollout(agent, sim, preinfo, config.mixing_weight, strategy)
            mus.append(result.mu_peak)
            if sample is not None and sample[2].any():
                batch.append(sample)
        mean_mu = float(np.mean(mus))
        recent.append(mean_mu)
        if len(recent) > config.avg_window:
            recent.pop(0)
        running = float(np.mean(recent))
        # select on the weights that produced these episodes, before updating
        if len(recent) == min(config.avg_window, config.epochs) and running > out.best_running_mu:
            out.best_running_mu = running
            out.best_epoch = epoch
            best_params = copy.deepcopy(model.params)
        loss, grads = batch_loss_and_grads(model, batch)
        if not math.isfinite(loss) or not all(np.isfinite(g).all() for g in grads.values()):
            raise TrainingDiverged(f"non-finite loss or gradient at epoch {epoch} (loss={loss})")
        opt.step(model.params, grads)
        out.history.append((epoch, mean_mu, loss))
        if log is not None:
            log(epoch, mean_mu, running, loss)
    if out.best_epoch < 0:
        best_params = copy.deepcopy(model.params)
    for k, v in best_params.items():
        model.params[k][...] = v
    out.wall_time = time.perf_counter() - t0
    return out
