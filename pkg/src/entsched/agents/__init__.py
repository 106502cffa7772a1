"""Learned schedulers: token encodings, models, training and checkpoints."""
from __future__ import annotations

import numpy as np

from ..metrics import expected_error_matrix
from ..schedulers import MASKED, Strategy
from .checkpoint import load_checkpoint, save_checkpoint
from .encoding import N_DIM, QUBIT_DIM, encode_qubits, encode_tokens
from .nn import Adam, ModelConfig, batch_loss_and_grads, build_model, masked_mse

STRATEGY_OF_VARIANT = {"qupairs": Strategy.TRANSFORMER, "fc": Strategy.FC, "qubit": Strategy.TRANSFORMER_QUBIT}


def action_matrix_from_predictions(predictions, state, preinfo, t_mem_steps: float, mixing_weight: float) -> np.ndarray:
    """Expected link error plus ``mixing_weight`` times the symmetrised prediction."""
    if not 0.0 <= mixing_weight <= 1.0:
        raise ValueError(f"mixing_weight must lie in [0, 1], got {mixing_weight}")
    n = state.n_qubits
    p = np.asarray(predictions, dtype=float).reshape(n, n)
    m = expected_error_matrix(preinfo.fidelity, preinfo.success_prob, t_mem_steps)
    if mixing_weight:
        m = m + mixing_weight * 0.5 * (p + p.T)
    m[state.structural_mask()] = MASKED
    return m


class Agent:
    """Wraps a model for use by the scheduler.  Inference only reads the
    weights, so one agent can serve parallel episodes."""

    def __init__(self, model, attention_chunk: int | None = 2048):
        self.model = model
        self.attention_chunk = attention_chunk

    @property
    def variant(self) -> str:
        return self.model.config.variant

    @property
    def strategy(self) -> Strategy:
        return STRATEGY_OF_VARIANT[self.variant]

    def predict(self, tokens: np.ndarray) -> np.ndarray:
        chunk = self.attention_chunk if self.variant != "fc" else None
        if chunk is not None and tokens.shape[0] <= chunk:
            chunk = None
        out, _ = self.model.forward(tokens, chunk=chunk)
        return out

    def action_matrix(self, state, preinfo, t_mem_steps: float, mixing_weight: float) -> np.ndarray:
        if self.variant == "qubit":
            raise ValueError("the qubit-level model selects pairs directly; use qubit_level_select")
        pred = self.predict(encode_tokens(state, preinfo, t_mem_steps))
        return action_matrix_from_predictions(pred, state, preinfo, t_mem_steps, mixing_weight)

    @classmethod
    def load(cls, path, **kw) -> "Agent":
        return cls(load_checkpoint(path), **kw)


__all__ = [
    "Adam",
    "Agent",
    "ModelConfig",
    "N_DIM",
    "QUBIT_DIM",
    "action_matrix_from_predictions",
    "batch_loss_and_grads",
    "build_model",
    "encode_qubits",
    "encode_tokens",
    "load_checkpoint",
    "masked_mse",
    "save_checkpoint",
]
