"""Token encodings for the learned schedulers."""
from __future__ import annotations

import numpy as np

N_DIM = 7
QUBIT_DIM = 6


def _pre_dims(preinfo, t_mem_steps: float):
    f = preinfo.fidelity
    r = preinfo.success_prob
    with np.errstate(divide="ignore"):
        decay = np.where(r > 0, np.exp(-1.0 / np.where(r > 0, r, 1.0) / t_mem_steps), 0.0)
    err = 1.0 - f * decay
    n = f.shape[0]
    eye = np.eye(n, dtype=bool)
    f = np.where(eye, 0.0, f)
    decay = np.where(eye, 0.0, decay)
    err = np.where(eye, 0.0, err)
    return f, decay, np.clip(err, 0.0, 1.0)


def encode_tokens(state, preinfo, t_mem_steps: float, dtype=np.float32) -> np.ndarray:
    """``N_q**2 x 7`` tokens; row ``i*N_q + j`` describes the ordered pair (i, j).

    Columns: fidelity, memory decay over the expected wait, expected error,
    link established, both endpoints idle, ``i/N_q``, ``j/N_q``.  The first
    three are zero on the diagonal."""
    n = state.n_qubits
    f, decay, err = _pre_dims(preinfo, t_mem_steps)
    idle = state.idle_mask()
    out = np.empty((n, n, N_DIM), dtype=dtype)
    out[..., 0] = f
    out[..., 1] = decay
    out[..., 2] = err
    out[..., 3] = state.established
    out[..., 4] = idle[:, None] & idle[None, :]
    idx = np.arange(n) / n
    out[..., 5] = idx[:, None]
    out[..., 6] = idx[None, :]
    return out.reshape(n * n, N_DIM)


def encode_qubits(state, preinfo, t_mem_steps: float, selected: int | None = None, dtype=np.float32) -> np.ndarray:
    """``N_q x 6`` per-qubit tokens for the qubit-level variant.

    Columns: mean expected error to every other qubit, cheapest expected
    error to a currently legal partner (1 if none), idle flag, ``i/N_q``,
    selection marker, expected error to the selected qubit (0 without a
    selection)."""
    n = state.n_qubits
    _, _, err = _pre_dims(preinfo, t_mem_steps)
    idle = state.idle_mask()
    legal = ~state.structural_mask() & idle[:, None] & idle[None, :]
    out = np.zeros((n, QUBIT_DIM), dtype=dtype)
    out[:, 0] = err.sum(axis=1) / max(n - 1, 1)
    masked = np.where(legal, err, 1.0)
    out[:, 1] = masked.min(axis=1) if n > 1 else 1.0
    out[:, 2] = idle
    out[:, 3] = np.arange(n) / n
    if selected is not None:
        out[selected, 4] = 1.0
        out[:, 5] = err[selected]
    return out
