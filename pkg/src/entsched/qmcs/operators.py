"""Operators on the two-node atom-cavity space.

Tensor factors are ordered (atom A, atom B, cavity A, cavity B).  Each atom
has the levels ``g_down, g_up, u_down, u_up`` and each cavity holds 0 or 1
photon, so the space has 4*4*2*2 = 64 dimensions and the basis index of
``|a, b, na, nb>`` is ``((a*4 + b)*2 + na)*2 + nb``.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import reduce

import numpy as np

G_DOWN, G_UP, U_DOWN, U_UP = range(4)
LEVELS = ("g_down", "g_up", "u_down", "u_up")
ATOM_DIM = 4
FOCK_DIM = 2
DIMS = (ATOM_DIM, ATOM_DIM, FOCK_DIM, FOCK_DIM)
DIM = ATOM_DIM * ATOM_DIM * FOCK_DIM * FOCK_DIM


def ket(n: int, k: int) -> np.ndarray:
    v = np.zeros(n, dtype=complex)
    v[k] = 1.0
    return v


def outer(n: int, row: int, col: int) -> np.ndarray:
    """``|row><col|`` on an ``n``-level system."""
    m = np.zeros((n, n), dtype=complex)
    m[row, col] = 1.0
    return m


def destroy(n: int) -> np.ndarray:
    return np.diag(np.sqrt(np.arange(1, n)).astype(complex), k=1)


def embed(op: np.ndarray, factor: int, dims=DIMS) -> np.ndarray:
    """Place ``op`` on tensor factor ``factor`` with identities elsewhere."""
    mats = [op if k == factor else np.eye(d, dtype=complex) for k, d in enumerate(dims)]
    return reduce(np.kron, mats)


def basis_index(a: int, b: int, na: int = 0, nb: int = 0) -> int:
    return ((a * ATOM_DIM + b) * FOCK_DIM + na) * FOCK_DIM + nb


def basis_state(a: int, b: int, na: int = 0, nb: int = 0) -> np.ndarray:
    return ket(DIM, basis_index(a, b, na, nb))


@dataclass(frozen=True)
class NodeOperators:
    """Atomic and cavity operators of one node, embedded in the full space."""

    sz_down: np.ndarray
    sz_up: np.ndarray
    sp_down: np.ndarray
    sm_down: np.ndarray
    sp_up: np.ndarray
    sm_up: np.ndarray
    sm_down_up: np.ndarray  # spin-flipping decay u_down -> g_up
    sm_up_down: np.ndarray  # spin-flipping decay u_up -> g_down
    sp_mw: np.ndarray  # microwave raising g_down -> g_up
    sm_mw: np.ndarray
    cavity: np.ndarray  # photon annihilation operator of this node's cavity


@dataclass(frozen=True)
class OperatorSet:
    A: NodeOperators
    B: NodeOperators
    c_det_a: np.ndarray  # (a + b)/sqrt(2), a click on detector A
    c_det_b: np.ndarray  # (a - b)/sqrt(2), a click on detector B
    identity: np.ndarray


def _node(atom_factor: int, cavity_factor: int) -> NodeOperators:
    o = lambda r, c: embed(outer(ATOM_DIM, r, c), atom_factor)
    return NodeOperators(
        sz_down=o(U_DOWN, U_DOWN) - o(G_DOWN, G_DOWN),
        sz_up=o(U_UP, U_UP) - o(G_UP, G_UP),
        sp_down=o(U_DOWN, G_DOWN),
        sm_down=o(G_DOWN, U_DOWN),
        sp_up=o(U_UP, G_UP),
        sm_up=o(G_UP, U_UP),
        sm_down_up=o(G_UP, U_DOWN),
        sm_up_down=o(G_DOWN, U_UP),
        sp_mw=o(G_UP, G_DOWN),
        sm_mw=o(G_DOWN, G_UP),
        cavity=embed(destroy(FOCK_DIM), cavity_factor),
    )


def build_operators() -> OperatorSet:
    A = _node(0, 2)
    B = _node(1, 3)
    s = 1.0 / np.sqrt(2.0)
    return OperatorSet(
        A=A,
        B=B,
        c_det_a=s * (A.cavity + B.cavity),
        c_det_b=s * (A.cavity - B.cavity),
        identity=np.eye(DIM, dtype=complex),
    )
