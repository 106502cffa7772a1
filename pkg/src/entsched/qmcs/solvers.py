"""Quantum-jump trajectories, the Lindblad master equation and state utilities."""
from __future__ import annotations

import math
from typing import Callable, NamedTuple, Sequence

import numpy as np
import scipy.sparse as sp

from ..errors import IntegrationError
from .operators import ATOM_DIM, DIMS, FOCK_DIM, G_DOWN, G_UP


# --- state utilities -------------------------------------------------------

def partial_trace(rho: np.ndarray, dims: Sequence[int], keep: Sequence[int]) -> np.ndarray:
    """Reduce ``rho`` over every tensor factor not listed in ``keep``."""
    dims = list(dims)
    n = len(dims)
    keep = sorted(keep)
    t = np.asarray(rho).reshape(dims + dims)
    gone = [k for k in range(n) if k not in keep]
    # trace factors from the highest index down so positions stay valid
    for k in sorted(gone, reverse=True):
        m = t.ndim // 2
        t = np.trace(t, axis1=k, axis2=k + m)
    d = int(np.prod([dims[k] for k in keep]))
    return t.reshape(d, d)


def as_density(state: np.ndarray) -> np.ndarray:
    state = np.asarray(state)
    return np.outer(state, state.conj()) if state.ndim == 1 else state


def partial_trace_photons(state: np.ndarray) -> np.ndarray:
    """16x16 two-atom density matrix from a 64-dim state or density matrix."""
    state = np.asarray(state)
    if state.ndim == 1:
        # contract the photon indices directly; avoids the 64x64 outer product
        psi = state.reshape(ATOM_DIM * ATOM_DIM, FOCK_DIM * FOCK_DIM)
        return psi @ psi.conj().T
    return partial_trace(state, DIMS, keep=(0, 1))


GROUND_INDEX = np.array([a * ATOM_DIM + b for a in (G_DOWN, G_UP) for b in (G_DOWN, G_UP)])


def ground_block(rho_atoms: np.ndarray, normalize: bool = True) -> np.ndarray:
    """4x4 block of a two-atom density matrix on {g_down, g_up} x {g_down, g_up}.

    Basis order ``|down down>, |down up>, |up down>, |up up>``."""
    blk = rho_atoms[np.ix_(GROUND_INDEX, GROUND_INDEX)]
    if normalize:
        tr = np.trace(blk).real
        if not tr > 0:
            raise ValueError("state has no weight in the ground-state manifold")
        blk = blk / tr
    return blk


def bell_state(sign: int) -> np.ndarray:
    """``(|up down> + sign |down up>)/sqrt(2)`` as a 4x4 density matrix."""
    if sign not in (1, -1):
        raise ValueError(f"sign must be +1 or -1, got {sign}")
    v = np.zeros(4, dtype=complex)
    v[2] = 1.0  # |up down>
    v[1] = sign  # |down up>
    v /= math.sqrt(2.0)
    return np.outer(v, v.conj())


def _check_density(rho, name, tol=1e-8):
    if not np.allclose(rho, rho.conj().T, atol=tol):
        raise ValueError(f"{name} is not Hermitian")
    if abs(np.trace(rho).real - 1.0) > tol:
        raise ValueError(f"{name} has trace {np.trace(rho).real!r}, expected 1")
    w = np.linalg.eigvalsh(0.5 * (rho + rho.conj().T))
    if w.min() < -tol:
        raise ValueError(f"{name} is not positive semidefinite (eigenvalue {w.min():.3e})")
    return w


def _sqrtm_psd(rho):
    w, v = np.linalg.eigh(0.5 * (rho + rho.conj().T))
    # eigenvalues at round-off level are zero; their square roots (~1e-8)
    # would otherwise leak into the fidelity of pure states
    w = np.where(w > 1e-14 * max(w.max(), 1e-300), w, 0.0)
    return (v * np.sqrt(w)) @ v.conj().T


def fidelity(rho1: np.ndarray, rho2: np.ndarray) -> float:
    """``Tr sqrt(sqrt(rho1) rho2 sqrt(rho1))``, clamped to [0, 1].

    Evaluated as the trace norm of ``sqrt(rho1) sqrt(rho2)``, which equals
    the usual form and is accurate for rank-deficient states."""
    rho1 = np.asarray(rho1, dtype=complex)
    rho2 = np.asarray(rho2, dtype=complex)
    _check_density(rho1, "rho1")
    _check_density(rho2, "rho2")
    sv = np.linalg.svd(_sqrtm_psd(rho1) @ _sqrtm_psd(rho2), compute_uv=False)
    return float(min(1.0, max(0.0, sv.sum())))


def trace_distance(rho1: np.ndarray, rho2: np.ndarray) -> float:
    d = np.asarray(rho1) - np.asarray(rho2)
    return 0.5 * float(np.abs(np.linalg.eigvalsh(0.5 * (d + d.conj().T))).sum())


# --- quantum-jump trajectories -----------------------------------------------

class Trajectory(NamedTuple):
    jump_times: list
    jump_ops: list
    final_state: np.ndarray
    t_final: float


class Ensemble(NamedTuple):
    jump_times: list  # one list per trajectory
    jump_ops: list
    final_states: np.ndarray  # (n_traj, d), normalised
    t_final: float


def _rk4(f, t, y, h):
    k1 = f(t, y)
    k2 = f(t + 0.5 * h, y + 0.5 * h * k1)
    k3 = f(t + 0.5 * h, y + 0.5 * h * k2)
    k4 = f(t + h, y + h * k3)
    return y + (h / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)


def select_collapse(psi, collapse_ops, rates, u: float) -> int:
    """Smallest ``k`` whose cumulative jump probability reaches ``u``."""
    w = np.array([g * float(np.vdot(c @ psi, c @ psi).real) if g else 0.0 for c, g in zip(collapse_ops, rates)])
    total = w.sum()
    if not total > 0:
        raise IntegrationError("jump requested but every collapse channel has zero weight", math.nan)
    cum = np.cumsum(w) / total
    return int(min(np.searchsorted(cum, u, side="left"), len(cum) - 1))


def _sqnorm(y):
    return (y.real ** 2 + y.imag ** 2).sum(axis=-1)


class _Generator:
    """Right-hand side ``-i H_eff(t) psi`` for row-stacked states."""

    def __init__(self, h_eff):
        self.fn = h_eff if callable(h_eff) else None
        self.const = None if callable(h_eff) else np.asarray(h_eff, dtype=complex).T.copy()

    def __call__(self, t, y):
        if self.const is not None:
            return -1j * (y @ self.const)
        t = np.broadcast_to(np.asarray(t, dtype=float).reshape(-1), (y.shape[0],))
        if np.all(t == t[0]):
            return -1j * (y @ np.asarray(self.fn(float(t[0]))).T)
        return np.stack([-1j * (np.asarray(self.fn(float(ti))) @ yi) for ti, yi in zip(t, y)])


def _rk4_rows(f, t, y, h):
    """RK4 with a separate start time and step length for every row."""
    hh = np.asarray(h, dtype=float)[:, None]
    tt = np.asarray(t, dtype=float)
    hv = hh[:, 0]
    k1 = f(tt, y)
    k2 = f(tt + 0.5 * hv, y + 0.5 * hh * k1)
    k3 = f(tt + 0.5 * hv, y + 0.5 * hh * k2)
    k4 = f(tt + hv, y + hh * k3)
    return y + (hh / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)


def mc_ensemble(
    h_eff,
    collapse_ops,
    rates,
    psi0: np.ndarray,
    t_span: tuple[float, float],
    dt: float,
    rng: np.random.Generator,
    n_traj: int,
    *,
    tol: float = 1e-9,
    reuse_r: bool = False,
) -> Ensemble:
    """``n_traj`` independent trajectories advanced together.

    Same algorithm as :func:`mc_trajectory` (which is this function with one
    trajectory): a shared step-doubling RK4 step, and for every trajectory
    whose squared norm falls to its threshold ``r`` a bisection of the
    crossing to ``dt/100``, a collapse, renormalisation and a fresh ``r``.
    Random numbers are consumed in trajectory order within each step."""
    psi0 = np.asarray(psi0, dtype=complex)
    if abs(np.linalg.norm(psi0) - 1.0) > 1e-8:
        raise ValueError("psi0 must be normalised")
    max_rate = max([abs(g) for g in rates], default=0.0)
    if dt * max_rate > 0.05 + 1e-12:
        raise ValueError(f"dt={dt} does not resolve the fastest rate {max_rate} (need dt*rate <= 0.05)")
    f = _Generator(h_eff)
    ops = [np.asarray(c, dtype=complex) for c in collapse_ops]
    t, t_end = float(t_span[0]), float(t_span[1])
    Y = np.tile(psi0, (n_traj, 1))
    r = rng.random(n_traj)
    times = [[] for _ in range(n_traj)]
    chosen = [[] for _ in range(n_traj)]
    res = dt / 100.0
    hcur = dt

    def jump(rows, ts, states):
        out = np.empty_like(states)
        for k, (row, tj, s) in enumerate(zip(rows, ts, states)):
            u = r[row] if reuse_r else rng.random()
            c = select_collapse(s, ops, rates, u)
            new = ops[c] @ s
            nrm = np.linalg.norm(new)
            if not nrm > 0 or not np.isfinite(nrm):
                raise IntegrationError("collapse produced a zero or non-finite state", float(tj))
            out[k] = new / nrm
            times[row].append(float(tj))
            chosen[row].append(c)
            r[row] = rng.random()
        return out

    def settle(rows, t0, states, dur, stepped):
        # rows crossed their threshold within [t0, t0 + dur]; ``stepped`` is
        # the state at t0 + dur.  Loop until each row reaches t0 + dur.
        t0 = np.full(len(rows), t0, dtype=float)
        dur = np.asarray(dur, dtype=float)
        while len(rows):
            lo = np.zeros(len(rows))
            hi = dur.copy()
            s_hi = stepped
            while np.any(hi - lo > res):
                mid = 0.5 * (lo + hi)
                s = _rk4_rows(f, t0, states, mid)
                above = _sqnorm(s) > r[rows]
                lo = np.where(above, mid, lo)
                hi = np.where(above, hi, mid)
                s_hi = np.where(above[:, None], s_hi, s)
            tj = t0 + hi
            states = jump(rows, tj, s_hi)
            rem = dur - hi
            t0, dur = tj, rem
            live = rem > 1e-15
            done_rows = rows[~live]
            Y[done_rows] = states[~live]
            rows, t0, dur, states = rows[live], t0[live], dur[live], states[live]
            if not len(rows):
                break
            stepped = _rk4_rows(f, t0, states, dur)
            again = _sqnorm(stepped) <= r[rows]
            Y[rows[~again]] = stepped[~again]
            rows, t0, dur, states, stepped = rows[again], t0[again], dur[again], states[again], stepped[again]
            if len(t0):
                t0 = t0.copy()

    while t < t_end - 1e-15:
        h = min(hcur, dt, t_end - t)
        full = _rk4(f, t, Y, h)
        half = _rk4(f, t + 0.5 * h, _rk4(f, t, Y, 0.5 * h), 0.5 * h)
        diff = half - full
        err = float(np.sqrt(_sqnorm(diff).max())) if len(Y) else 0.0
        if not np.isfinite(err):
            raise IntegrationError("non-finite state during integration", t)
        if err > tol and h > res:
            hcur = max(res, 0.9 * h * (tol / err) ** 0.2)
            continue
        cross = _sqnorm(half) <= r
        keep = ~cross
        start = Y.copy()
        Y[keep] = half[keep]
        rows = np.flatnonzero(cross)
        if len(rows):
            settle(rows, t, start[rows], np.full(len(rows), h), half[rows])
        t += h
        hcur = dt if err == 0 else min(dt, 0.9 * h * (tol / err) ** 0.2)
    nrm = np.sqrt(_sqnorm(Y))
    if np.any(~(nrm > 0)):
        raise IntegrationError("state vanished", t)
    return Ensemble(times, chosen, Y / nrm[:, None], t)


def mc_trajectory(
    h_eff,
    collapse_ops,
    rates,
    psi0: np.ndarray,
    t_span: tuple[float, float],
    dt: float,
    rng: np.random.Generator,
    *,
    tol: float = 1e-9,
    reuse_r: bool = False,
) -> Trajectory:
    """One Monte Carlo wave-function trajectory.

    ``h_eff`` is the effective Hamiltonian, a matrix or a function of time.
    The unnormalised state is integrated with step-doubling RK4 (steps at most
    ``dt``) until its squared norm falls to a uniform draw ``r``; the crossing
    is bisected to ``dt/100``.  A collapse operator is then chosen with
    probability proportional to ``rate * |C psi|^2`` using a fresh uniform (or
    ``r`` itself with ``reuse_r``), applied, and the state renormalised.
    """
    e = mc_ensemble(h_eff, collapse_ops, rates, psi0, t_span, dt, rng, 1, tol=tol, reuse_r=reuse_r)
    return Trajectory(e.jump_times[0], e.jump_ops[0], e.final_states[0], e.t_final)


# --- master equation ---------------------------------------------------------

def liouvillian(h, collapse_ops, rates, with_hamiltonian: bool = True) -> sp.csr_matrix:
    """Sparse generator on row-major vectorised density matrices.

    Uses ``vec(A rho B) = (A kron B^T) vec(rho)``."""
    d = np.asarray(collapse_ops[0] if len(collapse_ops) else h).shape[0]
    eye = sp.identity(d, dtype=complex, format="csr")
    L = sp.csr_matrix((d * d, d * d), dtype=complex)
    heff = np.zeros((d, d), dtype=complex)
    if with_hamiltonian and h is not None:
        heff = heff + np.asarray(h, dtype=complex)
    for c, g in zip(collapse_ops, rates):
        if g:
            c = np.asarray(c, dtype=complex)
            heff = heff - 0.5j * g * (c.conj().T @ c)
            cs = sp.csr_matrix(c)
            L = L + g * sp.kron(cs, cs.conj(), format="csr")
    hs = sp.csr_matrix(heff)
    L = L - 1j * sp.kron(hs, eye, format="csr") + 1j * sp.kron(eye, hs.conj(), format="csr")
    L.eliminate_zeros()
    return L.tocsr()


def evolve_master_equation(
    h,
    collapse_ops,
    rates,
    rho0: np.ndarray,
    t_span: tuple[float, float],
    dt: float,
    *,
    drives: Sequence[tuple[np.ndarray, Callable]] = (),
    trace_tol: float = 1e-6,
) -> np.ndarray:
    """Fixed-step RK4 integration of the Lindblad equation.

    ``h`` is a constant Hamiltonian (or ``None``) or a function of time.  For
    large systems pass the constant part as ``h`` and time-dependent terms as
    ``drives = [(operator, envelope), ...]``; the generator is then applied as
    a sparse Liouvillian.  ``rho0`` may carry leading batch dimensions.  The
    state is re-symmetrised after every step."""
    rho = np.array(rho0, dtype=complex)
    d = rho.shape[-1]
    batch = rho.shape[:-2]
    if not np.allclose(rho, np.swapaxes(rho, -1, -2).conj(), atol=1e-10):
        raise ValueError("rho0 must be Hermitian")
    tr0 = np.trace(rho, axis1=-2, axis2=-1).real
    if np.any(np.abs(tr0 - 1.0) > 1e-10):
        raise ValueError("rho0 must have unit trace")
    t0, t1 = float(t_span[0]), float(t_span[1])
    n_steps = max(1, int(math.ceil((t1 - t0) / dt - 1e-9)))
    step = (t1 - t0) / n_steps

    if callable(h):
        ops = [np.asarray(c, dtype=complex) for c, g in zip(collapse_ops, rates) if g]
        gs = [g for g in rates if g]
        damp = sum((g * (c.conj().T @ c) for c, g in zip(ops, gs)), np.zeros((d, d), dtype=complex))

        def rhs(t, r):
            heff = np.asarray(h(t), dtype=complex) - 0.5j * damp
            out = -1j * (heff @ r) + 1j * (r @ heff.conj().T)
            for c, g in zip(ops, gs):
                out += g * (c @ r @ c.conj().T)
            return out

        y = rho
    else:
        L0 = liouvillian(h, collapse_ops, rates)
        Ld = [(liouvillian(op, [], [], True), fn) for op, fn in drives]
        y = rho.reshape(-1, d * d).T.copy()  # columns are vectorised states

        def rhs(t, x):
            out = L0 @ x
            for Lk, fn in Ld:
                c = float(fn(t))
                if c:
                    out += c * (Lk @ x)
            return out

    t = t0
    for _ in range(n_steps):
        y = _rk4(rhs, t, y, step)
        t += step
        if callable(h):
            y = 0.5 * (y + np.swapaxes(y, -1, -2).conj())
        else:
            m = y.T.reshape(-1, d, d)
            m = 0.5 * (m + np.swapaxes(m, -1, -2).conj())
            y = m.reshape(-1, d * d).T.copy()
        cur = y if callable(h) else y.T.reshape(-1, d, d)
        tr = np.trace(cur, axis1=-2, axis2=-1).real
        if not np.all(np.isfinite(tr)):
            raise IntegrationError("non-finite density matrix", t)
        if np.any(np.abs(tr - 1.0) > trace_tol):
            raise IntegrationError(f"trace drifted to {tr.ravel()[np.argmax(np.abs(tr - 1.0))]!r}; reduce dt", t)
    if callable(h):
        return y
    return y.T.reshape(batch + (d, d))
