"""Small reference problems for checking the trajectory solver against the
master equation and against closed forms."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.linalg import expm

from .operators import destroy, outer
from .solvers import evolve_master_equation, mc_ensemble, trace_distance


def two_level_decay_times(gamma: float, n_traj: int, rng: np.random.Generator, t_end: float | None = None, dt: float | None = None):
    """First jump time of ``n_traj`` excited two-level atoms decaying at ``gamma``.

    Trajectories that have not jumped by ``t_end`` (default ``12/gamma``)
    report ``nan``."""
    t_end = 12.0 / gamma if t_end is None else t_end
    dt = 0.05 / gamma if dt is None else dt
    sm = np.array([[0, 1], [0, 0]], dtype=complex)  # |g><e| with basis (g, e)
    heff = -0.5j * gamma * (sm.conj().T @ sm)
    ens = mc_ensemble(heff, [sm], [gamma], np.array([0, 1], dtype=complex), (0.0, t_end), dt, rng, n_traj)
    return np.array([ts[0] if ts else np.nan for ts in ens.jump_times])


@dataclass
class AtomCavity:
    """One four-level atom in a single-mode cavity with Fock cutoff 1 (dim 8).

    Levels ``g_down, g_up, u_down, u_up``; the laser and the cavity act on
    ``g_down <-> u_down`` only."""

    g: float = 2.0
    omega: float = 1.0
    gamma: float = 1.0
    flip: float = 0.2
    kappa: float = 1.0
    k_dep: float = 0.1
    t_end: float = 2.0

    def operators(self):
        atom = lambda r, c: np.kron(outer(4, r, c), np.eye(2))
        a = np.kron(np.eye(4), destroy(2))
        sp = atom(2, 0)
        h = self.omega * (sp + sp.conj().T) - self.g * (sp @ a + sp.conj().T @ a.conj().T)
        cs = [atom(0, 2), atom(1, 2), a, atom(2, 2) - atom(0, 0)]
        rates = [self.gamma, self.flip, self.kappa, self.k_dep]
        return h, cs, rates

    def psi0(self):
        v = np.zeros(8, dtype=complex)
        v[0] = v[2] = 1 / np.sqrt(2)  # (|g_down> + |g_up>)/sqrt(2) with an empty cavity
        return v

    def master_equation(self, dt: float = 1e-3) -> np.ndarray:
        h, cs, rates = self.operators()
        p = self.psi0()
        return evolve_master_equation(h, cs, rates, np.outer(p, p.conj()), (0.0, self.t_end), dt)

    def trajectory_average(self, n_traj: int, rng: np.random.Generator, dt: float = 0.01) -> np.ndarray:
        h, cs, rates = self.operators()
        heff = h - 0.5j * sum(g * c.conj().T @ c for c, g in zip(cs, rates))
        ens = mc_ensemble(heff, cs, rates, self.psi0(), (0.0, self.t_end), dt, rng, n_traj)
        Y = ens.final_states
        return Y.T @ Y.conj() / n_traj


def convergence_distances(model: AtomCavity, sizes, repeats: int, seed: int = 0) -> dict:
    """Mean trace distance between trajectory averages and the master
    equation for each ensemble size, over ``repeats`` independent ensembles."""
    ref = model.master_equation()
    out = {}
    for n in sizes:
        d = []
        for k in range(repeats):
            rng = np.random.default_rng([seed, n, k])
            d.append(trace_distance(model.trajectory_average(n, rng), ref))
        out[n] = float(np.mean(d))
    return out


def unitary_oracle(h: np.ndarray, rho0: np.ndarray, t: float) -> np.ndarray:
    u = expm(-1j * np.asarray(h, dtype=complex) * t)
    return u @ rho0 @ u.conj().T
