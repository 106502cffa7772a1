"""Quantum-jump simulation of two-node Barrett-Kok heralding."""
from .bk import BKConfig, BKResult, bk_cost, calibrate_pi_pulse, qmcs_csv, read_qmcs_csv, run_bk
from .hamiltonian import AtomCavityParams, NodeParams, PulseSpec, build_h0, build_h_pi, collapse_set, effective_hamiltonian
from .operators import build_operators
from .solvers import (
    bell_state,
    evolve_master_equation,
    fidelity,
    mc_ensemble,
    mc_trajectory,
    partial_trace,
    partial_trace_photons,
    trace_distance,
)
