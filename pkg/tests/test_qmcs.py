import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from entsched.errors import CalibrationError, ConfigError, DegenerateResult, IntegrationError
from entsched.qmcs import (
    AtomCavityParams,
    BKConfig,
    PulseSpec,
    bell_state,
    bk_cost,
    build_h0,
    build_operators,
    calibrate_pi_pulse,
    collapse_set,
    effective_hamiltonian,
    evolve_master_equation,
    fidelity,
    mc_ensemble,
    mc_trajectory,
    partial_trace,
    partial_trace_photons,
    qmcs_csv,
    read_qmcs_csv,
    run_bk,
    trace_distance,
)
from entsched.qmcs.benchmarks import AtomCavity, two_level_decay_times, unitary_oracle
from entsched.qmcs.bk import pulse_transfer, reachable
from entsched.qmcs.hamiltonian import h0_parts
from entsched.qmcs.operators import DIM, G_DOWN, G_UP, U_DOWN, U_UP, basis_index, basis_state
from entsched.qmcs.solvers import ground_block

OPS = build_operators()


def comm(a, b):
    return a @ b - b @ a


def rand_density(rng, d, rank=None):
    rank = rank or d
    x = rng.normal(size=(d, rank)) + 1j * rng.normal(size=(d, rank))
    rho = x @ x.conj().T
    return rho / np.trace(rho).real


def rand_ket(rng, d):
    v = rng.normal(size=d) + 1j * rng.normal(size=d)
    return v / np.linalg.norm(v)


# --- operators and Hamiltonian ------------------------------------------------

def test_operator_algebra():
    for node in (OPS.A, OPS.B):
        p = node.sp_down @ node.sm_down
        assert np.allclose(p @ p, p)
        a = node.cavity
        # on the vacuum block the commutator acts as the identity
        c = comm(a, a.conj().T)
        vac = [basis_index(x, y) for x in range(4) for y in range(4)]
        assert np.allclose(c[np.ix_(vac, vac)], np.eye(len(vac)))
    for x in (OPS.A.sp_down, OPS.A.sm_up, OPS.A.sz_down, OPS.A.cavity):
        for y in (OPS.B.sp_down, OPS.B.sm_up, OPS.B.sz_up, OPS.B.cavity):
            assert not comm(x, y).any()
    assert OPS.identity.shape == (DIM, DIM) == (64, 64)


def test_h0_matrix_element_and_hermiticity():
    p = AtomCavityParams.symmetric(g=3.7)
    h = build_h0(p, PulseSpec.centered(2.0, 0.1), 0.37)
    assert np.allclose(h, h.conj().T)
    bra = basis_state(U_DOWN, G_DOWN, 0, 0)
    ket = basis_state(G_DOWN, G_DOWN, 1, 0)
    assert bra.conj() @ h @ ket == pytest.approx(-3.7)
    # the spin-up optical transition is dropped
    assert not (h0_parts(p).static[:, basis_index(G_UP, G_UP, 0, 0)]).any()


def test_h0_without_coupling_or_drive_is_diagonal():
    p = AtomCavityParams.symmetric(g=0.0, det_cavity=0.3, det_down=-0.4)
    h = build_h0(p, None, 0.0)
    assert np.allclose(h, np.diag(np.diag(h)))
    assert np.diag(h)[basis_index(G_DOWN, G_DOWN, 1, 0)].real == pytest.approx(0.3 + 2 * 0.5 * 0.4)


@given(st.floats(0.1, 10), st.floats(0, 3), st.floats(0.5, 50), st.floats(0, 1))
def test_random_params_hermitian_and_damping_negative(g, kappa, chi, kdep):
    p = AtomCavityParams.symmetric(g=g, kappa=kappa, chi=chi, k_dep=kdep)
    h = build_h0(p, PulseSpec.centered(1.0, 0.05), 0.2)
    assert np.allclose(h, h.conj().T)
    cs = collapse_set(p)
    heff = effective_hamiltonian(h, [c.op for c in cs], [c.rate for c in cs])
    anti = (heff - heff.conj().T) / 2j
    assert np.linalg.eigvalsh(anti).max() <= 1e-12


def test_effective_hamiltonian_two_level():
    sm = np.array([[0, 1], [0, 0]], dtype=complex)
    h = np.diag([0.0, 1.0]).astype(complex)
    heff = effective_hamiltonian(h, [sm], [0.8])
    assert np.allclose(heff, np.diag([0.0, 1.0 - 0.4j]))
    assert np.array_equal(effective_hamiltonian(h, [], []), h)
    with pytest.raises(ValueError):
        effective_hamiltonian(h, [sm], [])


def test_detectors_split_the_cavity_leakage():
    a, b = OPS.A.cavity, OPS.B.cavity
    cd = OPS.c_det_a.conj().T @ OPS.c_det_a + OPS.c_det_b.conj().T @ OPS.c_det_b
    assert np.allclose(cd, a.conj().T @ a + b.conj().T @ b)


def test_collapse_set_and_ideal_limit():
    p = AtomCavityParams.symmetric().ideal()
    rates = {c.label: c.rate for c in collapse_set(p)}
    assert len(rates) == 16
    assert rates["flip_down_up_A"] == 0 and rates["dephase_up_B"] == 0 and rates["cavity_loss_A"] == 0
    assert rates["det_a"] == rates["det_b"] == 10.0


def test_reachable_subspace_excludes_spin_up_excited():
    from entsched.qmcs.bk import _Schedule

    sched = _Schedule(AtomCavityParams.symmetric(), calibrate_pi_pulse(0.03), BKConfig())
    S = set(sched.support.tolist())
    assert len(S) == 36
    assert not any(basis_index(U_UP, b, n, m) in S for b in range(4) for n in (0, 1) for m in (0, 1))
    chain = np.zeros((5, 5))
    chain[0, 1] = chain[3, 4] = 1
    assert reachable(chain, [1]).tolist() == [0, 1]


# --- state utilities ------------------------------------------------------------

def test_fidelity_properties():
    rng = np.random.default_rng(0)
    for _ in range(20):
        r = rand_density(rng, 4)
        assert fidelity(r, r) == pytest.approx(1.0, abs=1e-10)
        a, b = rand_ket(rng, 4), rand_ket(rng, 4)
        assert fidelity(np.outer(a, a.conj()), np.outer(b, b.conj())) == pytest.approx(abs(np.vdot(a, b)), abs=1e-10)
        s = rand_density(rng, 4, 2)
        assert fidelity(r, s) == pytest.approx(fidelity(s, r), abs=1e-10)
    e0, e1 = np.diag([1.0, 0]), np.diag([0, 1.0])
    assert fidelity(e0, e1) == pytest.approx(0.0, abs=1e-10)
    with pytest.raises(ValueError):
        fidelity(np.diag([1.5, -0.5]), e0)


def test_bell_states():
    plus, minus = bell_state(1), bell_state(-1)
    for b in (plus, minus):
        assert np.trace(b).real == pytest.approx(1.0)
        assert np.trace(b @ b).real == pytest.approx(1.0)
    assert fidelity(plus, minus) == pytest.approx(0.0, abs=1e-10)
    # basis order |dd>, |du>, |ud>, |uu>
    assert plus[2, 1] == pytest.approx(0.5)
    with pytest.raises(ValueError):
        bell_state(0)


def test_partial_traces():
    rng = np.random.default_rng(1)
    atoms = rand_ket(rng, 16)
    full = np.kron(atoms, np.eye(4)[0])  # photons in vacuum
    red = partial_trace_photons(full)
    assert np.allclose(red, np.outer(atoms, atoms.conj()))
    rho = rand_density(rng, 64)
    assert np.trace(partial_trace_photons(rho)).real == pytest.approx(1.0, abs=1e-12)
    assert np.allclose(partial_trace_photons(np.outer(full, full.conj())), red)
    # atom-photon Bell pair: (|g,0> + |u,1>)/sqrt(2) on a 2 x 2 space
    v = np.zeros(4, dtype=complex)
    v[0] = v[3] = 1 / np.sqrt(2)
    assert np.allclose(partial_trace(np.outer(v, v.conj()), [2, 2], [0]), np.eye(2) / 2)


def test_ground_block_ordering():
    psi = (basis_state(G_UP, G_DOWN) + basis_state(G_DOWN, G_UP)) / np.sqrt(2)
    blk = ground_block(partial_trace_photons(psi))
    assert fidelity(blk, bell_state(1)) == pytest.approx(1.0, abs=1e-12)
    with pytest.raises(ValueError):
        ground_block(partial_trace_photons(basis_state(U_DOWN, U_DOWN)))


def test_trace_distance_basics():
    rng = np.random.default_rng(2)
    r, s = rand_density(rng, 3), rand_density(rng, 3)
    assert trace_distance(r, r) == pytest.approx(0.0, abs=1e-14)
    assert 0 <= trace_distance(r, s) <= 1
    assert trace_distance(np.diag([1.0, 0]), np.diag([0, 1.0])) == pytest.approx(1.0)


# --- master equation ---------------------------------------------------------

def test_master_equation_matches_unitary_oracle():
    rng = np.random.default_rng(3)
    x = rng.normal(size=(6, 6)) + 1j * rng.normal(size=(6, 6))
    h = (x + x.conj().T) / 2
    rho0 = rand_density(rng, 6)
    out = evolve_master_equation(h, [], [], rho0, (0.0, 1.0), 1e-3)
    assert np.abs(out - unitary_oracle(h, rho0, 1.0)).max() < 1e-8
    # time-dependent path with a constant function gives the same answer
    out2 = evolve_master_equation(lambda t: h, [], [], rho0, (0.0, 1.0), 1e-3)
    assert np.abs(out2 - out).max() < 1e-10


def test_master_equation_two_level_decay():
    sm = np.array([[0, 1], [0, 0]], dtype=complex)
    rho0 = np.diag([0.0, 1.0]).astype(complex)
    for t in (0.5, 1.0, 2.0):
        out = evolve_master_equation(np.zeros((2, 2)), [sm], [1.3], rho0, (0.0, t), 1e-3)
        assert out[1, 1].real == pytest.approx(math.exp(-1.3 * t), abs=1e-6)
        assert np.trace(out).real == pytest.approx(1.0, abs=1e-8)


def test_master_equation_rejects_bad_input_and_drift():
    with pytest.raises(ValueError):
        evolve_master_equation(np.eye(2), [], [], np.diag([0.5, 0.6]), (0, 1), 0.1)
    sm = np.array([[0, 1], [0, 0]], dtype=complex)
    with pytest.raises(IntegrationError):
        evolve_master_equation(np.zeros((2, 2)), [sm], [100.0], np.diag([0, 1.0]).astype(complex), (0, 1), 0.05)


# --- trajectories ---------------------------------------------------------------

def test_unitary_trajectory_keeps_norm():
    rng = np.random.default_rng(4)
    x = rng.normal(size=(4, 4))
    h = (x + x.T) / 2
    psi0 = rand_ket(rng, 4)
    tr = mc_trajectory(h, [], [], psi0, (0, 3.0), 0.01, rng)
    assert tr.jump_times == []
    u = unitary_oracle(h, np.outer(psi0, psi0.conj()), 3.0)
    assert np.vdot(tr.final_state, u @ tr.final_state).real == pytest.approx(1.0, abs=1e-8)


def test_two_level_jump_times_are_exponential():
    ts = two_level_decay_times(2.0, 4000, np.random.default_rng(5), t_end=12.0)
    assert not np.isnan(ts).any()
    assert abs(ts.mean() - 0.5) < 0.05 * 0.5
    # median of an exponential is ln 2 / gamma
    assert abs(np.median(ts) - math.log(2) / 2.0) < 0.03


def test_trajectory_average_matches_master_equation():
    m = AtomCavity()
    ref = m.master_equation()
    avg = m.trajectory_average(400, np.random.default_rng(6))
    assert trace_distance(avg, ref) <= 5 / math.sqrt(400)


def test_ensemble_matches_single_trajectories_statistically():
    sm = np.array([[0, 1], [0, 0]], dtype=complex)
    heff = -0.5j * (sm.conj().T @ sm)
    e = mc_ensemble(heff, [sm], [1.0], np.array([0, 1], dtype=complex), (0, 1.0), 0.02, np.random.default_rng(7), 3000)
    frac = np.mean([len(t) > 0 for t in e.jump_times])
    assert abs(frac - (1 - math.exp(-1))) < 3 * math.sqrt(0.25 / 3000)
    assert np.allclose(np.linalg.norm(e.final_states, axis=1), 1.0)


def test_trajectory_errors():
    rng = np.random.default_rng(8)
    with pytest.raises(ValueError, match="normalised"):
        mc_trajectory(np.eye(2), [], [], np.array([1.0, 1.0]), (0, 1), 0.01, rng)
    sm = np.array([[0, 1], [0, 0]], dtype=complex)
    with pytest.raises(ValueError, match="resolve"):
        mc_trajectory(np.zeros((2, 2)), [sm], [10.0], np.array([0, 1.0]), (0, 1), 0.1, rng)
    bad = lambda t: np.array([[np.nan, 0], [0, 0]])
    with pytest.raises(IntegrationError):
        mc_trajectory(bad, [], [], np.array([1.0, 0]), (0, 1), 0.01, rng)


def test_trajectories_are_seed_deterministic():
    m = AtomCavity()
    a = m.trajectory_average(50, np.random.default_rng(9))
    b = m.trajectory_average(50, np.random.default_rng(9))
    assert np.array_equal(a, b)


# --- pulses and cost ---------------------------------------------------------------

def test_pi_pulse_calibration():
    p1 = calibrate_pi_pulse(0.05)
    p2 = calibrate_pi_pulse(0.10)
    assert p2.amplitude == pytest.approx(p1.amplitude / 2, rel=0.01)
    assert pulse_transfer(p1) >= 1 - 1e-4
    rk = calibrate_pi_pulse(0.05, dt=0.001)
    assert pulse_transfer(rk, dt=0.001) >= 1 - 1e-4
    # area close to the pulse-area theorem value pi/2 for a sigma_x drive
    assert p1.area == pytest.approx(math.pi / 2, rel=0.01)
    assert pulse_transfer(PulseSpec.centered(0.0, 0.05)) == 0.0
    with pytest.raises(ConfigError):
        calibrate_pi_pulse(0.0)


def test_pi_pulse_twice_is_identity():
    from entsched.qmcs.bk import _two_level_cg

    p = calibrate_pi_pulse(0.05)
    c = _two_level_cg(2 * p.amplitude, p.width, 10, None, 0.0)
    # two back-to-back pi pulses equal one pulse of twice the area
    assert abs(c[0]) ** 2 >= 1 - 5e-4


def test_lossy_calibration_can_fail():
    with pytest.raises(CalibrationError):
        calibrate_pi_pulse(0.05, loss_free=False, decay=200.0)


def test_bk_cost():
    c, b = bk_cost([0.97] * 4, [0.2] * 4, 1000)
    assert c == pytest.approx(0.0348378951830981560, abs=1e-15)
    assert b == 1
    c, b = bk_cost([1, 0, 0, 0], [1e6, 0.1, 0.1, 0.1], 1000)
    assert b == 1 and c < 1e-8
    assert bk_cost([0.9, 0.99, 0.5, 0.5], [0.1, 0.0, 0.1, 0.1], 1000)[1] == 1
    assert bk_cost([0.9, 0.95, 0.5, 0.5], [0.1, 0.1, 0.1, 0.1], 1000)[1] == 2


# --- the protocol ----------------------------------------------------------------------

def test_bk_config_validation():
    with pytest.raises(ConfigError):
        BKConfig(tau=0.5, t_wait=2.0).validate()
    with pytest.raises(ConfigError):
        BKConfig(branch_signs=(1, 1, 0, 1)).validate()
    with pytest.raises(ConfigError):
        BKConfig(collapse_draw="maybe").validate()


@pytest.fixture(scope="module")
def small_runs():
    cfg = BKConfig(n_traj=60, n_traj2=40, seed=3)
    ideal = run_bk(AtomCavityParams.symmetric().ideal(), cfg)
    again = run_bk(AtomCavityParams.symmetric().ideal(), cfg)
    lossy = run_bk(AtomCavityParams.symmetric(chi=2.0, k_dep=0.0, kappa=0.0), cfg)
    return cfg, ideal, again, lossy


def test_bk_is_deterministic(small_runs):
    _, a, b, _ = small_runs
    assert a.counts == b.counts
    assert a.branch_fidelities == b.branch_fidelities


def test_bk_bookkeeping(small_runs):
    cfg, a, _, _ = small_runs
    assert sum(a.counts) <= cfg.n_traj * cfg.n_traj2
    assert a.round1_successes <= cfg.n_traj
    assert a.branch_rates == tuple(c / (cfg.n_traj * cfg.n_traj2) for c in a.counts)
    costs = [1 - f * math.exp(-1 / (cfg.t_mem_steps * r)) if r > 0 else 1.0 for f, r in zip(a.branch_fidelities, a.branch_rates)]
    assert a.chosen_branch == int(np.argmin(costs)) + 1
    assert a.cost == pytest.approx(min(costs))
    assert a.total_rate <= 0.5 + 3 * math.sqrt(0.25 / (cfg.n_traj * cfg.n_traj2))
    for blk in a.rho.values():
        assert np.trace(blk).real == pytest.approx(1.0)


def test_spin_flips_lower_the_fidelity(small_runs):
    _, ideal, _, lossy = small_runs
    assert lossy.chosen_fidelity < ideal.chosen_fidelity


def test_bk_degenerate_result():
    with pytest.raises(DegenerateResult):
        run_bk(AtomCavityParams.symmetric(k_det=0.0).ideal(), BKConfig(n_traj=5, n_traj2=5))


def test_qmcs_csv_round_trip(tmp_path, small_runs):
    _, a, _, _ = small_runs
    p = tmp_path / "q.csv"
    p.write_text(qmcs_csv({(0, 1): a}))
    assert read_qmcs_csv(p) == {(0, 1): (a.chosen_fidelity, a.chosen_rate)}
    (tmp_path / "bad.csv").write_text("x,y\n")
    with pytest.raises(ConfigError):
        read_qmcs_csv(tmp_path / "bad.csv")
