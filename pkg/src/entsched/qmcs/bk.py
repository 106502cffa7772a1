"""Two-round Barrett-Kok heralding simulated with quantum-jump trajectories.

Both rounds share one schedule: a Gaussian laser pulse on the ``g_down ->
u_down`` transition of both atoms, then free evolution up to ``t_wait``
(the detection window) and on to ``t_wait + t_relax``.  A round succeeds
when exactly one detector click happens, at a time no later than ``t_wait``.
Between the rounds the surviving states receive a microwave pi pulse
computed with the master equation.

The batched engine propagates many trajectories at once with exact
propagators of the effective Hamiltonian.  The laser pulse is treated as
piecewise constant (midpoint value on each segment).  All times live on an
integer tick grid, and the first time a trajectory's squared norm falls to
its threshold is located to one tick by a binary ladder of propagators
``exp(-i H_eff 2^j tick)``.
"""
from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import expm
from scipy.optimize import brentq

from .. import rng as rngmod
from ..errors import CalibrationError, ConfigError, DegenerateResult
from .hamiltonian import (
    DETECTOR_A,
    DETECTOR_B,
    AtomCavityParams,
    PulseSpec,
    collapse_set,
    effective_hamiltonian,
    h0_parts,
    mw_drive,
    operators,
)
from .operators import DIM, G_DOWN, G_UP, basis_index, basis_state
from .solvers import bell_state, evolve_master_equation, fidelity, ground_block

BRANCHES = ("AA", "AB", "BA", "BB")


# --- pulse calibration -------------------------------------------------------

def _two_level_cg(amplitude, width, segments_per_width, dt, decay):
    """Amplitude left in the lower level after a pulse on an isolated
    two-level system, propagated the same way the simulation does."""
    pulse = PulseSpec.centered(amplitude, width)
    t_end = pulse.end
    if dt is None:
        n = 8 * segments_per_width
        h = t_end / n
        c = np.array([1.0, 0.0], dtype=complex)
        for k in range(n):
            om = float(pulse((k + 0.5) * h))
            H = np.array([[0.0, om], [om, -0.5j * decay]], dtype=complex)
            c = expm(-1j * H * h) @ c
        return c
    n = max(1, int(math.ceil(t_end / dt - 1e-9)))
    h = t_end / n

    def f(t, c):
        om = float(pulse(t))
        return -1j * np.array([om * c[1], om * c[0] - 0.5j * decay * c[1]])

    c = np.array([1.0, 0.0], dtype=complex)
    t = 0.0
    for _ in range(n):
        k1 = f(t, c)
        k2 = f(t + h / 2, c + h / 2 * k1)
        k3 = f(t + h / 2, c + h / 2 * k2)
        k4 = f(t + h, c + h * k3)
        c = c + h / 6 * (k1 + 2 * k2 + 2 * k3 + k4)
        t += h
    return c


def calibrate_pi_pulse(
    width: float,
    *,
    segments_per_width: int = 10,
    dt: float | None = None,
    loss_free: bool = True,
    decay: float = 0.0,
) -> PulseSpec:
    """Gaussian pulse of the given width that inverts a resonant two-level
    transition driven by ``amplitude(t) * sigma_x``.

    With ``dt=None`` the pulse is propagated as piecewise constant over
    ``8 * segments_per_width`` segments, as the trajectory engine does;
    otherwise with fixed-step RK4 at step ``dt``, as the master equation does.
    Unless ``loss_free``, the upper level decays at rate ``decay`` while
    driven.  The amplitude is the root of the real part of the lower-level
    amplitude, bracketed around the pulse-area estimate."""
    if not width > 0:
        raise ConfigError(f"pulse width must be positive, got {width}")
    gam = 0.0 if loss_free else float(decay)
    guess = (math.pi / 2.0) / (width * math.sqrt(2.0 * math.pi))
    fn = lambda a: _two_level_cg(a, width, segments_per_width, dt, gam)[0].real
    lo, hi = 0.5 * guess, 1.5 * guess
    try:
        amp = brentq(fn, lo, hi, xtol=1e-14 * guess, rtol=1e-14)
    except ValueError:
        raise CalibrationError(f"no pi-pulse root in [{lo:.4g}, {hi:.4g}] for width {width}") from None
    return PulseSpec.centered(amp, width)


def pulse_transfer(pulse: PulseSpec, *, segments_per_width: int = 10, dt: float | None = None) -> float:
    """Population moved to the upper level of an ideal two-level system."""
    c = _two_level_cg(pulse.amplitude, pulse.width, segments_per_width, dt, 0.0)
    return float(abs(c[1]) ** 2)


# --- cost --------------------------------------------------------------------

def bk_cost(fidelities, rates, t_mem_steps: float) -> tuple[float, int]:
    """Lowest expected link error over the four branches and its 1-based index.

    A branch with zero rate costs 1; ties go to the lowest index."""
    if not t_mem_steps > 0:
        raise ConfigError(f"t_mem_steps must be positive, got {t_mem_steps}")
    costs = []
    for f, r in zip(fidelities, rates):
        costs.append(1.0 - f * math.exp(-1.0 / (t_mem_steps * r)) if r > 0 else 1.0)
    best = int(np.argmin(costs))  # argmin returns the first minimum
    return float(costs[best]), best + 1


# --- configuration and result ------------------------------------------------

@dataclass
class BKConfig:
    n_traj: int = 300
    n_traj2: int = 300
    t_wait: float = 2.0
    t_relax: float = 1.0
    tau: float = 0.03  # laser pulse width, short against the Purcell emission time
    tau_mw: float | None = None  # microwave pulse width, defaults to tau
    segments_per_width: int = 10
    tick_levels: int = 4  # each pulse segment spans 2**tick_levels ticks
    mw_dt: float = 0.005
    branch_signs: tuple = (1, -1, -1, -1)  # Bell target sign per branch AA, AB, BA, BB
    collapse_draw: str = "fresh"  # or "reuse": pick the collapse with the norm threshold itself
    t_mem_steps: float = 6.0e3
    normalization: float = 1.0
    chunk: int = 50_000
    seed: int = 0

    def validate(self):
        if self.n_traj < 1 or self.n_traj2 < 1:
            raise ConfigError("n_traj and n_traj2 must be positive")
        if not self.tau > 0 or (self.tau_mw is not None and not self.tau_mw > 0):
            raise ConfigError("pulse widths must be positive")
        if not self.t_wait >= 8.0 * self.tau:
            raise ConfigError(f"t_wait={self.t_wait} ends before the laser pulse (8*tau={8 * self.tau})")
        if self.t_relax < 0:
            raise ConfigError("t_relax must be non-negative")
        if len(self.branch_signs) != 4 or any(s not in (1, -1) for s in self.branch_signs):
            raise ConfigError(f"branch_signs must be four entries of +1/-1, got {self.branch_signs}")
        if self.collapse_draw not in ("fresh", "reuse"):
            raise ConfigError(f"collapse_draw must be 'fresh' or 'reuse', got {self.collapse_draw!r}")
        if self.segments_per_width < 1 or self.tick_levels < 0 or self.chunk < 1:
            raise ConfigError("segments_per_width, chunk must be positive and tick_levels non-negative")
        if not self.normalization > 0:
            raise ConfigError("normalization must be positive")
        return self


@dataclass
class BKResult:
    branch_fidelities: tuple
    branch_rates: tuple
    counts: tuple  # n_AA, n_AB, n_BA, n_BB
    cost: float
    chosen_branch: int  # 1..4
    n_traj: int
    n_traj2: int
    normalization: float = 1.0
    round1_successes: int = 0
    rho: dict = field(default_factory=dict, repr=False)  # branch -> 4x4 ground-state block

    @property
    def chosen_fidelity(self) -> float:
        return self.branch_fidelities[self.chosen_branch - 1]

    @property
    def chosen_rate(self) -> float:
        return self.branch_rates[self.chosen_branch - 1]

    @property
    def total_rate(self) -> float:
        return float(sum(self.branch_rates))


# --- trajectory engine ---------------------------------------------------------

def _sqnorm(y):
    return (y.real ** 2 + y.imag ** 2).sum(axis=-1)


class _Schedule:
    """Tick grid, segment propagators and collapse data for one round."""

    def __init__(self, params: AtomCavityParams, pulse: PulseSpec, config: BKConfig):
        ops = operators()
        parts = h0_parts(params, ops)
        cols = collapse_set(params, ops)
        self.labels = [c.label for c in cols]
        self.det_a = self.labels.index(DETECTOR_A)
        self.det_b = self.labels.index(DETECTOR_B)
        keep = [k for k, c in enumerate(cols) if c.rate > 0]
        self.channel = np.array(keep)
        self.ops = np.stack([cols[k].op for k in keep])
        self.rates = np.array([cols[k].rate for k in keep])
        damp = effective_hamiltonian(np.zeros_like(parts.static), [c.op for c in cols], [c.rate for c in cols])
        drive = parts.drive_a + parts.drive_b

        seg = pulse.width / config.segments_per_width
        sub = 1 << config.tick_levels
        self.tick = seg / sub
        n_pulse = 8 * config.segments_per_width
        t_end = config.t_wait + config.t_relax
        self.wait_tick = int(round(config.t_wait / self.tick))
        self.end_tick = int(round(t_end / self.tick))
        tail = self.end_tick - n_pulse * sub
        hams = [(sub, parts.static + float(pulse((k + 0.5) * seg)) * drive + damp) for k in range(n_pulse)]
        if tail > 0:
            hams.append((tail, parts.static + damp))
        # Work in the subspace reachable from the ground manifold; it excludes
        # every state with an atom in u_up and roughly halves the dimension.
        coupling = sum(np.abs(h) for _, h in hams) + np.abs(mw_drive(ops)) + sum(np.abs(c) for c in self.ops)
        self.support = reachable(coupling, ground_support())
        S = self.support
        self.ops = np.ascontiguousarray(self.ops[:, S][:, :, S])
        self.segments = [(n_ticks, self._ladder(h[np.ix_(S, S)], n_ticks)) for n_ticks, h in hams]

    def _ladder(self, heff, n_ticks):
        levels = max(1, int(n_ticks).bit_length())
        return [np.ascontiguousarray(expm(-1j * heff * (self.tick * (1 << j))).T) for j in range(levels)]


def ground_support() -> np.ndarray:
    return np.array([basis_index(a, b) for a in (G_DOWN, G_UP) for b in (G_DOWN, G_UP)])


def reachable(coupling: np.ndarray, start) -> np.ndarray:
    """Sorted basis indices reachable from ``start``; a nonzero
    ``coupling[i, j]`` leads from ``j`` to ``i``.  Hamiltonians are
    symmetric, collapse operators are not: decay out of a level that is
    never populated does not make it reachable."""
    adj = np.abs(coupling) > 0
    seen = np.zeros(len(adj), dtype=bool)
    seen[list(start)] = True
    frontier = seen.copy()
    while frontier.any():
        nxt = adj[:, frontier].any(axis=1) & ~seen
        seen |= nxt
        frontier = nxt
    return np.flatnonzero(seen)


class _Uniforms:
    """Per-trajectory uniform draws, extended block by block on demand.

    Row ``k`` belongs to stream key ``keys[k]`` at position ``local[k]``; a
    block is the ``(n_rows_of_key, width)`` array drawn from
    ``stream(seed, TRAJ, *key, block)``, so values never depend on chunking."""

    WIDTH = 16

    def __init__(self, seed, keys, local, sizes):
        self.seed = seed
        self.keys = keys
        self.local = local
        self.sizes = sizes
        self.buf = self._block(0)
        self.pos = np.zeros(len(local), dtype=np.int64)

    def _block(self, b):
        out = np.empty((len(self.local), self.WIDTH))
        uniq = {}
        for k, key in enumerate(self.keys):
            if key not in uniq:
                uniq[key] = rngmod.stream(self.seed, rngmod.TRAJ, *key, b).random((self.sizes[key], self.WIDTH))
            out[k] = uniq[key][self.local[k]]
        return out

    def take(self, rows):
        need = int(self.pos[rows].max()) + 1 if len(rows) else 0
        while need > self.buf.shape[1]:
            self.buf = np.concatenate([self.buf, self._block(self.buf.shape[1] // self.WIDTH)], axis=1)
        v = self.buf[rows, self.pos[rows]]
        self.pos[rows] += 1
        return v


def _run_round(sched: _Schedule, Y: np.ndarray, uni: _Uniforms, reuse: bool):
    """Advance every row through one round.

    Returns ``(ok, detector, Y)``: whether the row heralded (exactly one
    click, inside the window), which detector (0 = A, 1 = B), and the final
    normalised states of all rows (failed rows are left as they stood)."""
    n = len(Y)
    Y = Y.copy()
    all_rows = np.arange(n)
    r = uni.take(all_rows)
    clicks = np.zeros(n, dtype=np.int64)
    detector = np.full(n, -1, dtype=np.int64)
    failed = np.zeros(n, dtype=bool)
    live = all_rows
    start = 0
    for n_ticks, ladder in sched.segments:
        pos = np.zeros(n, dtype=np.int64)
        rows = live
        while len(rows):
            for j in range(len(ladder) - 1, -1, -1):
                size = 1 << j
                sub = rows[n_ticks - pos[rows] >= size]
                if not len(sub):
                    continue
                cand = Y[sub] @ ladder[j]
                ok = _sqnorm(cand) > r[sub]
                acc = sub[ok]
                Y[acc] = cand[ok]
                pos[acc] += size
            jumping = rows[pos[rows] < n_ticks]
            if not len(jumping):
                break
            psi = Y[jumping] @ ladder[0]  # state at the end of the tick holding the crossing
            pos[jumping] += 1
            cpsi = np.einsum("kij,nj->nki", sched.ops, psi)
            w = sched.rates * _sqnorm(cpsi)
            total = w.sum(axis=1)
            if np.any(~(total > 0)):
                raise DegenerateResult("a trajectory crossed its threshold with no collapse channel open")
            u = r[jumping] if reuse else uni.take(jumping)
            cum = np.cumsum(w, axis=1) / total[:, None]
            pick = np.minimum((cum < u[:, None]).sum(axis=1), w.shape[1] - 1)
            new = cpsi[np.arange(len(jumping)), pick]
            Y[jumping] = new / np.sqrt(_sqnorm(new))[:, None]
            r[jumping] = uni.take(jumping)
            ch = sched.channel[pick]
            is_click = (ch == sched.det_a) | (ch == sched.det_b)
            when = start + pos[jumping]
            cl = jumping[is_click]
            clicks[cl] += 1
            detector[cl] = np.where(ch[is_click] == sched.det_a, 0, 1)
            failed[cl[(clicks[cl] > 1) | (when[is_click] > sched.wait_tick)]] = True
            rows = jumping[(pos[jumping] < n_ticks) & ~failed[jumping]]
        start += n_ticks
        live = live[~failed[live]]
    ok = (clicks == 1) & ~failed
    nrm = np.sqrt(_sqnorm(Y))
    Y[ok] /= nrm[ok, None]
    return ok, detector, Y


def _reduced_sum(states: np.ndarray, support) -> np.ndarray:
    """Sum over rows of the two-atom reduced density matrix of each state."""
    k = len(states)
    full = np.zeros((k, DIM), dtype=complex)
    full[:, support] = states
    states = full
    x = states.reshape(k, 16, 4).transpose(0, 2, 1).reshape(k * 4, 16)
    return x.T @ x.conj()


def _apply_mw(params, states, config: BKConfig, support):
    """Microwave pi pulse on each state, by the master equation restricted to
    ``support`` (states are given in that subspace)."""
    tau = config.tau_mw or config.tau
    mw = calibrate_pi_pulse(tau, dt=config.mw_dt)
    S = np.ix_(support, support)
    cols = collapse_set(params)
    rho0 = np.einsum("ni,nj->nij", states, states.conj())
    return evolve_master_equation(
        h0_parts(params).static[S],
        [c.op[S] for c in cols],
        [c.rate for c in cols],
        rho0,
        (0.0, mw.end),
        config.mw_dt,
        drives=[(mw_drive()[S], mw)],
    )


def initial_state() -> np.ndarray:
    """Both atoms in ``(|g_down> + |g_up>)/sqrt(2)``, both cavities empty."""
    psi = sum(basis_state(a, b) for a in (G_DOWN, G_UP) for b in (G_DOWN, G_UP))
    return psi / 2.0


def run_bk(params: AtomCavityParams, config: BKConfig, pulse: PulseSpec | None = None, log=None) -> BKResult:
    """Simulate the protocol and estimate the four branch fidelities and rates."""
    config.validate()
    params.validate()
    pulse = pulse or calibrate_pi_pulse(config.tau, segments_per_width=config.segments_per_width)
    sched = _Schedule(params, pulse, config)
    reuse = config.collapse_draw == "reuse"

    # round 1
    n1 = config.n_traj
    uni = _Uniforms(config.seed, [(1, 0)] * n1, np.arange(n1), {(1, 0): n1})
    S = sched.support
    Y0 = np.tile(initial_state()[S], (n1, 1))
    ok1, det1, Y1 = _run_round(sched, Y0, uni, reuse)
    parents = np.flatnonzero(ok1)
    if log:
        log(f"round 1: {len(parents)} of {n1} heralded")
    if not len(parents):
        raise DegenerateResult(f"no heralded trajectory in round 1 out of {n1}; raise n_traj")

    # microwave pi pulse on each heralded state, then unravel into eigenstates
    rho_mw = _apply_mw(params, Y1[parents], config, S)
    starts = []
    for p, rho in zip(parents, rho_mw):
        w, v = np.linalg.eigh(0.5 * (rho + rho.conj().T))
        w = np.clip(w, 0.0, None)
        cum = np.cumsum(w) / w.sum()
        u = rngmod.stream(config.seed, rngmod.TRAJ, 3, int(p)).random(config.n_traj2)
        idx = np.minimum(np.searchsorted(cum, u, side="right"), len(w) - 1)
        starts.append((v, idx))

    # round 2, chunked by parent
    n2 = config.n_traj2
    sums = np.zeros((4, 16, 16), dtype=complex)
    counts = np.zeros(4, dtype=np.int64)
    per_chunk = max(1, config.chunk // n2)
    for c0 in range(0, len(parents), per_chunk):
        group = range(c0, min(c0 + per_chunk, len(parents)))
        keys, local, Y = [], [], []
        for g in group:
            p = int(parents[g])
            v, idx = starts[g]
            Y.append(v[:, idx].T)
            keys += [(2, p)] * n2
            local.append(np.arange(n2))
        uni = _Uniforms(config.seed, keys, np.concatenate(local), {k: n2 for k in keys})
        Y = np.concatenate(Y)
        ok2, det2, Y2 = _run_round(sched, Y, uni, reuse)
        first = np.repeat(det1[parents[list(group)]], n2)
        branch = 2 * first + det2
        for b in range(4):
            sel = ok2 & (branch == b)
            counts[b] += int(sel.sum())
            if sel.any():
                sums[b] += _reduced_sum(Y2[sel], sched.support)
        if log:
            log(f"round 2: parents {c0}..{group[-1]} done, counts {counts.tolist()}")
    if counts.sum() == 0:
        raise DegenerateResult("no heralded trajectory in any branch; raise n_traj or n_traj2")

    fids, rates, blocks = [], [], {}
    for b, name in enumerate(BRANCHES):
        rate = counts[b] * config.normalization / (config.n_traj * config.n_traj2)
        if counts[b] == 0:
            fids.append(0.0)
        else:
            blk = ground_block(sums[b] / counts[b])
            blocks[name] = blk
            fids.append(fidelity(blk, bell_state(config.branch_signs[b])))
        rates.append(float(rate))
    cost, chosen = bk_cost(fids, rates, config.t_mem_steps)
    return BKResult(
        branch_fidelities=tuple(fids),
        branch_rates=tuple(rates),
        counts=tuple(int(c) for c in counts),
        cost=cost,
        chosen_branch=chosen,
        n_traj=config.n_traj,
        n_traj2=config.n_traj2,
        normalization=config.normalization,
        round1_successes=len(parents),
        rho=blocks,
    )


# --- CSV ----------------------------------------------------------------------

QMCS_HEADER = ["i", "j", "F", "R", "C", "branch"]


def qmcs_csv(results: dict) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(QMCS_HEADER)
    for (i, j), res in sorted(results.items()):
        w.writerow([i, j, repr(res.chosen_fidelity), repr(res.chosen_rate), repr(res.cost), res.chosen_branch])
    return buf.getvalue()


def read_qmcs_csv(path) -> dict:
    """``{(i, j): (F, R)}`` as accepted by ``preinfo_from_qmcs``."""
    out = {}
    with open(path, newline="") as fh:
        rows = csv.reader(fh)
        header = next(rows, None)
        if header != QMCS_HEADER:
            raise ConfigError(f"{path}: expected header {','.join(QMCS_HEADER)}, got {header}")
        for line, row in enumerate(rows, start=2):
            try:
                i, j, f, r = int(row[0]), int(row[1]), float(row[2]), float(row[3])
            except (ValueError, IndexError):
                raise ConfigError(f"{path}:{line}: malformed row {row}") from None
            out[(i, j)] = (f, r)
    return out
