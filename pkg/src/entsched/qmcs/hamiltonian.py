"""Model parameters, drive pulses, Hamiltonians and the collapse-operator set.

Units: hbar = 1 and rates in units of the atomic decay rate of node A.  The
spin-up optical transition is taken as far detuned and dropped, so neither
the cavity nor the laser couples to ``u_up``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import NamedTuple

import numpy as np

from ..errors import ConfigError
from .operators import OperatorSet, build_operators


@dataclass(frozen=True)
class NodeParams:
    g: float = 5.0
    kappa: float = 0.2  # intrinsic cavity loss
    k_det: float = 10.0  # cavity leakage into the detection path
    gamma: float = 1.0
    chi: float = 100.0  # cyclicity; math.inf switches off spin-flipping decay
    k_dep: float = 0.01
    det_cavity: float = 0.0
    det_down: float = 0.0

    def validate(self):
        for name in ("kappa", "k_det", "gamma", "k_dep"):
            if getattr(self, name) < 0:
                raise ConfigError(f"{name} must be non-negative, got {getattr(self, name)}")
        if not self.chi > 0:
            raise ConfigError(f"chi must be positive, got {self.chi}")
        return self

    @property
    def flip_rate(self) -> float:
        return self.gamma / self.chi


@dataclass(frozen=True)
class AtomCavityParams:
    A: NodeParams = field(default_factory=NodeParams)
    B: NodeParams = field(default_factory=NodeParams)

    @classmethod
    def symmetric(cls, **kw) -> "AtomCavityParams":
        node = NodeParams(**kw)
        return cls(node, node)

    def ideal(self) -> "AtomCavityParams":
        """No spin flips, no dephasing, and every cavity photon reaches a detector."""
        kw = dict(chi=math.inf, k_dep=0.0, kappa=0.0)
        return AtomCavityParams(replace(self.A, **kw), replace(self.B, **kw))

    def validate(self):
        self.A.validate()
        self.B.validate()
        return self

    @property
    def max_rate(self) -> float:
        return max(max(n.gamma, n.kappa, n.k_det, n.k_dep, n.g, abs(n.det_cavity), abs(n.det_down)) for n in (self.A, self.B))


class PulseSpec(NamedTuple):
    """Gaussian envelope ``amplitude * exp(-(t - center)**2 / (2 width**2))``."""

    amplitude: float
    center: float
    width: float

    def __call__(self, t):
        return self.amplitude * np.exp(-((np.asarray(t) - self.center) ** 2) / (2.0 * self.width ** 2))

    @property
    def end(self) -> float:
        # the envelope is treated as zero beyond four widths from the center
        return self.center + 4.0 * self.width

    @property
    def area(self) -> float:
        return self.amplitude * self.width * math.sqrt(2.0 * math.pi)

    @classmethod
    def centered(cls, amplitude: float, width: float) -> "PulseSpec":
        return cls(amplitude, 4.0 * width, width)


class HamiltonianParts(NamedTuple):
    static: np.ndarray
    drive_a: np.ndarray
    drive_b: np.ndarray


_OPS: OperatorSet | None = None


def operators() -> OperatorSet:
    global _OPS
    if _OPS is None:
        _OPS = build_operators()
    return _OPS


def h0_parts(params: AtomCavityParams, ops: OperatorSet | None = None) -> HamiltonianParts:
    ops = ops or operators()
    h = np.zeros_like(ops.identity)
    drives = []
    for node, o in ((params.A, ops.A), (params.B, ops.B)):
        a = o.cavity
        h = h + node.det_cavity * (a.conj().T @ a) + 0.5 * node.det_down * o.sz_down
        h = h - node.g * (o.sp_down @ a + o.sm_down @ a.conj().T)
        drives.append(o.sp_down + o.sm_down)
    return HamiltonianParts(h, drives[0], drives[1])


def build_h0(params: AtomCavityParams, pulse, t: float, ops: OperatorSet | None = None) -> np.ndarray:
    """Two-node Hamiltonian at time ``t``.

    ``pulse`` is one :class:`PulseSpec` driving both atoms or an ``(A, B)``
    pair; ``None`` means no drive."""
    parts = h0_parts(params, ops)
    if pulse is None:
        return parts.static
    pa, pb = (pulse, pulse) if isinstance(pulse, PulseSpec) else pulse
    return parts.static + float(pa(t)) * parts.drive_a + float(pb(t)) * parts.drive_b


def mw_drive(ops: OperatorSet | None = None) -> np.ndarray:
    ops = ops or operators()
    return ops.A.sp_mw + ops.A.sm_mw + ops.B.sp_mw + ops.B.sm_mw


def build_h_pi(pulse: PulseSpec, t: float, ops: OperatorSet | None = None) -> np.ndarray:
    """Microwave drive on the ground-state spin transition of both atoms."""
    return float(pulse(t)) * mw_drive(ops)


class Collapse(NamedTuple):
    label: str
    op: np.ndarray
    rate: float


DETECTOR_A = "det_a"
DETECTOR_B = "det_b"


def collapse_set(params: AtomCavityParams, ops: OperatorSet | None = None) -> list[Collapse]:
    """The sixteen dissipation channels, in a fixed order ending with the two
    detector clicks."""
    ops = ops or operators()
    A, B = params.A, params.B
    return [
        Collapse("decay_down_A", ops.A.sm_down, A.gamma),
        Collapse("decay_down_B", ops.B.sm_down, B.gamma),
        Collapse("decay_up_A", ops.A.sm_up, A.gamma),
        Collapse("decay_up_B", ops.B.sm_up, B.gamma),
        Collapse("flip_down_up_A", ops.A.sm_down_up, A.flip_rate),
        Collapse("flip_down_up_B", ops.B.sm_down_up, B.flip_rate),
        Collapse("flip_up_down_A", ops.A.sm_up_down, A.flip_rate),
        Collapse("flip_up_down_B", ops.B.sm_up_down, B.flip_rate),
        Collapse("dephase_down_A", ops.A.sz_down, A.k_dep),
        Collapse("dephase_down_B", ops.B.sz_down, B.k_dep),
        Collapse("dephase_up_A", ops.A.sz_up, A.k_dep),
        Collapse("dephase_up_B", ops.B.sz_up, B.k_dep),
        Collapse("cavity_loss_A", ops.A.cavity, A.kappa),
        Collapse("cavity_loss_B", ops.B.cavity, B.kappa),
        Collapse(DETECTOR_A, ops.c_det_a, A.k_det),
        Collapse(DETECTOR_B, ops.c_det_b, B.k_det),
    ]


def effective_hamiltonian(h: np.ndarray, collapse_ops, rates) -> np.ndarray:
    """``H - (i/2) sum_n rate_n C_n^dag C_n``."""
    if len(collapse_ops) != len(rates):
        raise ValueError(f"{len(collapse_ops)} collapse operators but {len(rates)} rates")
    out = np.array(h, dtype=complex, copy=True)
    for c, g in zip(collapse_ops, rates):
        if g:
            out -= 0.5j * g * (c.conj().T @ c)
    return out
