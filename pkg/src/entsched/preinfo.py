"""Static per-pair pre-information: fidelity and success-probability matrices."""
from __future__ import annotations

import csv
import os
from dataclasses import dataclass
from typing import Mapping

import numpy as np

from . import rng as rngmod
from .errors import ConfigError, LoadError

CSV_HEADER = ("i", "j", "fidelity", "success_prob")


@dataclass(frozen=True, eq=False)
class PreInfo:
    """Symmetric ``n x n`` matrices; the diagonal is unused and kept at zero."""

    fidelity: np.ndarray
    success_prob: np.ndarray

    def __post_init__(self):
        f = np.asarray(self.fidelity, dtype=float)
        r = np.asarray(self.success_prob, dtype=float)
        if f.ndim != 2 or f.shape[0] != f.shape[1] or f.shape != r.shape:
            raise ConfigError(f"pre-information matrices must be square and equal-shaped, got {f.shape} and {r.shape}")
        object.__setattr__(self, "fidelity", f)
        object.__setattr__(self, "success_prob", r)

    @property
    def n_qubits(self) -> int:
        return self.fidelity.shape[0]

    def __eq__(self, other):
        if not isinstance(other, PreInfo):
            return NotImplemented
        return np.array_equal(self.fidelity, other.fidelity) and np.array_equal(self.success_prob, other.success_prob)

    def validate(self):
        n = self.n_qubits
        for name, m in (("fidelity", self.fidelity), ("success_prob", self.success_prob)):
            for i in range(n):
                for j in range(i + 1, n):
                    if m[i, j] != m[j, i]:
                        raise LoadError(f"{name} not symmetric at ({i},{j}): {m[i, j]!r} != {m[j, i]!r}")
                    if not (0.0 < m[i, j] <= 1.0):
                        raise LoadError(f"{name} out of range (0,1] at ({i},{j}): {m[i, j]!r}")
        return self


@dataclass
class GenParams:
    mean_fidelity: float = 0.98
    sigma_fidelity: float = 0.09
    max_fidelity: float = 0.9999
    min_fidelity: float = 0.5
    mean_rate: float = 0.10
    sigma_rate: float = 0.02
    min_rate: float = 0.01
    rng_seed: int = 0

    def validate(self):
        if not (0.0 <= self.min_fidelity < self.mean_fidelity < self.max_fidelity <= 1.0):
            raise ConfigError(
                "need min_fidelity < mean_fidelity < max_fidelity <= 1, got "
                f"{self.min_fidelity}, {self.mean_fidelity}, {self.max_fidelity}"
            )
        if not (0.0 <= self.min_rate <= self.mean_rate <= 1.0) or self.mean_rate <= 0.0:
            raise ConfigError(f"need 0 <= min_rate <= mean_rate <= 1, got {self.min_rate}, {self.mean_rate}")
        if self.sigma_fidelity < 0 or self.sigma_rate < 0:
            raise ConfigError("standard deviations must be non-negative")
        if self.rng_seed < 0:
            raise ConfigError("rng_seed must be non-negative")
        return self


def _from_upper(values: np.ndarray, n: int) -> np.ndarray:
    m = np.zeros((n, n))
    iu = np.triu_indices(n, k=1)  # row-major (i<j) order
    m[iu] = values
    return m + m.T


def generate_preinfo(params: GenParams, n_qubits: int) -> PreInfo:
    """Gaussian pre-information, one draw per unordered pair in row-major order.

    Fidelities are clipped to ``[min_fidelity, max_fidelity]`` and rates to
    ``[min_rate, 1]``.  Fidelity and rate draws come from separate streams, so
    changing one spread leaves the other matrix untouched.
    """
    params.validate()
    if n_qubits < 2:
        raise ConfigError(f"need at least 2 qubits, got {n_qubits}")
    n_pairs = n_qubits * (n_qubits - 1) // 2
    zf = rngmod.stream(params.rng_seed, rngmod.PREINFO, 0).standard_normal(n_pairs)
    zr = rngmod.stream(params.rng_seed, rngmod.PREINFO, 1).standard_normal(n_pairs)
    f = np.clip(params.mean_fidelity + params.sigma_fidelity * zf, params.min_fidelity, params.max_fidelity)
    r = np.clip(params.mean_rate + params.sigma_rate * zr, params.min_rate, 1.0)
    return PreInfo(_from_upper(f, n_qubits), _from_upper(r, n_qubits))


def homogeneous_preinfo(n_qubits: int, fidelity: float, success_prob: float) -> PreInfo:
    n_pairs = n_qubits * (n_qubits - 1) // 2
    return PreInfo(_from_upper(np.full(n_pairs, fidelity), n_qubits), _from_upper(np.full(n_pairs, success_prob), n_qubits))


def _chosen(result):
    # BKResult, or a plain (fidelity, success_prob) pair read back from CSV
    if hasattr(result, "chosen_fidelity"):
        return float(result.chosen_fidelity), float(result.chosen_rate)
    f, r = result
    return float(f), float(r)


def preinfo_from_qmcs(results: Mapping[tuple[int, int], object], n_qubits: int, fill: GenParams) -> PreInfo:
    """Pairs present in ``results`` take the chosen Barrett-Kok branch values;
    the rest are filled by :func:`generate_preinfo` with ``fill``."""
    base = generate_preinfo(fill, n_qubits)
    f, r = base.fidelity.copy(), base.success_prob.copy()
    for (i, j), res in results.items():
        if not (0 <= i < n_qubits and 0 <= j < n_qubits) or i == j:
            raise ConfigError(f"pair ({i},{j}) out of range for {n_qubits} qubits")
        fid, rate = _chosen(res)
        if not (0.0 < fid <= 1.0 and 0.0 < rate <= 1.0):
            raise ConfigError(f"invalid QMCS values for ({i},{j}): F={fid}, R={rate}")
        f[i, j] = f[j, i] = fid
        r[i, j] = r[j, i] = rate
    return PreInfo(f, r)


def save_preinfo(preinfo: PreInfo, path) -> None:
    n = preinfo.n_qubits
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(CSV_HEADER)
        for i in range(n):
            for j in range(i + 1, n):
                w.writerow([i, j, repr(float(preinfo.fidelity[i, j])), repr(float(preinfo.success_prob[i, j]))])


def load_preinfo(path) -> PreInfo:
    """Read the ``i,j,fidelity,success_prob`` CSV.

    Rows for ``i > j`` are accepted but must agree with their mirror row.
    Every unordered pair must be present.
    """
    if not os.path.exists(path):
        raise LoadError(f"no such file: {path}")
    rows = {}
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or tuple(h.strip() for h in header) != CSV_HEADER:
            raise LoadError(f"{path}: expected header {','.join(CSV_HEADER)}, got {header}")
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != 4:
                raise LoadError(f"{path}:{lineno}: expected 4 fields, got {len(row)}")
            try:
                i, j = int(row[0]), int(row[1])
                fid, rate = float(row[2]), float(row[3])
            except ValueError as exc:
                raise LoadError(f"{path}:{lineno}: {exc}") from None
            if i == j or i < 0 or j < 0:
                raise LoadError(f"{path}:{lineno}: invalid pair ({i},{j})")
            rows[(i, j)] = (fid, rate)
    if not rows:
        raise LoadError(f"{path}: no data rows")
    n = 1 + max(max(i, j) for i, j in rows)
    f = np.zeros((n, n))
    r = np.zeros((n, n))
    for i in range(n):
        for j in range(i + 1, n):
            fwd, back = rows.get((i, j)), rows.get((j, i))
            if fwd is None and back is None:
                raise LoadError(f"{path}: missing pair ({i},{j})")
            if fwd is not None and back is not None and fwd != back:
                what = "fidelity" if fwd[0] != back[0] else "success_prob"
                raise LoadError(f"{path}: {what} not symmetric at ({i},{j})")
            fid, rate = fwd if fwd is not None else back
            for name, v in (("fidelity", fid), ("success_prob", rate)):
                if not (0.0 < v <= 1.0):
                    raise LoadError(f"{path}: {name} out of range (0,1] at ({i},{j}): {v!r}")
            f[i, j] = f[j, i] = fid
            r[i, j] = r[j, i] = rate
    return PreInfo(f, r)
