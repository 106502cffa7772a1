"""Experiment configuration files.

An INI file whose sections mirror the dataclass field names::

    [sim]
    n_qubits = 40
    t_mem_steps = 6000

    [gen]
    sigma_fidelity = 0.09

    [strategy]
    kind = greedy

    [run]
    n_episodes = 100
    base_seed = 1

Recognised sections: sim, gen, strategy, train, model, run, sweep, bk, node,
node.A, node.B and qmcs.  Unknown sections or keys are errors, so a typo
never silently falls back to a default.
"""
from __future__ import annotations

import configparser
import dataclasses
import math
from dataclasses import dataclass, field, replace

from .agents.nn import ModelConfig
from .agents.train import TrainConfig
from .env import SimConfig
from .errors import ConfigError
from .preinfo import GenParams
from .qmcs.bk import BKConfig
from .qmcs.hamiltonian import AtomCavityParams, NodeParams
from .schedulers import StrategyConfig


@dataclass
class RunConfig:
    n_episodes: int = 100
    base_seed: int = 0
    mixing_weight: float = 0.1
    checkpoint: str = ""


@dataclass
class SweepConfig:
    axis: str = "sigma_fidelity"
    values: tuple = (0.0, 0.03, 0.06, 0.09)
    strategies: tuple = ("random", "mst", "greedy")


@dataclass
class QmcsConfig:
    n_qubits: int = 2
    pairs: str = "all"  # "all" or space separated i-j pairs
    node_spread: float = 0.0  # relative Gaussian spread of g per qubit
    seed: int = 0


@dataclass
class Experiment:
    sim: SimConfig = field(default_factory=SimConfig)
    gen: GenParams = field(default_factory=GenParams)
    strategy: StrategyConfig = field(default_factory=StrategyConfig)
    train: TrainConfig = field(default_factory=TrainConfig)
    model: ModelConfig = field(default_factory=ModelConfig)
    run: RunConfig = field(default_factory=RunConfig)
    sweep: SweepConfig = field(default_factory=SweepConfig)
    bk: BKConfig = field(default_factory=BKConfig)
    atoms: AtomCavityParams = field(default_factory=AtomCavityParams)
    qmcs: QmcsConfig = field(default_factory=QmcsConfig)


def _coerce(raw: str, default, name: str):
    raw = raw.strip()
    try:
        if isinstance(default, bool):
            low = raw.lower()
            if low in ("1", "true", "yes", "on"):
                return True
            if low in ("0", "false", "no", "off"):
                return False
            raise ValueError(raw)
        if isinstance(default, int) and not isinstance(default, bool):
            return int(raw)
        if isinstance(default, float):
            return math.inf if raw.lower() in ("inf", "infinity") else float(raw)
        if isinstance(default, tuple):
            parts = [p for p in raw.replace(",", " ").split() if p]
            if default and isinstance(default[0], (int, float)) and not isinstance(default[0], bool):
                kind = type(default[0])
                return tuple(kind(p) for p in parts)
            return tuple(parts)
        if default is None:
            if raw.lower() in ("none", ""):
                return None
            for kind in (int, float):
                try:
                    return kind(raw)
                except ValueError:
                    pass
            return raw
        if hasattr(default, "value"):  # enum
            return type(default)(raw)
        return raw
    except ValueError:
        raise ConfigError(f"bad value for {name}: {raw!r}") from None


def _apply(obj, section, name: str):
    fields = {f.name: f for f in dataclasses.fields(obj)}
    updates = {}
    for key, raw in section.items():
        if key not in fields:
            raise ConfigError(f"unknown key {key!r} in section [{name}]")
        updates[key] = _coerce(raw, getattr(obj, key), f"{name}.{key}")
    if isinstance(obj, SimConfig) and "max_workers" not in updates:
        updates["max_workers"] = None  # re-derive from n_qubits
    return replace(obj, **updates)


SECTIONS = ("sim", "gen", "strategy", "train", "model", "run", "sweep", "bk", "qmcs")


def parse_config(text: str) -> Experiment:
    cp = configparser.ConfigParser(interpolation=None, default_section="__none__")
    cp.optionxform = str  # keep key case
    try:
        cp.read_string(text)
    except configparser.Error as exc:
        raise ConfigError(f"cannot parse config: {exc}") from None
    exp = Experiment()
    node = NodeParams()
    node_a = node_b = None
    for name in cp.sections():
        sec = cp[name]
        if name in SECTIONS:
            setattr(exp, name, _apply(getattr(exp, name), sec, name))
        elif name == "node":
            node = _apply(node, sec, name)
        elif name in ("node.A", "node.B"):
            pass  # applied on top of [node] below
        else:
            raise ConfigError(f"unknown section [{name}]")
    if cp.has_section("node.A"):
        node_a = _apply(node, cp["node.A"], "node.A")
    if cp.has_section("node.B"):
        node_b = _apply(node, cp["node.B"], "node.B")
    exp.atoms = AtomCavityParams(node_a or node, node_b or node)
    exp.sim.validate()
    exp.gen.validate()
    exp.strategy.validate()
    exp.train.validate()
    exp.bk.validate()
    exp.atoms.validate()
    return exp


def load_config(path) -> Experiment:
    try:
        with open(path) as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    return parse_config(text)


def dump_section(name: str, obj) -> str:
    lines = [f"[{name}]"]
    for f in dataclasses.fields(obj):
        v = getattr(obj, f.name)
        if isinstance(v, tuple):
            v = " ".join(str(x) for x in v)
        elif hasattr(v, "value"):
            v = v.value
        lines.append(f"{f.name} = {v}")
    return "\n".join(lines) + "\n"
