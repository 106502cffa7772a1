"""Scheduling of heralded entanglement generation on quantum networks."""
from .env import EnvState, SimConfig
from .harness import EpisodeResult, StatsSummary, run_batch, run_episode, run_sweep, summarize
from .metrics import mu, peak_mu
from .preinfo import GenParams, PreInfo, generate_preinfo
from .schedulers import Strategy, StrategyConfig

__version__ = "0.1.0"
