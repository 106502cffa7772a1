import json
import math

import pytest

from conftest import config
from entsched.env import SimConfig
from entsched.errors import ConfigError
from entsched.harness import (
    EpisodeResult,
    compare_strategies,
    paired_improvement,
    read_results_csv,
    results_csv,
    run_batch,
    run_episode,
    run_sweep,
    summarize,
    sweep_summary_json,
    write_results_csv,
)
from entsched.metrics import peak_mu
from entsched.preinfo import GenParams, homogeneous_preinfo
from entsched.schedulers import Strategy, StrategyConfig

SMALL = SimConfig(n_qubits=10, t_mem_steps=600.0, max_steps=20_000)
GEN = GenParams(mean_rate=0.05, sigma_fidelity=0.05)


def _res(seed, mu):
    return EpisodeResult(seed, "greedy", 4, 0.0, mu, 0, 4, 0.0)


def test_summarize_two_samples():
    s = summarize([3.0, 5.0], hist_max=10.0)
    assert s.mean_mu == 4.0
    assert s.std_mu == pytest.approx(math.sqrt(2), abs=1e-15)
    assert s.sigma_mu == pytest.approx(1.0, abs=1e-15)
    assert s.two_sigma_halfwidth == pytest.approx(2.0, abs=1e-15)
    assert s.gaussian_fit[0] == pytest.approx(s.mean_mu, abs=1e-12)
    assert len(s.counts) == 30 and sum(s.counts) == 2
    assert s.cdf[-1] == 1.0
    assert all(a <= b for a, b in zip(s.cdf, s.cdf[1:]))


def test_summarize_degenerate_and_errors():
    s = summarize([2.0, 2.0, 2.0], hist_max=4.0)
    assert s.std_mu == 0.0 and s.degenerate
    with pytest.raises(ConfigError):
        summarize([1.0])


def test_summarize_default_range_uses_cluster_target():
    s = summarize([_res(0, 1.0), _res(1, 2.0)])
    assert s.bin_edges[-1] == pytest.approx(3.0)


def test_compare_strategies():
    a = summarize([1.0, 1.0], hist_max=2)
    assert compare_strategies(a, a) == (0.0, 1.0)
    lo = summarize([13.90, 13.90], hist_max=30)
    hi = summarize([15.58, 15.58], hist_max=30)
    d, r = compare_strategies(lo, hi)
    assert d == pytest.approx(1.68, abs=1e-12)
    assert r == pytest.approx(3.20, abs=0.005)
    assert r == pytest.approx(3.2042795103584880, abs=1e-12)
    assert compare_strategies(hi, lo)[0] == pytest.approx(-d, abs=1e-15)


def test_paired_improvement():
    base = [_res(k, 1.0 + 0.1 * k) for k in range(10)]
    new = [_res(k, r.mu_peak + 0.5 + 0.01 * (-1) ** k) for k, r in enumerate(base)]
    out = paired_improvement(base, new)
    assert out["delta_mu"] == pytest.approx(0.5, abs=1e-3)
    assert out["p_value"] < 1e-6
    with pytest.raises(ConfigError):
        paired_improvement(base, new[::-1])


def test_deterministic_environment_gives_same_result_for_any_seed():
    pi = homogeneous_preinfo(8, 0.98, 1.0)
    outs = {run_episode(config(8, rng_seed=s, t_mem_steps=100.0), pi, StrategyConfig())[0].mu_peak for s in range(5)}
    assert len(outs) == 1


def test_episode_terminates_past_the_cluster_target():
    pi = homogeneous_preinfo(8, 0.99, 0.3)
    res, traj = run_episode(config(8, rng_seed=3), pi, StrategyConfig())
    assert res.n_max_final > 6
    assert not res.truncated and not res.stalled
    assert (res.mu_peak, res.step_at_peak) == peak_mu(traj)
    assert traj[-1].n_max == res.n_max_final


def test_rescheduling_needs_two_idle_qubits():
    pi = homogeneous_preinfo(10, 0.99, 0.3)
    seen = []
    run_episode(config(10, rng_seed=1), pi, StrategyConfig(), on_schedule=lambda s: seen.append(int((~s.busy).sum())))
    assert seen and all(k >= 2 for k in seen)


def test_truncation_flag():
    pi = homogeneous_preinfo(6, 0.99, 0.01)
    res, _ = run_episode(config(6, rng_seed=0, max_steps=3), pi, StrategyConfig())
    assert res.truncated


@pytest.mark.parametrize("kind", ["random", "mst", "greedy"])
def test_batch_reproducible_and_thread_independent(kind):
    strat = StrategyConfig(kind=Strategy(kind))
    a = run_batch(6, 17, SMALL, GEN, strat, threads=1)
    b = run_batch(6, 17, SMALL, GEN, strat, threads=3)
    assert len(a) == 6
    strip = lambda rs: [r.row(with_time=False) for r in rs]
    assert strip(a) == strip(b)
    assert strip(a) == strip(run_batch(6, 17, SMALL, GEN, strat))
    assert strip(a) != strip(run_batch(6, 18, SMALL, GEN, strat))


def test_threads_env_var(monkeypatch):
    monkeypatch.setenv("ENTSCHED_THREADS", "x")
    with pytest.raises(ConfigError):
        run_batch(2, 0, SMALL, GEN, StrategyConfig())
    with pytest.raises(ConfigError):
        run_batch(0, 0, SMALL, GEN, StrategyConfig(), threads=1)


def test_results_csv_round_trip(tmp_path):
    res = run_batch(3, 5, SMALL, GEN, StrategyConfig(), threads=1)
    p = tmp_path / "r.csv"
    write_results_csv(res, p)
    back = read_results_csv(p)
    assert [r.mu_peak for r in back] == [r.mu_peak for r in res]
    assert open(p).readline().strip() == "seed,strategy,n_qubits,sigma_f,mu_peak,step_at_peak,n_max_final,wall_time_s"
    # without timings the text is a pure function of the inputs
    text = results_csv(res, with_time=False)
    assert all(line.endswith(",") for line in text.splitlines()[1:])


def test_sweep_grid_and_byte_identical_rerun():
    strats = [StrategyConfig(kind=Strategy(k)) for k in ("random", "mst", "greedy")]
    rows = run_sweep("sigma_fidelity", [0.0, 0.09], strats, SMALL, GEN, 3, 4, threads=1)
    assert [(r.value, r.strategy) for r in rows] == [(v, k) for v in (0.0, 0.09) for k in ("random", "mst", "greedy")]
    again = run_sweep("sigma_fidelity", [0.0, 0.09], strats, SMALL, GEN, 3, 4, threads=2)
    flat = lambda rs: "".join(results_csv(r.results, with_time=False) for r in rs)
    assert flat(rows) == flat(again)
    payload = json.loads(sweep_summary_json("sigma_fidelity", rows))
    assert len(payload) == 6 and payload[0]["axis"] == "sigma_fidelity"


def test_sweep_over_sizes_and_errors():
    rows = run_sweep("n_qubits", [6, 8], [StrategyConfig()], SMALL, GEN, 2, 0, threads=1)
    assert [r.results[0].n_qubits for r in rows] == [6, 8]
    with pytest.raises(ConfigError, match="fixed input size"):
        run_sweep("n_qubits", [6, 8], [StrategyConfig(kind=Strategy.FC)], SMALL, GEN, 2, 0, agents={Strategy.FC: object()})
    with pytest.raises(ConfigError):
        run_sweep("t_mem", [1], [StrategyConfig()], SMALL, GEN, 2, 0)
    with pytest.raises(ConfigError):
        run_sweep("n_qubits", [], [StrategyConfig()], SMALL, GEN, 2, 0)
