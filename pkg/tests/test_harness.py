"""Experiment orchestration: determinism, shared tasks, aggregation."""

import numpy as np
import pytest

from metabandit import agents, harness, hierarchy


def small_config(agent_names=("ts", "ada-ts"), runs=3, m=4, n=10, seed=11, **kwargs):
    spec = kwargs.pop("spec", None) or hierarchy.gaussian_env(2, 0.5, 0.1, 1.0)
    kinds = tuple(agents.AgentKind.from_name(name) for name in agent_names)
    return harness.ExperimentConfig(
        spec=spec, agents=kinds, m=m, n=n, runs=runs, seed=seed, **kwargs
    )


def test_config_validation():
    with pytest.raises(ValueError):
        small_config(runs=0)
    with pytest.raises(ValueError):
        small_config(agent_names=())
    with pytest.raises(ValueError):
        small_config(agent_names=("ts", "ts"))


def test_run_single_shape_and_determinism():
    config = small_config()
    kind = config.agents[1]
    first, digest_a = harness.run_single(config, kind, 0)
    second, digest_b = harness.run_single(config, kind, 0)
    assert first.shape == (4, 10)
    assert np.array_equal(first, second)
    assert digest_a == digest_b
    other_run, _ = harness.run_single(config, kind, 1)
    assert not np.array_equal(first, other_run)


def test_run_single_is_independent_of_agent_roster():
    """A unit's trace depends only on (seed, run, kind), never on which other
    agents happen to be in the experiment."""
    alone = small_config(agent_names=("ada-ts",))
    together = small_config(agent_names=("ts", "oracle-ts", "ada-ts"))
    kind = agents.AgentKind.from_name("ada-ts")
    solo, _ = harness.run_single(alone, kind, 2)
    crowd, _ = harness.run_single(together, kind, 2)
    assert np.array_equal(solo, crowd)


def test_common_tasks_share_hashes_across_agents():
    config = small_config(agent_names=("ts", "oracle-ts", "ada-ts"))
    trace = harness.run_experiment(config)
    for run in range(config.runs):
        digests = {trace.task_hashes[(k.label, run)] for k in config.agents}
        assert len(digests) == 1
    run_digests = {trace.task_hashes[("ts", run)] for run in range(config.runs)}
    assert len(run_digests) == config.runs


def test_independent_tasks_differ_across_agents():
    config = small_config(agent_names=("ts", "oracle-ts"), common_tasks=False)
    trace = harness.run_experiment(config)
    assert trace.task_hashes[("ts", 0)] != trace.task_hashes[("oracle-ts", 0)]


def test_serial_equals_threaded():
    config = small_config(agent_names=("ts", "ada-ts", "meta-ts"), runs=4)
    serial = harness.run_experiment(config, workers=1)
    threaded = harness.run_experiment(config, workers=8)
    for kind in config.agents:
        assert np.array_equal(serial.instant[kind.label], threaded.instant[kind.label])
    assert serial.task_hashes == threaded.task_hashes


def test_cumulative_is_monotone_and_flattened():
    config = small_config()
    trace = harness.run_experiment(config)
    for kind in config.agents:
        cum = trace.cumulative(kind.label)
        flat = cum.reshape(config.runs, -1)
        assert np.all(np.diff(flat, axis=1) >= 0)
        inst = trace.instant[kind.label].reshape(config.runs, -1)
        assert np.allclose(np.diff(flat, axis=1), inst[:, 1:])
        assert np.allclose(flat[:, 0], inst[:, 0])


def test_cumulative_unknown_agent():
    trace = harness.run_experiment(small_config())
    with pytest.raises(harness.UnknownAgent):
        trace.cumulative("ucb")


def test_aggregate_hand_example():
    config = small_config(agent_names=("ts",), runs=2, m=1, n=1)
    trace = harness.RegretTrace(
        config,
        {"ts": np.array([[[1.0]], [[3.0]]])},
        {("ts", 0): "a", ("ts", 1): "b"},
    )
    curve = harness.aggregate(trace)
    assert curve.mean["ts"][0, 0] == pytest.approx(2.0)
    assert curve.stderr["ts"][0, 0] == pytest.approx(1.0)  # std sqrt(2) / sqrt(2)
    assert curve.runs_used["ts"] == 2


def test_aggregate_single_run_zero_stderr():
    config = small_config(agent_names=("ts",), runs=1)
    curve = harness.aggregate(harness.run_experiment(config))
    assert np.all(curve.stderr["ts"] == 0.0)


def test_aggregate_empty_runs_rejected():
    config = small_config(agent_names=("ts",), runs=1)
    trace = harness.RegretTrace(
        config, {"ts": np.zeros((0, config.m, config.n))}, {}
    )
    with pytest.raises(harness.EmptyTrace):
        harness.aggregate(trace)


def test_final_regret_reads_last_cell():
    config = small_config(agent_names=("ts",), runs=2, m=2, n=3)
    trace = harness.run_experiment(config)
    curve = harness.aggregate(trace)
    expected = trace.cumulative("ts")[:, -1, -1].mean()
    assert harness.final_regret(curve, "ts") == pytest.approx(expected)
    with pytest.raises(harness.UnknownAgent):
        harness.final_regret(curve, "ucb")


def test_oracle_with_point_task_prior_never_errs():
    spec = hierarchy.gaussian_env(3, sigma_q=0.5, sigma_0=0.0, noise_sigma=1.0)
    config = small_config(agent_names=("oracle-ts",), spec=spec, runs=2)
    trace = harness.run_experiment(config)
    assert np.all(trace.instant["oracle-ts"] == 0.0)


def test_no_agent_beats_oracle_meaningfully():
    config = small_config(
        agent_names=("ts", "meta-ts", "ada-ts", "oracle-ts"), runs=8, m=6, n=40
    )
    curve = harness.aggregate(harness.run_experiment(config))
    oracle = harness.final_regret(curve, "oracle-ts")
    oracle_err = curve.stderr["oracle-ts"][-1, -1]
    for label in ("ts", "meta-ts", "ada-ts"):
        margin = 2.0 * (oracle_err + curve.stderr[label][-1, -1])
        assert harness.final_regret(curve, label) >= oracle - margin


def test_linear_runs_resample_action_sets():
    spec = hierarchy.linear_env(2, sigma_q=1.0, sigma_0=0.1, noise_sigma=1.0)
    config = small_config(agent_names=("ada-ts",), spec=spec, runs=2, m=2, n=8)
    trace = harness.run_experiment(config)
    assert trace.instant["ada-ts"].shape == (2, 2, 8)
    assert trace.task_hashes[("ada-ts", 0)] != trace.task_hashes[("ada-ts", 1)]


def test_forced_linear_agent_runs_end_to_end():
    spec = hierarchy.linear_env(2, sigma_q=1.0, sigma_0=0.1, noise_sigma=1.0)
    config = small_config(agent_names=("ada-ts-forced",), spec=spec, runs=2, m=5, n=6)
    trace = harness.run_experiment(config)
    assert np.all(trace.instant["ada-ts-forced"] >= 0.0)


def test_mixture_family_runs_end_to_end():
    spec = hierarchy.mixture_env(
        3,
        alphas=[[9, 9, 9], [1, 1, 1]],
        betas=[[1, 1, 1], [9, 9, 9]],
    )
    config = small_config(
        agent_names=("ada-ts", "oracle-ts", "misassigned-ts"), spec=spec, runs=2, m=3, n=12
    )
    trace = harness.run_experiment(config)
    for label in ("ada-ts", "oracle-ts", "misassigned-ts"):
        assert np.all(trace.instant[label] >= 0.0)


def test_failure_diagnostic_names_the_unit(monkeypatch):
    config = small_config(agent_names=("ada-ts",), runs=1, m=3, n=4)
    real = hierarchy.realize_reward
    calls = {"left": 6}  # blow up mid-task-2 (after 4 + 2 rewards)

    def flaky(spec, task, action, rng):
        if calls["left"] == 0:
            raise FloatingPointError("synthetic numeric failure")
        calls["left"] -= 1
        return real(spec, task, action, rng)

    monkeypatch.setattr(hierarchy, "realize_reward", flaky)
    with pytest.raises(RuntimeError, match="agent=ada-ts run=0 task=2 round=3"):
        harness.run_single(config, config.agents[0], 0)
