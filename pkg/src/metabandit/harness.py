"""Experiment orchestration: seeded runs, regret traces, aggregation.

Each (agent, run) pair is a self-contained unit of work with its own random
streams derived from (seed, purpose, agent label, run index), so runs can be
executed in any order or concurrently and still produce identical output.
When ``common_tasks`` is set, the task-generation stream drops the agent
label, so every agent in a run faces the same action set, meta-parameter and
task sequence while still drawing its own reward noise.
"""

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
import hashlib

import numpy as np

from . import agents as agents_mod
from . import hierarchy
from .gauss_core import RngStream


class EmptyTrace(Exception):
    """No successful runs to aggregate."""


class UnknownAgent(Exception):
    """Agent label missing from a trace or curve."""


@dataclass(frozen=True, eq=False)
class ExperimentConfig:
    spec: hierarchy.EnvironmentSpec
    agents: tuple
    m: int
    n: int
    runs: int
    seed: int
    common_tasks: bool = True

    def __post_init__(self):
        if self.m < 1 or self.n < 1 or self.runs < 1:
            raise ValueError("m, n and runs must be positive")
        labels = [kind.label for kind in self.agents]
        if len(labels) != len(set(labels)):
            raise ValueError("duplicate agent labels")
        if not labels:
            raise ValueError("need at least one agent")


@dataclass
class RegretTrace:
    """Per-round instant regret for every (agent, run)."""

    config: ExperimentConfig
    instant: dict            # label -> array (runs, m, n)
    task_hashes: dict        # (label, run) -> hex digest of the task sequence

    def cumulative(self, label):
        """Cumulative regret over the flattened (task, round) axis."""
        if label not in self.instant:
            raise UnknownAgent(f"no trace for agent {label!r}")
        runs = self.instant[label].shape[0]
        flat = self.instant[label].reshape(runs, -1)
        return np.cumsum(flat, axis=1).reshape(self.instant[label].shape)


@dataclass
class AggregateCurve:
    """Across-run mean and standard error of cumulative regret."""

    config: ExperimentConfig
    mean: dict               # label -> array (m, n)
    stderr: dict             # label -> array (m, n)
    runs_used: dict          # label -> int


def _stream_id(purpose, label, run):
    digest = hashlib.sha256(f"{purpose}|{label}|{run}".encode()).digest()
    return int.from_bytes(digest[:8], "big")


def _streams(config, label, run):
    """(tasks, rewards, agent) streams for one unit of work."""
    task_label = "" if config.common_tasks else label
    return (
        RngStream(config.seed, _stream_id("tasks", task_label, run)),
        RngStream(config.seed, _stream_id("rewards", label, run)),
        RngStream(config.seed, _stream_id("agent", label, run)),
    )


def _sample_run_actions(spec, rng):
    """Per-run linear action set, uniform on the centered unit box; vectors
    that land outside the unit ball are pulled back onto it."""
    actions = rng.uniform(-0.5, 0.5, size=(spec.num_arms, spec.dim))
    norms = np.linalg.norm(actions, axis=1)
    over = norms > 1.0
    if np.any(over):
        actions[over] /= norms[over, None]
    return spec.with_actions(actions)


def _task_digest(run_spec, mu_star, tasks):
    h = hashlib.sha256()
    if run_spec.family == hierarchy.LINEAR:
        h.update(np.ascontiguousarray(run_spec.actions).tobytes())
    if run_spec.family == hierarchy.BERNOULLI_MIXTURE:
        h.update(str(int(mu_star)).encode())
    else:
        h.update(np.ascontiguousarray(mu_star).tobytes())
    for task in tasks:
        h.update(np.ascontiguousarray(task.theta).tobytes())
    return h.hexdigest()


def run_single(config, kind, run):
    """Execute one (agent, run) unit; returns (instant (m, n), task hash).

    Output is a pure function of (config.spec, config.seed, common_tasks,
    kind, run): agent order and scheduling play no role.
    """
    tasks_rng, rewards_rng, agent_rng = _streams(config, kind.label, run)
    spec = config.spec
    if spec.family == hierarchy.LINEAR and spec.actions is None:
        spec = _sample_run_actions(spec, tasks_rng)
    mu_star = hierarchy.sample_meta_parameter(spec, tasks_rng)
    tasks = [hierarchy.sample_task(spec, mu_star, tasks_rng) for _ in range(config.m)]
    digest = _task_digest(spec, mu_star, tasks)

    exploration = None
    if kind.base == agents_mod.ADA_TS_FORCED and spec.family == hierarchy.LINEAR:
        plan, _ = agents_mod.choose_spanning_actions(spec.actions)
        exploration = plan
    agent = agents_mod.make_agent(kind, spec, agent_rng, mu_star, exploration)

    instant = np.zeros((config.m, config.n))
    s = t = 0
    try:
        for s in range(1, config.m + 1):
            task = tasks[s - 1]
            agent.begin_task(s, config.m)
            for t in range(1, config.n + 1):
                action = agent.act(t)
                observation = hierarchy.realize_reward(spec, task, action, rewards_rng)
                instant[s - 1, t - 1] = hierarchy.instant_regret(spec, task, action)
                agent.observe(action, observation)
            agent.end_task()
    except Exception as err:
        raise RuntimeError(
            f"run failed at agent={kind.label} run={run} task={s} round={t}: {err}"
        ) from err
    return instant, digest


def run_experiment(config, workers=1):
    """Run every (agent, run) unit, serially or on a thread pool."""
    units = [(kind, run) for kind in config.agents for run in range(config.runs)]
    results = {}

    def execute(unit):
        kind, run = unit
        return unit, run_single(config, kind, run)

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            outcomes = list(pool.map(execute, units))
    else:
        outcomes = [execute(unit) for unit in units]

    for (kind, run), payload in outcomes:
        results[(kind.label, run)] = payload

    instant = {}
    hashes = {}
    for kind in config.agents:
        rows = []
        for run in range(config.runs):
            inst, digest = results[(kind.label, run)]
            rows.append(inst)
            hashes[(kind.label, run)] = digest
        instant[kind.label] = np.stack(rows)
    return RegretTrace(config, instant, hashes)


def aggregate(trace):
    """Mean cumulative regret and its standard error across runs."""
    mean, stderr, used = {}, {}, {}
    for kind in trace.config.agents:
        label = kind.label
        if label not in trace.instant or trace.instant[label].shape[0] == 0:
            raise EmptyTrace(f"no successful runs for agent {label!r}")
        cum = trace.cumulative(label)
        runs = cum.shape[0]
        mean[label] = cum.mean(axis=0)
        if runs > 1:
            stderr[label] = cum.std(axis=0, ddof=1) / np.sqrt(runs)
        else:
            stderr[label] = np.zeros_like(mean[label])
        used[label] = runs
    return AggregateCurve(trace.config, mean, stderr, used)


def final_regret(curve, label):
    """Mean cumulative regret at the last round of the last task."""
    if label not in curve.mean:
        raise UnknownAgent(f"no curve for agent {label!r}")
    return float(curve.mean[label][-1, -1])
