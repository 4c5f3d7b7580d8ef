"""Simulation engine: the episode loop, multi-seed experiments and parameter sweeps."""

from __future__ import annotations

import time
from collections.abc import Iterable
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, replace
from pathlib import Path
from statistics import fmean

from .agents import DeepQAgent, MonitoringAgent, Observation, QLearningAgent, ScalingAgent
from .config import LEARNING_AGENTS, ExperimentConfig, parse_agent_spec
from .domain import EdgeNode, ScalingAction, Topology, validate_topology
from .errors import ConfigurationError, EmitError
from .environment import ScalingEnvironment, feature_size
from .logger import SimulationLogger, get_logger
from .metrics import EpisodeSummary, MetricsAccumulator
from .neural import init_network
from .workload import (
    EventTimeline,
    PoissonWorkload,
    RandomStreams,
    Workload,
    sample_topology_delays,
    schedule_next_arrival,
    seed_timeline,
)

RESULT_COLUMNS = (
    "experiment_id",
    "agent",
    "allocator",
    "sweep_axis",
    "sweep_value",
    "seed",
    "episode",
    "events",
    "avg_delay_ms",
    "avg_replicas",
    "satisfaction_rate",
    "mean_reward",
    "p99_delay_ms",
)

_METRIC_COLUMNS = ("avg_delay_ms", "avg_replicas", "satisfaction_rate", "mean_reward", "p99_delay_ms")


@dataclass(frozen=True)
class ResultRow:
    """One emitted record. ``seed`` is None on rows averaged over seeds."""

    experiment_id: str
    agent: str
    allocator: str
    sweep_axis: str
    sweep_value: float | None
    seed: int | None
    episode: int
    events: int
    avg_delay_ms: float
    avg_replicas: float
    satisfaction_rate: float
    mean_reward: float
    p99_delay_ms: float

    def sort_key(self) -> tuple:
        return (
            self.agent,
            self.allocator,
            self.sweep_axis,
            float("-inf") if self.sweep_value is None else self.sweep_value,
            -1 if self.seed is None else self.seed,
            self.episode,
        )

    def as_dict(self) -> dict:
        return asdict(self)


@dataclass(frozen=True)
class TraceStep:
    """One processed event, recorded when tracing is enabled."""

    time: float
    kind: int
    class_id: int
    request_id: int
    action: str
    reward: float
    satisfied: bool
    dispatched: tuple[int, int] | None
    delay_total: float | None


def make_experiment_id(pinned: str | None = None) -> str:
    return pinned or time.strftime("%Y%m%dT%H%M%S")


def build_topology(config: ExperimentConfig, streams: RandomStreams) -> Topology:
    """Nodes with configured capacities and fixed transmission delays for this seed."""
    topology_config = config.topology
    if topology_config.tx_delays is not None:
        delays = list(topology_config.tx_delays)
    else:
        delays = sample_topology_delays(
            topology_config.nodes, streams.topology(), topology_config.tx_delay_range
        )
    nodes = [
        EdgeNode(id=n + 1, capacity=topology_config.capacities[n], tx_delay=delays[n])
        for n in range(topology_config.nodes)
    ]
    return validate_topology(nodes, list(config.classes))


def make_agent(
    config: ExperimentConfig,
    agent: str,
    allocator: str,
    topology: Topology,
    streams: RandomStreams,
) -> ScalingAgent:
    if agent == "rl":
        return QLearningAgent(
            config.learning,
            config.exploration,
            streams.agent(),
            config.learn_departures,
            credit=config.credit,
            config=config.log_config,
        )
    if agent == "drl":
        dims = [feature_size(topology.n_classes, topology.n_nodes), *config.hidden]
        dims.append(topology.n_nodes + 2)
        return DeepQAgent(
            init_network(dims, streams.network()),
            config.train,
            config.drl_exploration,
            streams.agent(),
            config.learn_departures,
            config.log_config,
            credit=config.credit,
        )
    return MonitoringAgent(
        topology,
        config.threshold,
        delay_aware=agent == "mnt_constraint",
        allocator=allocator,
        rng=streams.agent(),
        config=config.log_config,
    )


def run_episode(
    env: ScalingEnvironment,
    agent: ScalingAgent,
    workload: Workload,
    episode: int,
    total_episodes: int,
    events_budget: int,
    trace: list[TraceStep] | None = None,
    greedy: bool = False,
) -> EpisodeSummary:
    """Process exactly ``events_budget`` events (fewer only if the timeline runs dry).

    Learning state lives in ``agent`` and carries over between calls. Each transition is
    learned once the next event reveals the successor state; a queued request leaving its
    queue settles the Enqueue that put it there.
    """
    agent.begin_episode(episode, total_episodes, greedy)
    env.reset(workload)
    timeline = EventTimeline()
    seed_timeline(timeline, env.topology, workload)

    metrics = MetricsAccumulator()
    metrics.sample_count(0, 0.0)
    pending: tuple[Observation, ScalingAction, float] | None = None

    while metrics.events < events_budget and len(timeline):
        event = timeline.next_event()
        if event.is_arrival:
            schedule_next_arrival(timeline, event, env.topology, workload)

        observation = agent.observe(env, event)
        if pending is not None and agent.learns:
            agent.learn(*pending, observation)

        action = agent.select(env, observation)
        outcome = env.apply_action(event, action)
        for scheduled in outcome.scheduled:
            timeline.push(scheduled)
        if outcome.settled is not None and agent.learns:
            agent.settle(*outcome.settled)

        metrics.record_event()
        metrics.record_reward(outcome.reward)
        if outcome.delay is not None:
            metrics.record_completion(outcome.delay)
        metrics.sample_replicas(env.state, event.time)
        pending = (observation, action, outcome.reward)

        if trace is not None:
            dispatched = outcome.dispatched
            trace.append(
                TraceStep(
                    time=event.time,
                    kind=event.kind,
                    class_id=event.class_id,
                    request_id=event.request_id,
                    action=str(action),
                    reward=outcome.reward,
                    satisfied=outcome.satisfied,
                    dispatched=(dispatched.id, dispatched.node or 0) if dispatched else None,
                    delay_total=outcome.delay.total if outcome.delay is not None else None,
                )
            )

    agent.end_episode()
    return metrics.summarize(episode)


@dataclass(frozen=True)
class RunTask:
    """One independent (seed, agent, sweep value) run."""

    config: ExperimentConfig
    agent: str
    allocator: str
    seed: int
    experiment_id: str
    sweep_axis: str = "none"
    sweep_value: float | None = None
    snapshot_dir: str | None = None


def run_seed(task: RunTask) -> list[ResultRow]:
    """All episodes of one agent on one seed."""
    config = task.config
    logger = get_logger("core", config.log_config)
    streams = RandomStreams(task.seed)
    topology = build_topology(config, streams)
    agent = make_agent(config, task.agent, task.allocator, topology, streams)
    env = ScalingEnvironment(
        topology, config.reward, PoissonWorkload(streams.workload(1)), config.q_max
    )
    allocator = "" if task.agent in LEARNING_AGENTS else task.allocator
    total_episodes = config.episodes_for(task.agent)
    # sweep cells report the learned policy without exploration noise
    greedy_final = task.sweep_axis != "none" and config.sweep.greedy_final

    rows = []
    for episode in range(1, total_episodes + 1):
        logger.debug(
            f"{task.agent}/{allocator or '-'} seed {task.seed} episode {episode}/{total_episodes}"
        )
        workload = PoissonWorkload(streams.workload(episode))
        summary = run_episode(
            env,
            agent,
            workload,
            episode,
            total_episodes,
            config.events_per_episode,
            greedy=greedy_final and episode == total_episodes,
        )
        logger.info(
            f"{task.agent} seed {task.seed} episode {episode}: delay {summary.avg_delay_ms:.3f} ms, "
            f"replicas {summary.avg_replicas:.3f}, satisfaction {summary.satisfaction_rate:.3f}, "
            f"mean reward {summary.mean_reward:.4f}"
        )
        rows.append(
            ResultRow(
                experiment_id=task.experiment_id,
                agent=task.agent,
                allocator=allocator,
                sweep_axis=task.sweep_axis,
                sweep_value=task.sweep_value,
                seed=task.seed,
                episode=episode,
                events=summary.events_processed,
                avg_delay_ms=summary.avg_delay_ms,
                avg_replicas=summary.avg_replicas,
                satisfaction_rate=summary.satisfaction_rate,
                mean_reward=summary.mean_reward,
                p99_delay_ms=summary.p99_delay_ms,
            )
        )

    if task.snapshot_dir:
        write_snapshot(agent, task, logger)
    return rows


def write_snapshot(agent: ScalingAgent, task: RunTask, logger: SimulationLogger) -> None:
    directory = Path(task.snapshot_dir or ".")
    stem = f"{task.experiment_id}-{task.agent}-seed{task.seed}"
    if task.sweep_value is not None:
        stem += f"-{task.sweep_axis}{task.sweep_value:g}"
    try:
        directory.mkdir(parents=True, exist_ok=True)
        written = agent.snapshot(directory / stem)
    except OSError as exc:
        raise EmitError(str(directory / stem), exc.strerror or str(exc)) from exc
    if written:
        logger.info(f"snapshot written to {written}")


def aggregate_rows(rows: Iterable[ResultRow]) -> list[ResultRow]:
    """Mean over seeds per (agent, allocator, sweep point, episode)."""
    groups: dict[tuple, list[ResultRow]] = {}
    for row in rows:
        key = (
            row.experiment_id,
            row.agent,
            row.allocator,
            row.sweep_axis,
            row.sweep_value,
            row.episode,
        )
        groups.setdefault(key, []).append(row)

    merged = []
    for group in groups.values():
        first = group[0]
        means = {column: fmean(getattr(row, column) for row in group) for column in _METRIC_COLUMNS}
        merged.append(
            replace(
                first,
                seed=None,
                events=round(fmean(row.events for row in group)),
                **means,
            )
        )
    return sorted(merged, key=ResultRow.sort_key)


def apply_sweep_value(config: ExperimentConfig, axis: str, value: float) -> ExperimentConfig:
    """Rescale inter-arrival means (lambda) or deadlines (deadline) for one sweep point."""
    if axis == "lambda":
        reference = config.sweep.lambda_reference or min(
            fc.mean_interarrival for fc in config.classes
        )
        factor = value / reference
        classes = tuple(
            replace(fc, mean_interarrival=fc.mean_interarrival * factor) for fc in config.classes
        )
    elif axis == "deadline":
        classes = tuple(replace(fc, deadline=fc.deadline * value) for fc in config.classes)
    else:
        return config
    return replace(config, classes=classes)


class SimulationEngine:
    """Runs experiments, convergence studies and sweeps described by an ``ExperimentConfig``."""

    def __init__(self, config: ExperimentConfig, snapshot_dir: str | None = None):
        self.config = config
        self.snapshot_dir = snapshot_dir
        self.experiment_id = make_experiment_id(config.experiment_id)
        self.logger = get_logger("core", config.log_config)

        self.logger.debug(
            f"SimulationEngine {self.experiment_id}: {len(config.seeds)} seed(s), "
            f"{config.events_per_episode} events per episode"
        )

    def _execute(self, tasks: list[RunTask]) -> list[ResultRow]:
        rows: list[ResultRow] = []
        if self.config.workers > 1 and len(tasks) > 1:
            with ProcessPoolExecutor(max_workers=self.config.workers) as pool:
                for result in pool.map(run_seed, tasks):
                    rows.extend(result)
        else:
            for task in tasks:
                rows.extend(run_seed(task))
        return sorted(rows, key=ResultRow.sort_key)

    def _tasks(
        self,
        config: ExperimentConfig,
        agent: str,
        allocator: str,
        sweep_axis: str = "none",
        sweep_value: float | None = None,
    ) -> list[RunTask]:
        return [
            RunTask(
                config=config,
                agent=agent,
                allocator=allocator,
                seed=seed,
                experiment_id=self.experiment_id,
                sweep_axis=sweep_axis,
                sweep_value=sweep_value,
                snapshot_dir=self.snapshot_dir,
            )
            for seed in config.seeds
        ]

    def run_experiment(self, agent: str | None = None, allocator: str | None = None) -> list[ResultRow]:
        """Per-seed, per-episode rows for one agent."""
        agent = agent or self.config.agent
        allocator = allocator or self.config.allocator
        try:
            return self._execute(self._tasks(self.config, agent, allocator))
        except Exception:
            self.logger.exception(f"experiment {self.experiment_id} ({agent}) failed")
            raise

    def run_convergence(self, agents: Iterable[str] = LEARNING_AGENTS) -> list[ResultRow]:
        """Episode-by-episode learning curves for each agent."""
        rows: list[ResultRow] = []
        for agent in agents:
            rows.extend(self.run_experiment(agent, self.config.allocator))
        return sorted(rows, key=ResultRow.sort_key)

    def run_sweep(
        self, axis: str | None = None, values: Iterable[float] | None = None
    ) -> list[ResultRow]:
        """Final-episode metrics averaged over seeds, one row per sweep value and agent."""
        axis = axis or self.config.sweep.axis
        sweep = replace(self.config.sweep, axis=axis)
        points = tuple(values) if values is not None else sweep.resolved_values()
        if axis == "none" or not points:
            raise ConfigurationError("a sweep needs an axis (lambda or deadline) and at least one value")

        tasks: list[RunTask] = []
        for value in points:
            point_config = apply_sweep_value(self.config, axis, value)
            for entry in sweep.agents:
                agent, allocator = parse_agent_spec(entry)
                tasks.extend(self._tasks(point_config, agent, allocator, axis, value))

        self.logger.info(f"sweep over {axis}: {len(points)} point(s), {len(tasks)} run(s)")
        try:
            rows = self._execute(tasks)
        except Exception:
            self.logger.exception(f"sweep {self.experiment_id} over {axis} failed")
            raise

        final = {}
        for row in rows:
            key = (row.agent, row.allocator, row.sweep_value, row.seed)
            if key not in final or row.episode > final[key].episode:
                final[key] = row
        return aggregate_rows(final.values())
