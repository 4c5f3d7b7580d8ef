"""Scaling policies: tabular Q-learning, deep Q-learning and the monitoring baselines."""

from __future__ import annotations

from collections.abc import Sequence
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from .domain import (
    ENQUEUE,
    KEEP,
    REMOVE,
    ActionKind,
    ClusterState,
    FunctionClass,
    ScalingAction,
    Topology,
    deploy,
    feasible_nodes,
)
from .environment import (
    FeatureVector,
    RewardParams,
    ScalingEnvironment,
    TabularStateKey,
    reward_bounds,
)
from .errors import ConfigurationError, NoFeasibleNode
from .logger import get_logger
from .neural import DenseNetwork, ReplayMemory, TrainConfig, Transition, fit, make_optimizer
from .workload import DEPARTURE, SimEvent

FIRST_FIT = "ff"
RANDOM_FIT = "rf"
ALLOCATORS = (FIRST_FIT, RANDOM_FIT)


@dataclass(frozen=True)
class ExplorationSchedule:
    epsilon: float = 1.0
    decay: float = 0.98
    warmup_fraction: float = 0.1

    def __post_init__(self) -> None:
        if not 0.0 <= self.epsilon <= 1.0:
            raise ConfigurationError(f"exploration.epsilon must be in [0, 1], got {self.epsilon}")
        if not 0.0 < self.decay < 1.0:
            raise ConfigurationError(f"exploration.decay must be in (0, 1), got {self.decay}")
        if self.warmup_fraction < 0:
            raise ConfigurationError("exploration.warmup_fraction must be >= 0")


@dataclass(frozen=True)
class LearningParams:
    alpha: float = 0.01
    gamma: float = 0.95

    def __post_init__(self) -> None:
        if not 0.0 < self.alpha <= 1.0:
            raise ConfigurationError(f"rl.alpha must be in (0, 1], got {self.alpha}")
        if not 0.0 <= self.gamma < 1.0:
            raise ConfigurationError(f"rl.gamma must be in [0, 1), got {self.gamma}")


@dataclass(frozen=True)
class CreditAssignment:
    """How learners turn environment rewards into training signal.

    With ``defer_enqueue`` an Enqueue is credited when its request leaves the queue rather
    than when it joins it; Enqueues whose request is still waiting at episode end are never
    learned. ``clip`` bounds every learned reward.
    """

    defer_enqueue: bool = True
    clip: tuple[float, float] | None = None

    @classmethod
    def for_rewards(
        cls, params: RewardParams, defer_enqueue: bool = True, clip: bool = True
    ) -> CreditAssignment:
        return cls(defer_enqueue, reward_bounds(params) if clip else None)

    def learned(self, reward: float) -> float:
        if self.clip is None:
            return reward
        low, high = self.clip
        return min(max(reward, low), high)


def decay_epsilon(
    schedule: ExplorationSchedule, episode: int, total_episodes: int
) -> ExplorationSchedule:
    """Decay once for every (1-based) episode past the warm-up fraction."""
    if episode > schedule.warmup_fraction * total_episodes:
        return replace(schedule, epsilon=schedule.epsilon * schedule.decay)
    return schedule


class QTable:
    """Sparse q-values; unseen (state, action) pairs read as 0."""

    def __init__(self) -> None:
        self.entries: dict[TabularStateKey, dict[int, float]] = {}

    def __contains__(self, key: TabularStateKey) -> bool:
        return key in self.entries

    def __len__(self) -> int:
        return len(self.entries)

    def value(self, key: TabularStateKey, code: int) -> float:
        row = self.entries.get(key)
        return row.get(code, 0.0) if row else 0.0

    def set(self, key: TabularStateKey, code: int, value: float) -> None:
        self.entries.setdefault(key, {})[code] = value

    def best_value(self, key: TabularStateKey, codes: Sequence[int]) -> float:
        row = self.entries.get(key)
        if not row or not codes:
            return 0.0
        return max(row.get(code, 0.0) for code in codes)

    def export_tsv(self, path: str | Path) -> None:
        """One ``state-key<TAB>action<TAB>q-value`` row per entry."""
        lines = [
            f"{key.render()}\t{code}\t{format(value, '.17g')}"
            for key, row in self.entries.items()
            for code, value in sorted(row.items())
        ]
        Path(path).write_text("".join(line + "\n" for line in lines), encoding="utf-8")

    @classmethod
    def import_tsv(cls, path: str | Path) -> QTable:
        table = cls()
        for number, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), 1):
            if not line.strip() or line.startswith("#"):
                continue
            try:
                key_text, code, value = line.split("\t")
                table.set(TabularStateKey.parse(key_text), int(code), float(value))
            except ValueError as exc:
                raise ConfigurationError(f"{path}:{number}: malformed q-table row") from exc
        return table


def _uniform(available: Sequence[ScalingAction], rng: np.random.Generator) -> ScalingAction:
    return available[int(rng.integers(len(available)))]


def select_action_rl(
    table: QTable,
    key: TabularStateKey,
    available: Sequence[ScalingAction],
    schedule: ExplorationSchedule,
    rng: np.random.Generator,
    learn_departures: bool = False,
) -> ScalingAction:
    """ε-greedy on arrivals (random for unseen keys); departures are uniform random."""
    if not available:
        raise ValueError("no available actions")
    if key.event_kind == DEPARTURE and not learn_departures:
        return _uniform(available, rng)
    if key not in table or rng.random() < schedule.epsilon:
        return _uniform(available, rng)
    # ties go to the lowest action code
    return max(sorted(available, key=lambda a: a.code), key=lambda a: table.value(key, a.code))


def q_update(
    table: QTable,
    key: TabularStateKey,
    code: int,
    reward: float,
    next_key: TabularStateKey,
    next_codes: Sequence[int],
    params: LearningParams,
) -> QTable:
    """Blend in r + gamma * best next value, the max taken over the next available actions."""
    target = reward + params.gamma * table.best_value(next_key, next_codes)
    current = table.value(key, code)
    table.set(key, code, (1.0 - params.alpha) * current + params.alpha * target)
    return table


def action_index(action: ScalingAction) -> int:
    """Network output slot: [remove, enqueue/keep, deploy(1) .. deploy(N)]."""
    return action.code + 1


def action_mask(available: Sequence[ScalingAction], n_nodes: int) -> np.ndarray:
    mask = np.zeros(n_nodes + 2, dtype=bool)
    for action in available:
        mask[action_index(action)] = True
    return mask


def select_action_drl(
    net: DenseNetwork,
    features: FeatureVector,
    available: Sequence[ScalingAction],
    schedule: ExplorationSchedule,
    rng: np.random.Generator,
    is_departure: bool,
    learn_departures: bool = False,
) -> ScalingAction:
    """ε-greedy over the network's q-values restricted to the available actions."""
    if not available:
        raise ValueError("no available actions")
    if is_departure and not learn_departures:
        return _uniform(available, rng)
    if rng.random() < schedule.epsilon:
        return _uniform(available, rng)
    q_values = net.forward(features)
    by_index = {action_index(action): action for action in available}
    masked = np.full(q_values.shape, -np.inf)
    indices = np.fromiter(by_index, dtype=int)
    masked[indices] = q_values[indices]
    return by_index[int(np.argmax(masked))]


def mnt_decide(
    event: SimEvent,
    queue_len: int,
    has_capacity: bool,
    deadline_ok: bool,
    load: float,
    threshold: float,
    delay_aware: bool,
) -> int:
    """Threshold scaler: 1 create replica, 0 enqueue/keep, -1 remove."""
    if event.kind == DEPARTURE:
        return -1 if queue_len == 0 else 0
    if has_capacity and (deadline_ok or not delay_aware) and load > threshold:
        return 1
    return 0


def allocate_first_fit(state: ClusterState, function_class: FunctionClass, topology: Topology) -> int:
    """Closest feasible node (lowest tx_delay, then lowest id)."""
    candidates = set(feasible_nodes(state, function_class, topology.nodes))
    for node_id in topology.closest_first:
        if node_id in candidates:
            return node_id
    raise NoFeasibleNode(function_class.id)


def allocate_random_fit(
    state: ClusterState, function_class: FunctionClass, topology: Topology, rng: np.random.Generator
) -> int:
    """Uniform choice among feasible nodes."""
    candidates = feasible_nodes(state, function_class, topology.nodes)
    if not candidates:
        raise NoFeasibleNode(function_class.id)
    return candidates[int(rng.integers(len(candidates)))]


@dataclass
class Observation:
    """What an agent saw before acting on ``event``."""

    event: SimEvent
    available: list[ScalingAction]
    key: TabularStateKey | None = None
    features: FeatureVector | None = None
    mask: np.ndarray | None = None


class ScalingAgent:
    """Decision interface shared by every policy."""

    name = "agent"
    learns = False

    def begin_episode(self, episode: int, total_episodes: int, greedy: bool = False) -> None:
        """Hook run before each episode (1-based); ``greedy`` switches exploration off."""

    def end_episode(self) -> None:
        """Hook run after the last event of an episode."""

    def observe(self, env: ScalingEnvironment, event: SimEvent) -> Observation:
        return Observation(event, env.available_actions(event))

    def select(self, env: ScalingEnvironment, observation: Observation) -> ScalingAction:
        raise NotImplementedError

    def learn(
        self, previous: Observation, action: ScalingAction, reward: float, current: Observation
    ) -> None:
        """Consume one transition; no-op for stateless policies."""

    def settle(self, request_id: int, reward: float) -> None:
        """Late reward for the Enqueue of ``request_id``."""

    def snapshot(self, path: Path) -> Path | None:
        """Persist learned state under ``path`` (without suffix); returns the written file."""
        return None


class LearningAgent(ScalingAgent):
    """Shared episode bookkeeping of the value-learning agents."""

    learns = True

    def __init__(
        self,
        schedule: ExplorationSchedule,
        rng: np.random.Generator,
        learn_departures: bool,
        credit: CreditAssignment | None,
        logger_name: str,
        config: dict | None,
    ):
        self.schedule = schedule
        self.acting = schedule
        self.rng = rng
        self.learn_departures = learn_departures
        self.credit = credit if credit is not None else CreditAssignment()
        self.parked: dict[int, tuple[Observation, Observation]] = {}
        self.logger = get_logger(logger_name, config)

    def begin_episode(self, episode: int, total_episodes: int, greedy: bool = False) -> None:
        self.schedule = decay_epsilon(self.schedule, episode, total_episodes)
        self.acting = replace(self.schedule, epsilon=0.0) if greedy else self.schedule

    def end_episode(self) -> None:
        if self.parked:
            self.logger.debug(f"dropping {len(self.parked)} enqueue(s) still waiting at episode end")
        self.parked.clear()

    def learn(
        self, previous: Observation, action: ScalingAction, reward: float, current: Observation
    ) -> None:
        if self.credit.defer_enqueue and action.kind is ActionKind.ENQUEUE:
            self.parked[previous.event.request_id] = (previous, current)
            return
        self._update(previous, action, self.credit.learned(reward), current)

    def settle(self, request_id: int, reward: float) -> None:
        if (parked := self.parked.pop(request_id, None)) is not None:
            previous, current = parked
            self._update(previous, ENQUEUE, self.credit.learned(reward), current)

    def _update(
        self, previous: Observation, action: ScalingAction, reward: float, current: Observation
    ) -> None:
        raise NotImplementedError


class QLearningAgent(LearningAgent):
    """Tabular Q-learning over the availability/queue state key."""

    name = "rl"

    def __init__(
        self,
        params: LearningParams,
        schedule: ExplorationSchedule,
        rng: np.random.Generator,
        learn_departures: bool = False,
        table: QTable | None = None,
        credit: CreditAssignment | None = None,
        config: dict | None = None,
    ):
        super().__init__(schedule, rng, learn_departures, credit, "agents.rl", config)
        self.params = params
        self.table = table if table is not None else QTable()

    def observe(self, env: ScalingEnvironment, event: SimEvent) -> Observation:
        return Observation(event, env.available_actions(event), key=env.encode_tabular(event))

    def select(self, env: ScalingEnvironment, observation: Observation) -> ScalingAction:
        assert observation.key is not None
        return select_action_rl(
            self.table,
            observation.key,
            observation.available,
            self.acting,
            self.rng,
            self.learn_departures,
        )

    def _update(
        self, previous: Observation, action: ScalingAction, reward: float, current: Observation
    ) -> None:
        assert previous.key is not None and current.key is not None
        q_update(
            self.table,
            previous.key,
            action.code,
            reward,
            current.key,
            [a.code for a in current.available],
            self.params,
        )

    def snapshot(self, path: Path) -> Path | None:
        target = path.with_name(path.name + ".qtable.tsv")
        self.table.export_tsv(target)
        return target


class DeepQAgent(LearningAgent):
    """Dense-network q-estimator fitted on a replay sample every ``update_every`` events."""

    name = "drl"

    def __init__(
        self,
        net: DenseNetwork,
        train_config: TrainConfig,
        schedule: ExplorationSchedule,
        rng: np.random.Generator,
        learn_departures: bool = False,
        config: dict | None = None,
        credit: CreditAssignment | None = None,
    ):
        super().__init__(schedule, rng, learn_departures, credit, "agents.drl", config)
        self.net = net
        self.train_config = train_config
        self.memory = ReplayMemory(train_config.replay_capacity)
        self.optimizer = make_optimizer(train_config.optimizer, train_config.learning_rate)
        self.steps = 0
        self.losses: list[float] = []

    def observe(self, env: ScalingEnvironment, event: SimEvent) -> Observation:
        available = env.available_actions(event)
        return Observation(
            event,
            available,
            features=env.encode_features(event),
            mask=action_mask(available, env.topology.n_nodes),
        )

    def select(self, env: ScalingEnvironment, observation: Observation) -> ScalingAction:
        assert observation.features is not None
        return select_action_drl(
            self.net,
            observation.features,
            observation.available,
            self.acting,
            self.rng,
            observation.event.kind == DEPARTURE,
            self.learn_departures,
        )

    def learn(
        self, previous: Observation, action: ScalingAction, reward: float, current: Observation
    ) -> None:
        super().learn(previous, action, reward, current)
        self.steps += 1
        if self.steps % self.train_config.update_every == 0 and len(self.memory):
            batch = self.memory.sample(self.train_config.batch_size, self.rng)
            loss = fit(self.net, batch, self.train_config, self.optimizer)
            self.losses.append(loss)
            self.logger.debug(f"fit {len(self.losses)} at event {self.steps}: loss {loss:.6f}")

    def _update(
        self, previous: Observation, action: ScalingAction, reward: float, current: Observation
    ) -> None:
        assert previous.features is not None and current.features is not None
        assert current.mask is not None
        self.memory.push(
            Transition(previous.features, action_index(action), reward, current.features, current.mask)
        )

    def snapshot(self, path: Path) -> Path | None:
        target = path.with_name(path.name + ".weights.txt")
        self.net.save(target)
        return target


class MonitoringAgent(ScalingAgent):
    """Threshold scaler, optionally delay-aware, with first-fit or random-fit placement."""

    def __init__(
        self,
        topology: Topology,
        threshold: float,
        delay_aware: bool,
        allocator: str,
        rng: np.random.Generator,
        config: dict | None = None,
    ):
        if allocator not in ALLOCATORS:
            raise ConfigurationError(f"allocator must be one of {ALLOCATORS}, got {allocator!r}")
        self.topology = topology
        self.threshold = threshold
        self.delay_aware = delay_aware
        self.allocator = allocator
        self.rng = rng
        self.name = "mnt_constraint" if delay_aware else "mnt"
        self.logger = get_logger("agents.mnt", config)

    def deadline_ok(self, state: ClusterState, function_class: FunctionClass, waited: float) -> bool:
        """Some feasible node meets the deadline given the time already waited."""
        return any(
            function_class.processing_delay + self.topology.node(node_id).tx_delay + waited
            <= function_class.deadline
            for node_id in feasible_nodes(state, function_class, self.topology.nodes)
        )

    def select(self, env: ScalingEnvironment, observation: Observation) -> ScalingAction:
        event = observation.event
        state = env.state
        queue_len = len(state.queues[event.class_id - 1])

        if event.kind == DEPARTURE:
            decision = mnt_decide(event, queue_len, False, False, queue_len, self.threshold, False)
            return REMOVE if decision == -1 else KEEP

        function_class = self.topology.function_class(event.class_id)
        has_capacity = len(observation.available) > 1
        deadline_ok = self.delay_aware and self.deadline_ok(state, function_class, 0.0)
        decision = mnt_decide(
            event,
            queue_len,
            has_capacity,
            deadline_ok,
            queue_len,
            self.threshold,
            self.delay_aware,
        )
        if decision != 1:
            return ENQUEUE
        try:
            if self.allocator == FIRST_FIT:
                node_id = allocate_first_fit(state, function_class, self.topology)
            else:
                node_id = allocate_random_fit(state, function_class, self.topology, self.rng)
        except NoFeasibleNode:
            self.logger.warning(f"no feasible node for class {function_class.id}; enqueueing")
            return ENQUEUE
        return deploy(node_id)
