"""Scaling environment: available actions, transitions, delay accounting, reward, state encodings."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

from .domain import (
    ENQUEUE,
    KEEP,
    REMOVE,
    ActionKind,
    ClusterState,
    EdgeNode,
    FunctionClass,
    Request,
    ScalingAction,
    Topology,
    deploy,
)
from .errors import ConfigurationError, IllegalAction
from .workload import DEPARTURE, SimEvent, Workload

DEFAULT_Q_MAX = 10

FeatureVector = np.ndarray


class TabularStateKey(NamedTuple):
    """Hashable tabular state: availability bits, clipped queue lengths, event kind and class."""

    availability: tuple[int, ...]
    queue_lengths: tuple[int, ...]
    event_kind: int
    event_class: int

    def render(self) -> str:
        bits = "".join(str(bit) for bit in self.availability)
        queues = ",".join(str(length) for length in self.queue_lengths)
        return f"{bits}|{queues}|{self.event_kind}|{self.event_class}"

    @classmethod
    def parse(cls, text: str) -> TabularStateKey:
        try:
            bits, queues, kind, event_class = text.strip().split("|")
            return cls(
                availability=tuple(int(bit) for bit in bits),
                queue_lengths=tuple(int(q) for q in queues.split(",")),
                event_kind=int(kind),
                event_class=int(event_class),
            )
        except ValueError as exc:
            raise ValueError(f"malformed state key {text!r}") from exc


@dataclass(frozen=True)
class DelayRecord:
    """Delay components of one completed request and its deadline outcome."""

    request_id: int
    d_proc: float
    d_tx: float
    d_queue: float
    total: float
    satisfied: bool

    @classmethod
    def build(
        cls, request_id: int, d_proc: float, d_tx: float, d_queue: float, deadline: float
    ) -> DelayRecord:
        total = d_proc + d_tx + d_queue
        return cls(request_id, d_proc, d_tx, d_queue, total, total <= deadline)


@dataclass(frozen=True)
class RewardParams:
    r1: float = 1.0
    r2: float = -1.0
    w1: float = 1.0
    w2: float = 1.0

    def __post_init__(self) -> None:
        if not self.r1 > 0 > self.r2:
            raise ConfigurationError(f"reward needs r1 > 0 > r2, got r1={self.r1} r2={self.r2}")


def total_delay(record: DelayRecord) -> float:
    return record.d_proc + record.d_tx + record.d_queue


def deadline_satisfied(total: float, function_class: FunctionClass) -> bool:
    """Inclusive at equality."""
    return total <= function_class.deadline


def reward(satisfied: bool, psi: float, params: RewardParams) -> float:
    """r1 or r2 by outcome, scaled by w/psi when psi > 0.

    ``psi`` is the transmission delay of the node picked by a Deploy, else 0.
    """
    if psi < 0:
        raise ValueError(f"psi must be >= 0, got {psi}")
    if satisfied:
        return params.r1 if psi == 0 else params.r1 * params.w1 / psi
    return params.r2 if psi == 0 else params.r2 * params.w2 / psi


def reward_bounds(params: RewardParams) -> tuple[float, float]:
    """Reward range once transmission delays below 1 ms are read as 1 ms."""
    return min(params.r2, params.r2 * params.w2), max(params.r1, params.r1 * params.w1)


def availability_bits(state: ClusterState, topology: Topology) -> tuple[int, ...]:
    """Bit k is 1 iff feasible_nodes is non-empty for class k."""
    max_free = max(node.capacity - state.used[node.id - 1] for node in topology.nodes)
    return tuple(
        1 if max_free >= fc.cpu_demand or any(state.idle_replicas[fc.id - 1]) else 0
        for fc in topology.classes
    )


def encode_tabular(
    state: ClusterState, event: SimEvent, topology: Topology, q_max: int = DEFAULT_Q_MAX
) -> TabularStateKey:
    return TabularStateKey(
        availability=availability_bits(state, topology),
        queue_lengths=tuple(min(len(queue), q_max) for queue in state.queues),
        event_kind=event.kind,
        event_class=event.class_id,
    )


def feature_size(n_classes: int, n_nodes: int) -> int:
    return n_classes * n_nodes + n_classes + 1 + n_classes


def encode_features(state: ClusterState, event: SimEvent, topology: Topology) -> FeatureVector:
    """Layout: replica matrix row-major, queue lengths, event bit, one-hot event class."""
    n_classes, n_nodes = topology.n_classes, topology.n_nodes
    values = np.zeros(feature_size(n_classes, n_nodes), dtype=np.float64)
    values[: n_classes * n_nodes] = np.asarray(state.replicas, dtype=np.float64).ravel()
    offset = n_classes * n_nodes
    values[offset : offset + n_classes] = [len(queue) for queue in state.queues]
    offset += n_classes
    values[offset] = event.kind
    values[offset + 1 + event.class_id - 1] = 1.0
    return values


def available_actions(
    state: ClusterState, event: SimEvent, topology: Topology
) -> list[ScalingAction]:
    """Enqueue or deploy on a feasible node for arrivals; remove or keep for departures."""
    if event.kind == DEPARTURE:
        return [REMOVE, KEEP]
    function_class = topology.function_class(event.class_id)
    k = function_class.id - 1
    idle = state.idle_replicas[k]
    demand = function_class.cpu_demand
    actions = [ENQUEUE]
    for node in topology.nodes:
        if node.capacity - state.used[node.id - 1] >= demand or idle[node.id - 1] >= 1:
            actions.append(deploy(node.id))
    return actions


@dataclass
class StepOutcome:
    """Result of one transition."""

    scheduled: list[SimEvent] = field(default_factory=list)
    delay: DelayRecord | None = None
    reward: float = 0.0
    psi: float = 0.0
    satisfied: bool = False
    dispatched: Request | None = None
    # (request id, reward) for a queued request that just left its queue
    settled: tuple[int, float] | None = None


class ScalingEnvironment:
    """Single-owner mutable environment advanced one event at a time."""

    def __init__(
        self,
        topology: Topology,
        reward_params: RewardParams,
        workload: Workload,
        q_max: int = DEFAULT_Q_MAX,
    ):
        self.topology = topology
        self.reward_params = reward_params
        self.q_max = q_max
        self.reset(workload)

    def reset(self, workload: Workload) -> None:
        """Empty cluster for a new episode."""
        self.workload = workload
        self.state = ClusterState.empty(self.topology.n_classes, self.topology.n_nodes)
        self.requests: dict[int, Request] = {}
        self.arrivals = 0
        self.completed = 0

    def available_actions(self, event: SimEvent) -> list[ScalingAction]:
        return available_actions(self.state, event, self.topology)

    def encode_tabular(self, event: SimEvent) -> TabularStateKey:
        return encode_tabular(self.state, event, self.topology, self.q_max)

    def encode_features(self, event: SimEvent) -> FeatureVector:
        return encode_features(self.state, event, self.topology)

    def queued(self) -> int:
        return sum(len(queue) for queue in self.state.queues)

    def enqueue_satisfiable(self, request: Request, clock: float) -> bool:
        """Whether a queued request could still meet its deadline on the closest node."""
        function_class = self.topology.function_class(request.class_id)
        best = (
            (clock - request.arrival_time)
            + function_class.processing_delay
            + self.topology.min_tx_delay
        )
        return deadline_satisfied(best, function_class)

    def apply_action(self, event: SimEvent, action: ScalingAction) -> StepOutcome:
        """Advance the cluster by one decision at ``event.time``."""
        if event.kind == DEPARTURE:
            return self._apply_departure(event, action)
        return self._apply_arrival(event, action)

    def _apply_arrival(self, event: SimEvent, action: ScalingAction) -> StepOutcome:
        clock = event.time
        function_class = self.topology.function_class(event.class_id)
        request = Request(event.request_id, event.class_id, event.time)

        if action.kind is ActionKind.DEPLOY:
            node = self._checked_node(function_class, action)
            self.arrivals += 1
            departure = self._dispatch(request, node.id, clock)
            total = (clock - request.arrival_time) + node.tx_delay + function_class.processing_delay
            satisfied = deadline_satisfied(total, function_class)
            return StepOutcome(
                scheduled=[departure],
                reward=reward(satisfied, node.tx_delay, self.reward_params),
                psi=node.tx_delay,
                satisfied=satisfied,
                dispatched=request,
            )

        if action.kind is not ActionKind.ENQUEUE:
            raise IllegalAction(f"{action} is not an arrival action")
        self.arrivals += 1
        self.state.queues[function_class.id - 1].append(request)
        satisfied = self.enqueue_satisfiable(request, clock)
        return StepOutcome(
            reward=reward(satisfied, 0.0, self.reward_params), psi=0.0, satisfied=satisfied
        )

    def _apply_departure(self, event: SimEvent, action: ScalingAction) -> StepOutcome:
        if action.kind not in (ActionKind.KEEP, ActionKind.REMOVE):
            raise IllegalAction(f"{action} is not a departure action")
        if event.request_id not in self.state.in_flight:
            raise IllegalAction(f"request {event.request_id} is not in flight")

        clock = event.time
        class_id, node_id, dispatch_time = self.state.in_flight.pop(event.request_id)
        request = self.requests.pop(event.request_id)
        request.completion_time = clock
        function_class = self.topology.function_class(class_id)
        node = self.topology.node(node_id)
        record = DelayRecord.build(
            request.id,
            function_class.processing_delay,
            node.tx_delay,
            dispatch_time - request.arrival_time,
            function_class.deadline,
        )
        self.completed += 1

        outcome = StepOutcome(
            delay=record,
            reward=reward(record.satisfied, 0.0, self.reward_params),
            psi=0.0,
            satisfied=record.satisfied,
        )
        k = class_id - 1
        if action.kind is ActionKind.REMOVE:
            self.state.remove_replica(class_id, node_id, function_class.cpu_demand)
            return outcome

        self.state.idle_replicas[k][node_id - 1] += 1
        queue = self.state.queues[k]
        if queue:
            head = queue.popleft()
            outcome.scheduled.append(self._dispatch(head, node_id, clock))
            outcome.dispatched = head
            served = (clock - head.arrival_time) + function_class.processing_delay + node.tx_delay
            met = deadline_satisfied(served, function_class)
            outcome.settled = (head.id, reward(met, 0.0, self.reward_params))
        return outcome

    def _checked_node(self, function_class: FunctionClass, action: ScalingAction) -> EdgeNode:
        node_id = action.node
        if node_id is None or not 1 <= node_id <= self.topology.n_nodes:
            raise IllegalAction(f"{action}: node out of range 1..{self.topology.n_nodes}")
        node = self.topology.node(node_id)
        has_room = self.state.free_capacity(node) >= function_class.cpu_demand
        has_idle = self.state.idle_replicas[function_class.id - 1][node_id - 1] >= 1
        if not (has_room or has_idle):
            raise IllegalAction(f"{action}: node {node_id} cannot host class {function_class.id}")
        return node

    def _dispatch(self, request: Request, node_id: int, clock: float) -> SimEvent:
        """Start serving ``request`` on ``node_id``; returns its departure event."""
        function_class = self.topology.function_class(request.class_id)
        k, n = request.class_id - 1, node_id - 1
        if self.state.idle_replicas[k][n] > 0:
            self.state.idle_replicas[k][n] -= 1
        else:
            self.state.add_replica(request.class_id, node_id, function_class.cpu_demand)

        service_time = self.workload.service(function_class)
        request.dispatch_time = clock
        request.node = node_id
        request.service_time = service_time
        self.requests[request.id] = request
        self.state.in_flight[request.id] = (request.class_id, node_id, clock)
        return SimEvent(clock + service_time, DEPARTURE, request.class_id, request.id, node_id)
