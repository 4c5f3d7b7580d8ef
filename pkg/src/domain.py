"""Core value types: function classes, edge nodes, cluster state, requests and actions."""

from __future__ import annotations

import enum
from collections import deque
from dataclasses import dataclass, field
from functools import cached_property

from .errors import ConfigurationError, InfeasibleClass

DEFAULT_PROCESSING_DELAY = 1.0


@dataclass(frozen=True)
class FunctionClass:
    """One serverless function class. Times are milliseconds."""

    id: int
    cpu_demand: int
    mean_service_time: float
    deadline: float
    mean_interarrival: float
    processing_delay: float = DEFAULT_PROCESSING_DELAY

    def __post_init__(self) -> None:
        if self.cpu_demand < 1:
            raise ConfigurationError(f"class {self.id}: cpu_demand must be >= 1")
        for name in ("mean_service_time", "deadline", "mean_interarrival", "processing_delay"):
            if not getattr(self, name) > 0:
                raise ConfigurationError(f"class {self.id}: {name} must be > 0")
        if self.deadline < self.processing_delay:
            raise ConfigurationError(
                f"class {self.id}: deadline {self.deadline} is below processing delay "
                f"{self.processing_delay}"
            )


@dataclass(frozen=True)
class EdgeNode:
    """Worker node with CPU capacity and a constant master-to-worker delay."""

    id: int
    capacity: int
    tx_delay: float

    def __post_init__(self) -> None:
        if self.capacity < 1:
            raise ConfigurationError(f"node {self.id}: capacity must be >= 1")
        if self.tx_delay < 0:
            raise ConfigurationError(f"node {self.id}: tx_delay must be >= 0")


@dataclass(frozen=True)
class Topology:
    """A validated set of nodes and function classes."""

    nodes: tuple[EdgeNode, ...]
    classes: tuple[FunctionClass, ...]

    @property
    def n_nodes(self) -> int:
        return len(self.nodes)

    @property
    def n_classes(self) -> int:
        return len(self.classes)

    def function_class(self, class_id: int) -> FunctionClass:
        return self.classes[class_id - 1]

    def node(self, node_id: int) -> EdgeNode:
        return self.nodes[node_id - 1]

    @cached_property
    def closest_first(self) -> tuple[int, ...]:
        """Node ids by ascending tx_delay, ties by ascending id."""
        ordered = sorted(self.nodes, key=lambda node: (node.tx_delay, node.id))
        return tuple(node.id for node in ordered)

    @cached_property
    def min_tx_delay(self) -> float:
        return min(node.tx_delay for node in self.nodes)


def validate_topology(nodes: list[EdgeNode], classes: list[FunctionClass]) -> Topology:
    """Every class must fit on at least one node."""
    if not nodes or not classes:
        raise ConfigurationError("topology needs at least one node and one function class")

    for position, node in enumerate(nodes, 1):
        if node.id != position:
            raise ConfigurationError(f"node ids must be 1..N in order, got {node.id} at {position}")
    for position, function_class in enumerate(classes, 1):
        if function_class.id != position:
            raise ConfigurationError(
                f"class ids must be 1..K in order, got {function_class.id} at {position}"
            )

    largest = max(node.capacity for node in nodes)
    for function_class in classes:
        if function_class.cpu_demand > largest:
            raise InfeasibleClass(function_class.id, function_class.cpu_demand, largest)

    return Topology(nodes=tuple(nodes), classes=tuple(classes))


@dataclass(slots=True)
class Request:
    """A single function invocation."""

    id: int
    class_id: int
    arrival_time: float
    dispatch_time: float | None = None
    node: int | None = None
    completion_time: float | None = None
    service_time: float | None = None


@dataclass
class ClusterState:
    """Replica matrices, per-class FIFO queues and in-flight requests.

    Matrices are indexed ``[class_id - 1][node_id - 1]``. ``used`` caches the CPU units allocated
    per node and is kept in step by ``add_replica`` / ``remove_replica``.
    """

    replicas: list[list[int]]
    idle_replicas: list[list[int]]
    queues: list[deque[Request]]
    in_flight: dict[int, tuple[int, int, float]] = field(default_factory=dict)
    used: list[int] = field(default_factory=list)

    @classmethod
    def empty(cls, n_classes: int, n_nodes: int) -> ClusterState:
        return cls(
            replicas=[[0] * n_nodes for _ in range(n_classes)],
            idle_replicas=[[0] * n_nodes for _ in range(n_classes)],
            queues=[deque() for _ in range(n_classes)],
            used=[0] * n_nodes,
        )

    def free_capacity(self, node: EdgeNode) -> int:
        return node.capacity - self.used[node.id - 1]

    def queue_lengths(self) -> list[int]:
        return [len(queue) for queue in self.queues]

    def total_replicas(self) -> int:
        return sum(sum(row) for row in self.replicas)

    def add_replica(self, class_id: int, node_id: int, demand: int) -> None:
        """Instantiate a busy replica."""
        self.replicas[class_id - 1][node_id - 1] += 1
        self.used[node_id - 1] += demand

    def remove_replica(self, class_id: int, node_id: int, demand: int) -> None:
        """Destroy a busy replica."""
        self.replicas[class_id - 1][node_id - 1] -= 1
        self.used[node_id - 1] -= demand

    def violations(self, topology: Topology) -> list[str]:
        """Brute-force invariant check; empty list when the state is consistent."""
        problems: list[str] = []
        busy = [[0] * topology.n_nodes for _ in range(topology.n_classes)]
        for class_id, node_id, _ in self.in_flight.values():
            busy[class_id - 1][node_id - 1] += 1

        for node in topology.nodes:
            n = node.id - 1
            allocated = sum(
                fc.cpu_demand * self.replicas[fc.id - 1][n] for fc in topology.classes
            )
            if allocated > node.capacity:
                problems.append(f"node {node.id}: {allocated} CPU allocated > {node.capacity}")
            if allocated != self.used[n]:
                problems.append(f"node {node.id}: cached usage {self.used[n]} != {allocated}")

        for fc in topology.classes:
            k = fc.id - 1
            for n in range(topology.n_nodes):
                total, idle = self.replicas[k][n], self.idle_replicas[k][n]
                if total < 0 or idle < 0:
                    problems.append(f"class {fc.id} node {n + 1}: negative count")
                if idle > total:
                    problems.append(f"class {fc.id} node {n + 1}: idle {idle} > replicas {total}")
                if total - idle != busy[k][n]:
                    problems.append(
                        f"class {fc.id} node {n + 1}: {total - idle} busy replicas but "
                        f"{busy[k][n]} requests in flight"
                    )
        return problems


def feasible_nodes(
    state: ClusterState, function_class: FunctionClass, nodes: tuple[EdgeNode, ...] | list[EdgeNode]
) -> list[int]:
    """Nodes with room for a new replica or an idle replica to reuse, by ascending id."""
    k = function_class.id - 1
    idle = state.idle_replicas[k]
    demand = function_class.cpu_demand
    return [
        node.id
        for node in nodes
        if node.capacity - state.used[node.id - 1] >= demand or idle[node.id - 1] >= 1
    ]


class ActionKind(enum.Enum):
    ENQUEUE = "enqueue"
    DEPLOY = "deploy"
    REMOVE = "remove"
    KEEP = "keep"


@dataclass(frozen=True)
class ScalingAction:
    """Scaling decision. ``code``: 0 enqueue/keep, n deploy, -1 remove."""

    kind: ActionKind
    node: int | None = None

    def __post_init__(self) -> None:
        if (self.kind is ActionKind.DEPLOY) != (self.node is not None):
            raise ValueError("only Deploy carries a node")
        if self.node is not None and self.node < 1:
            raise ValueError(f"node index must be >= 1, got {self.node}")

    @property
    def code(self) -> int:
        if self.kind is ActionKind.DEPLOY:
            return self.node  # type: ignore[return-value]
        if self.kind is ActionKind.REMOVE:
            return -1
        return 0

    @property
    def is_arrival_action(self) -> bool:
        return self.kind in (ActionKind.ENQUEUE, ActionKind.DEPLOY)

    def __str__(self) -> str:
        if self.kind is ActionKind.DEPLOY:
            return f"deploy({self.node})"
        return self.kind.value


ENQUEUE = ScalingAction(ActionKind.ENQUEUE)
KEEP = ScalingAction(ActionKind.KEEP)
REMOVE = ScalingAction(ActionKind.REMOVE)


def deploy(node_id: int) -> ScalingAction:
    return ScalingAction(ActionKind.DEPLOY, node_id)


def action_from_code(code: int, is_departure: bool) -> ScalingAction:
    """Inverse of ``ScalingAction.code`` given the event kind."""
    if is_departure:
        if code == -1:
            return REMOVE
        if code == 0:
            return KEEP
        raise ValueError(f"departure actions are -1 or 0, got {code}")
    if code == 0:
        return ENQUEUE
    if code >= 1:
        return deploy(code)
    raise ValueError(f"arrival actions are 0..N, got {code}")
