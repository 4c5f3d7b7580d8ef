"""Seeded workload generation and the event timeline."""

from __future__ import annotations

import heapq
import math
from collections.abc import Mapping, Sequence
from dataclasses import dataclass, replace
from typing import Protocol

import numpy as np

from .domain import FunctionClass, Topology
from .errors import TimelineExhausted

ARRIVAL = 0
DEPARTURE = 1

TX_DELAY_RANGE = (0.0, 30.0)

# Stream tags mixed with the run seed; one independent stream per concern.
_TOPOLOGY_STREAM = 0
_WORKLOAD_STREAM = 1
_AGENT_STREAM = 2
_NETWORK_STREAM = 3


@dataclass(frozen=True, slots=True)
class SimEvent:
    """Arrival (kind 0) or departure (kind 1) of a request of ``class_id``."""

    time: float
    kind: int
    class_id: int
    request_id: int
    node: int | None = None
    seq: int = -1

    @property
    def is_arrival(self) -> bool:
        return self.kind == ARRIVAL

    @property
    def is_departure(self) -> bool:
        return self.kind == DEPARTURE


class EventTimeline:
    """Priority queue of events ordered by (time, insertion sequence)."""

    def __init__(self) -> None:
        self._heap: list[tuple[float, int, SimEvent]] = []
        self._seq = 0
        self._next_request_id = 0
        self.emitted_count = 0

    def __len__(self) -> int:
        return len(self._heap)

    def push(self, event: SimEvent) -> SimEvent:
        if event.time < 0:
            raise ValueError(f"event time must be >= 0, got {event.time}")
        stamped = replace(event, seq=self._seq)
        heapq.heappush(self._heap, (stamped.time, stamped.seq, stamped))
        self._seq += 1
        return stamped

    def schedule_arrival(self, time: float, class_id: int) -> SimEvent | None:
        """Push an arrival with a fresh request id; infinite times are dropped."""
        if math.isinf(time):
            return None
        request_id = self._next_request_id
        self._next_request_id += 1
        return self.push(SimEvent(time, ARRIVAL, class_id, request_id))

    def peek(self) -> SimEvent | None:
        return self._heap[0][2] if self._heap else None

    def next_event(self) -> SimEvent:
        """Remove and return the earliest event."""
        if not self._heap:
            raise TimelineExhausted("no pending events")
        self.emitted_count += 1
        return heapq.heappop(self._heap)[2]


def sample_interarrival(function_class: FunctionClass, rng: np.random.Generator) -> float:
    """Exponential gap with mean ``mean_interarrival``; never zero."""
    return _positive_exponential(function_class.mean_interarrival, rng)


def sample_service(function_class: FunctionClass, rng: np.random.Generator) -> float:
    """Exponential service duration with mean ``mean_service_time``; never zero."""
    return _positive_exponential(function_class.mean_service_time, rng)


def _positive_exponential(mean: float, rng: np.random.Generator) -> float:
    value = float(rng.exponential(mean))
    while value <= 0.0:
        value = float(rng.exponential(mean))
    return value


def sample_topology_delays(
    n_nodes: int, rng: np.random.Generator, delay_range: tuple[float, float] = TX_DELAY_RANGE
) -> list[float]:
    """Independent uniform transmission delays, drawn once per topology."""
    if n_nodes < 1:
        raise ValueError("n_nodes must be >= 1")
    low, high = delay_range
    return [float(value) for value in rng.uniform(low, high, size=n_nodes)]


class Workload(Protocol):
    """Source of inter-arrival and service durations."""

    def interarrival(self, function_class: FunctionClass) -> float: ...

    def service(self, function_class: FunctionClass) -> float: ...


class PoissonWorkload:
    """Exponential inter-arrivals and service times from one random stream."""

    def __init__(self, rng: np.random.Generator):
        self.rng = rng

    def interarrival(self, function_class: FunctionClass) -> float:
        return sample_interarrival(function_class, self.rng)

    def service(self, function_class: FunctionClass) -> float:
        return sample_service(function_class, self.rng)


class ScriptedWorkload:
    """Replays fixed per-class durations. Exhausted arrival scripts stop that class."""

    def __init__(
        self,
        interarrivals: Mapping[int, Sequence[float]],
        services: Mapping[int, Sequence[float]],
    ):
        self._interarrivals = {k: list(v) for k, v in interarrivals.items()}
        self._services = {k: list(v) for k, v in services.items()}

    def interarrival(self, function_class: FunctionClass) -> float:
        script = self._interarrivals.get(function_class.id)
        if not script:
            return math.inf
        return float(script.pop(0))

    def service(self, function_class: FunctionClass) -> float:
        script = self._services.get(function_class.id)
        if not script:
            raise ValueError(f"service script for class {function_class.id} is exhausted")
        return float(script.pop(0))


def seed_timeline(timeline: EventTimeline, topology: Topology, workload: Workload) -> None:
    """Schedule the first arrival of every class."""
    for function_class in topology.classes:
        timeline.schedule_arrival(workload.interarrival(function_class), function_class.id)


def schedule_next_arrival(
    timeline: EventTimeline, event: SimEvent, topology: Topology, workload: Workload
) -> None:
    """Self-scheduling arrivals: popping a class-k arrival queues the next one."""
    function_class = topology.function_class(event.class_id)
    timeline.schedule_arrival(event.time + workload.interarrival(function_class), event.class_id)


class RandomStreams:
    """Derives independent, reproducible generators from one run seed."""

    def __init__(self, seed: int):
        self.seed = seed

    def topology(self) -> np.random.Generator:
        return np.random.default_rng([self.seed, _TOPOLOGY_STREAM])

    def workload(self, episode: int) -> np.random.Generator:
        """Fresh trace per episode: the stream mixes the run seed with the episode index."""
        return np.random.default_rng([self.seed, _WORKLOAD_STREAM, episode])

    def agent(self) -> np.random.Generator:
        return np.random.default_rng([self.seed, _AGENT_STREAM])

    def network(self) -> np.random.Generator:
        return np.random.default_rng([self.seed, _NETWORK_STREAM])
