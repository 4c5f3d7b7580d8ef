"""Per-episode aggregation of delay, replica occupancy and deadline satisfaction."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .domain import ClusterState
from .environment import DelayRecord


@dataclass(frozen=True)
class EpisodeSummary:
    episode: int
    avg_delay_ms: float
    avg_replicas: float
    satisfaction_rate: float
    completed_requests: int
    events_processed: int
    mean_reward: float = 0.0
    p99_delay_ms: float = 0.0


@dataclass
class MetricsAccumulator:
    """Running sums for one episode. Replica occupancy is time-weighted."""

    delay_sum: float = 0.0
    completed: int = 0
    satisfied: int = 0
    delays: list[float] = field(default_factory=list)
    reward_sum: float = 0.0
    rewards: int = 0
    events: int = 0
    replica_area: float = 0.0
    start_time: float | None = None
    last_time: float = 0.0
    last_count: int = 0

    def record_completion(self, record: DelayRecord) -> MetricsAccumulator:
        self.delay_sum += record.total
        self.completed += 1
        if record.satisfied:
            self.satisfied += 1
        self.delays.append(record.total)
        return self

    def record_reward(self, value: float) -> MetricsAccumulator:
        self.reward_sum += value
        self.rewards += 1
        return self

    def record_event(self) -> MetricsAccumulator:
        self.events += 1
        return self

    def sample_replicas(self, state: ClusterState, clock: float) -> MetricsAccumulator:
        """Close the interval since the last sample, then hold the current replica total."""
        return self.sample_count(state.total_replicas(), clock)

    def sample_count(self, count: int, clock: float) -> MetricsAccumulator:
        if self.start_time is None:
            self.start_time = clock
        else:
            self.replica_area += self.last_count * (clock - self.last_time)
        self.last_time = clock
        self.last_count = count
        return self

    @property
    def elapsed(self) -> float:
        return 0.0 if self.start_time is None else self.last_time - self.start_time

    def summarize(self, episode: int) -> EpisodeSummary:
        """Finalize ratios; pure with respect to the accumulator."""
        return EpisodeSummary(
            episode=episode,
            avg_delay_ms=self.delay_sum / self.completed if self.completed else 0.0,
            avg_replicas=self.replica_area / self.elapsed if self.elapsed > 0 else float(self.last_count),
            satisfaction_rate=self.satisfied / self.completed if self.completed else 0.0,
            completed_requests=self.completed,
            events_processed=self.events,
            mean_reward=self.reward_sum / self.rewards if self.rewards else 0.0,
            p99_delay_ms=float(np.percentile(self.delays, 99)) if self.delays else 0.0,
        )


def record_completion(acc: MetricsAccumulator, record: DelayRecord) -> MetricsAccumulator:
    return acc.record_completion(record)


def sample_replicas(acc: MetricsAccumulator, state: ClusterState, clock: float) -> MetricsAccumulator:
    return acc.sample_replicas(state, clock)


def summarize(acc: MetricsAccumulator, episode: int) -> EpisodeSummary:
    return acc.summarize(episode)
