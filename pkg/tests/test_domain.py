"""Tests for the core value types."""

import pytest

from src.domain import (
    ENQUEUE,
    KEEP,
    REMOVE,
    ActionKind,
    ClusterState,
    EdgeNode,
    FunctionClass,
    ScalingAction,
    action_from_code,
    deploy,
    feasible_nodes,
    validate_topology,
)
from src.errors import ConfigurationError, InfeasibleClass


class TestFunctionClass:
    """Test function class validation."""

    def test_valid_class(self):
        """Test a class with default processing delay."""
        fc = FunctionClass(1, cpu_demand=1, mean_service_time=5.0, deadline=20.0, mean_interarrival=2.5)
        assert fc.processing_delay == 1.0

    def test_zero_demand_rejected(self):
        """Test that cpu_demand below one is a configuration error."""
        with pytest.raises(ConfigurationError, match="cpu_demand"):
            FunctionClass(1, cpu_demand=0, mean_service_time=5.0, deadline=20.0, mean_interarrival=2.5)

    def test_deadline_below_processing_delay(self):
        """Test that a deadline shorter than processing can never be met."""
        with pytest.raises(ConfigurationError, match="processing delay"):
            FunctionClass(
                1,
                cpu_demand=1,
                mean_service_time=5.0,
                deadline=0.5,
                mean_interarrival=2.5,
                processing_delay=1.0,
            )

    def test_negative_tx_delay(self):
        """Test node validation."""
        with pytest.raises(ConfigurationError):
            EdgeNode(1, capacity=4, tx_delay=-1.0)


class TestValidateTopology:
    """Test static feasibility checks."""

    def test_infeasible_class(self):
        """Test that a class larger than every node is reported with its id."""
        nodes = [EdgeNode(1, 4, 1.0), EdgeNode(2, 4, 2.0)]
        classes = [
            FunctionClass(1, 2, 5.0, 20.0, 2.5),
            FunctionClass(2, 5, 5.0, 20.0, 2.5),
        ]
        with pytest.raises(InfeasibleClass) as info:
            validate_topology(nodes, classes)
        assert info.value.class_id == 2
        assert info.value.code == "infeasible_class"

    def test_ids_must_be_contiguous(self):
        """Test node ids 1..N in order."""
        with pytest.raises(ConfigurationError, match="node ids"):
            validate_topology([EdgeNode(2, 4, 1.0)], [FunctionClass(1, 1, 5.0, 20.0, 2.5)])

    def test_closest_first_breaks_ties_by_id(self):
        """Test closest_first orders by tx delay then id."""
        nodes = [EdgeNode(1, 4, 7.0), EdgeNode(2, 4, 3.0), EdgeNode(3, 4, 3.0)]
        topology = validate_topology(nodes, [FunctionClass(1, 1, 5.0, 20.0, 2.5)])
        assert topology.closest_first == (2, 3, 1)
        assert topology.min_tx_delay == 3.0


class TestClusterState:
    """Test replica bookkeeping."""

    def test_add_and_remove_replica(self, small_topology):
        """Test that usage follows replica creation and removal."""
        state = ClusterState.empty(2, 2)
        state.add_replica(1, 2, 2)
        node = small_topology.node(2)
        assert state.free_capacity(node) == 2
        assert state.total_replicas() == 1
        state.remove_replica(1, 2, 2)
        assert state.free_capacity(node) == 4
        assert state.total_replicas() == 0

    def test_violations_flags_over_capacity(self, small_topology):
        """Test the brute-force checker catches an overfull node."""
        state = ClusterState.empty(2, 2)
        for _ in range(3):
            state.add_replica(1, 1, 2)
            state.idle_replicas[0][0] += 1
        problems = state.violations(small_topology)
        assert any("allocated" in problem for problem in problems)

    def test_violations_flags_busy_mismatch(self, small_topology):
        """Test busy replicas must match in-flight requests."""
        state = ClusterState.empty(2, 2)
        state.add_replica(1, 1, 2)
        assert state.violations(small_topology)
        state.in_flight[7] = (1, 1, 0.0)
        assert state.violations(small_topology) == []

    def test_feasible_nodes_counts_idle_replicas(self, small_topology):
        """Test that a full node stays feasible when it holds an idle replica of the class."""
        state = ClusterState.empty(2, 2)
        fc = small_topology.function_class(1)
        state.add_replica(1, 1, 2)
        state.add_replica(1, 1, 2)
        assert feasible_nodes(state, fc, small_topology.nodes) == [2]
        state.idle_replicas[0][0] = 1
        assert feasible_nodes(state, fc, small_topology.nodes) == [1, 2]


class TestScalingAction:
    """Test action codes."""

    def test_codes(self):
        """Test the integer code of every action kind."""
        assert ENQUEUE.code == 0
        assert KEEP.code == 0
        assert REMOVE.code == -1
        assert deploy(3).code == 3
        assert str(deploy(3)) == "deploy(3)"

    def test_action_from_code(self):
        """Test decoding depends on the event kind."""
        assert action_from_code(0, is_departure=True) is KEEP
        assert action_from_code(0, is_departure=False) is ENQUEUE
        assert action_from_code(2, is_departure=False) == deploy(2)
        with pytest.raises(ValueError):
            action_from_code(-1, is_departure=False)
        with pytest.raises(ValueError):
            action_from_code(1, is_departure=True)

    def test_only_deploy_carries_node(self):
        """Test construction guards."""
        with pytest.raises(ValueError):
            ScalingAction(ActionKind.DEPLOY)
        with pytest.raises(ValueError):
            ScalingAction(ActionKind.KEEP, 1)
        assert deploy(1).is_arrival_action
        assert not REMOVE.is_arrival_action
