"""Shared fixtures."""

import pytest

from src.config import ConfigManager, default_config
from src.domain import EdgeNode, FunctionClass, validate_topology


@pytest.fixture
def small_topology():
    """Two nodes of 4 CPU units (tx 5 and 10 ms), two classes."""
    nodes = [EdgeNode(1, 4, 5.0), EdgeNode(2, 4, 10.0)]
    classes = [
        FunctionClass(1, cpu_demand=2, mean_service_time=5.0, deadline=20.0, mean_interarrival=2.5),
        FunctionClass(2, cpu_demand=3, mean_service_time=6.0, deadline=23.0, mean_interarrival=3.0),
    ]
    return validate_topology(nodes, classes)


@pytest.fixture
def fast_tree():
    """Default tree shrunk so a whole experiment runs in well under a second."""
    tree = default_config()
    tree["experiment"]["events_per_episode"] = 400
    tree["experiment"]["seeds"] = [0]
    tree["rl"]["episodes"] = 3
    tree["drl"].update(episodes=2, batch_size=32, update_every=100, replay_capacity=1000)
    tree["output"]["experiment_id"] = "test"
    return tree


@pytest.fixture
def isolated_manager(tmp_path, monkeypatch):
    """ConfigManager whose global directory is an empty temp dir."""
    monkeypatch.delenv("EDGE_SCALER_CONFIG_DIR", raising=False)
    return ConfigManager(custom_config_dir=str(tmp_path / "config"))
