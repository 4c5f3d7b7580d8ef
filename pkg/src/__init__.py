"""
edge-scaler - event-driven simulator for serverless function auto-scaling at the edge.

Compares tabular Q-learning, a dense-network Q-agent and threshold-based monitoring scalers
on a cluster of capacity-limited edge nodes serving Poisson request streams.
"""

__version__ = "1.0.0"

from .config import ConfigManager, ExperimentConfig
from .core import ResultRow, SimulationEngine, run_episode
from .logger import get_logger
from .render import ResultWriter, SummaryRenderer

__all__ = [
    "ConfigManager",
    "ExperimentConfig",
    "ResultRow",
    "SimulationEngine",
    "run_episode",
    "get_logger",
    "ResultWriter",
    "SummaryRenderer",
]
