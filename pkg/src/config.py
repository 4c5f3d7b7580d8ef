"""Configuration management for edge-scaler."""

from __future__ import annotations

import copy
import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import yaml

from .agents import ALLOCATORS, CreditAssignment, ExplorationSchedule, LearningParams
from .domain import DEFAULT_PROCESSING_DELAY, FunctionClass
from .environment import DEFAULT_Q_MAX, RewardParams
from .errors import ConfigurationError
from .neural import HIDDEN_LAYERS, TrainConfig
from .workload import TX_DELAY_RANGE

AGENTS = ("rl", "drl", "mnt", "mnt_constraint")
LEARNING_AGENTS = ("rl", "drl")
SWEEP_AXES = ("none", "lambda", "deadline")
FORMATS = ("csv", "json")

DEFAULT_LAMBDA_VALUES = [2.5, 3.0, 3.5, 4.0, 4.5, 5.0]
DEFAULT_DEADLINE_FACTORS = [0.75, 1.0, 1.25, 1.5]
DEFAULT_SWEEP_AGENTS = ["rl", "drl", "mnt:ff", "mnt:rf", "mnt_constraint:ff", "mnt_constraint:rf"]


def default_config() -> dict[str, Any]:
    """The golden default: every constant of the reference simulation setup."""
    return {
        "version": "1.0.0",
        "experiment": {
            "agent": "rl",
            "allocator": "ff",
            "episodes": None,  # None: the agent's own default (rl 100, drl 10, monitoring 1)
            "events_per_episode": 100_000,
            "seeds": [0],
            "workers": 1,
            "monitoring_episodes": 1,
        },
        "topology": {
            "nodes": 10,
            "capacity": 10,
            "tx_delays": None,  # None: drawn uniformly from tx_delay_range per seed
            "tx_delay_range": list(TX_DELAY_RANGE),
        },
        "classes": {
            "cpu_demand": [1, 2, 3, 4, 5],
            "mean_service_time": [5.0, 6.0, 7.5, 10.0, 13.0],
            "deadline": [20.0, 23.0, 26.0, 29.0, 32.0],
            "mean_interarrival": [2.5, 2.875, 3.25, 3.625, 4.0],
            "processing_delay": DEFAULT_PROCESSING_DELAY,
        },
        # w1 spans the transmission-delay range so a satisfied Deploy never earns less than r1
        "reward": {"r1": 1.0, "r2": -30.0, "w1": 30.0, "w2": 1.0},
        "credit": {"defer_enqueue": True, "clip": True},
        "rl": {
            "alpha": 0.01,
            "gamma": 0.95,
            "episodes": 100,
            "q_max": DEFAULT_Q_MAX,
            "learn_departures": False,
        },
        "exploration": {"epsilon": 1.0, "decay": 0.98, "warmup_fraction": 0.1},
        "drl": {
            "episodes": 10,
            "hidden": list(HIDDEN_LAYERS),
            "batch_size": 1280,
            "update_every": 2500,
            "replay_capacity": 50_000,
            "learning_rate": 1e-3,
            "gamma": 0.95,
            "optimizer": "adam",
            "minibatch_size": 32,
            "epsilon_decay": 0.817,  # 0.98 ** 10: ten episodes end where rl's hundred do
        },
        "monitoring": {"threshold": 1.0},
        "sweep": {
            "axis": "none",
            "values": None,  # None: the axis default
            "lambda_reference": None,  # None: the smallest class inter-arrival mean
            "greedy_final": True,
            "agents": list(DEFAULT_SWEEP_AGENTS),
        },
        "output": {"format": "csv", "dir": "results", "experiment_id": None},
        "logging": {"level": "WARNING", "file_enabled": False, "stderr_enabled": False},
    }


@dataclass(frozen=True)
class TopologyConfig:
    nodes: int
    capacities: tuple[int, ...]
    tx_delays: tuple[float, ...] | None
    tx_delay_range: tuple[float, float]


@dataclass(frozen=True)
class SweepConfig:
    axis: str = "none"
    values: tuple[float, ...] = ()
    lambda_reference: float | None = None
    agents: tuple[str, ...] = tuple(DEFAULT_SWEEP_AGENTS)
    greedy_final: bool = True

    def resolved_values(self) -> tuple[float, ...]:
        if self.values:
            return self.values
        if self.axis == "lambda":
            return tuple(DEFAULT_LAMBDA_VALUES)
        if self.axis == "deadline":
            return tuple(DEFAULT_DEADLINE_FACTORS)
        return ()


@dataclass(frozen=True)
class ExperimentConfig:
    """Typed, validated view of a configuration tree."""

    agent: str
    allocator: str
    episodes: int | None
    events_per_episode: int
    seeds: tuple[int, ...]
    workers: int
    monitoring_episodes: int
    topology: TopologyConfig
    classes: tuple[FunctionClass, ...]
    reward: RewardParams
    credit: CreditAssignment
    learning: LearningParams
    rl_episodes: int
    q_max: int
    learn_departures: bool
    exploration: ExplorationSchedule
    drl_exploration: ExplorationSchedule
    train: TrainConfig
    drl_episodes: int
    hidden: tuple[int, ...]
    threshold: float
    sweep: SweepConfig
    output_format: str
    output_dir: str
    experiment_id: str | None
    logging: dict[str, Any] = field(default_factory=dict)

    @property
    def log_config(self) -> dict[str, Any]:
        return {"logging": self.logging}

    def episodes_for(self, agent: str) -> int:
        """Monitoring agents are stateless and run ``monitoring_episodes``."""
        if agent not in LEARNING_AGENTS:
            return self.monitoring_episodes
        if self.episodes is not None:
            return self.episodes
        return self.rl_episodes if agent == "rl" else self.drl_episodes

    @classmethod
    def from_dict(cls, tree: dict[str, Any]) -> ExperimentConfig:
        try:
            return cls._from_dict(tree)
        except (KeyError, TypeError, ValueError) as exc:
            raise ConfigurationError(f"invalid configuration: {exc}") from exc

    @classmethod
    def _from_dict(cls, tree: dict[str, Any]) -> ExperimentConfig:
        experiment = tree["experiment"]
        agent = experiment["agent"]
        if agent not in AGENTS:
            raise ConfigurationError(f"experiment.agent must be one of {AGENTS}, got {agent!r}")
        allocator = experiment["allocator"]
        if allocator not in ALLOCATORS:
            raise ConfigurationError(
                f"experiment.allocator must be one of {ALLOCATORS}, got {allocator!r}"
            )
        events = int(experiment["events_per_episode"])
        if events < 1:
            raise ConfigurationError("experiment.events_per_episode must be >= 1")
        seeds = tuple(int(seed) for seed in _as_list(experiment["seeds"]))
        if not seeds:
            raise ConfigurationError("experiment.seeds must not be empty")
        episodes = experiment.get("episodes")
        if episodes is not None and int(episodes) < 1:
            raise ConfigurationError("experiment.episodes must be >= 1")

        topology = _topology(tree["topology"])
        classes = _classes(tree["classes"])

        rl = tree["rl"]
        drl = tree["drl"]
        train = TrainConfig(
            batch_size=int(drl["batch_size"]),
            update_every=int(drl["update_every"]),
            gamma=float(drl["gamma"]),
            learning_rate=float(drl["learning_rate"]),
            optimizer=str(drl["optimizer"]),
            replay_capacity=int(drl["replay_capacity"]),
            minibatch_size=int(drl.get("minibatch_size", 32)),
        )
        reward = RewardParams(**{k: float(v) for k, v in tree["reward"].items()})
        credit = tree.get("credit") or {}
        exploration = ExplorationSchedule(**{k: float(v) for k, v in tree["exploration"].items()})
        drl_decay = drl.get("epsilon_decay")
        q_max = int(rl["q_max"])
        if q_max < 1:
            raise ConfigurationError("rl.q_max must be >= 1")

        sweep = tree["sweep"]
        axis = sweep.get("axis") or "none"
        if axis not in SWEEP_AXES:
            raise ConfigurationError(f"sweep.axis must be one of {SWEEP_AXES}, got {axis!r}")
        for entry in sweep["agents"]:
            parse_agent_spec(entry)

        output = tree["output"]
        if output["format"] not in FORMATS:
            raise ConfigurationError(f"output.format must be one of {FORMATS}")

        return cls(
            agent=agent,
            allocator=allocator,
            episodes=None if episodes is None else int(episodes),
            events_per_episode=events,
            seeds=seeds,
            workers=max(1, int(experiment.get("workers", 1))),
            monitoring_episodes=max(1, int(experiment.get("monitoring_episodes", 1))),
            topology=topology,
            classes=classes,
            reward=reward,
            credit=CreditAssignment.for_rewards(
                reward,
                defer_enqueue=bool(credit.get("defer_enqueue", True)),
                clip=bool(credit.get("clip", True)),
            ),
            learning=LearningParams(alpha=float(rl["alpha"]), gamma=float(rl["gamma"])),
            rl_episodes=int(rl["episodes"]),
            q_max=q_max,
            learn_departures=bool(rl.get("learn_departures", False)),
            exploration=exploration,
            drl_exploration=(
                exploration if drl_decay is None
                else ExplorationSchedule(
                    exploration.epsilon, float(drl_decay), exploration.warmup_fraction
                )
            ),
            train=train,
            drl_episodes=int(drl["episodes"]),
            hidden=tuple(int(h) for h in drl["hidden"]),
            threshold=float(tree["monitoring"]["threshold"]),
            sweep=SweepConfig(
                axis=axis,
                values=tuple(float(v) for v in (sweep.get("values") or [])),
                lambda_reference=(
                    None if sweep.get("lambda_reference") is None
                    else float(sweep["lambda_reference"])
                ),
                agents=tuple(sweep["agents"]),
                greedy_final=bool(sweep.get("greedy_final", True)),
            ),
            output_format=output["format"],
            output_dir=str(output["dir"]),
            experiment_id=output.get("experiment_id"),
            logging=dict(tree.get("logging") or {}),
        )


def _as_list(value: Any) -> list[Any]:
    return list(value) if isinstance(value, (list, tuple)) else [value]


def _per_item(value: Any, count: int, key: str) -> list[Any]:
    """Broadcast a scalar, or check a list has ``count`` entries."""
    if isinstance(value, (list, tuple)):
        if len(value) != count:
            raise ConfigurationError(f"{key} needs {count} entries, got {len(value)}")
        return list(value)
    return [value] * count


def _topology(section: dict[str, Any]) -> TopologyConfig:
    nodes = int(section["nodes"])
    if nodes < 1:
        raise ConfigurationError("topology.nodes must be >= 1")
    capacities = tuple(int(c) for c in _per_item(section["capacity"], nodes, "topology.capacity"))
    tx_delays = section.get("tx_delays")
    low, high = (float(v) for v in section.get("tx_delay_range", TX_DELAY_RANGE))
    if low < 0 or high < low:
        raise ConfigurationError("topology.tx_delay_range must satisfy 0 <= low <= high")
    return TopologyConfig(
        nodes=nodes,
        capacities=capacities,
        tx_delays=(
            None if tx_delays is None
            else tuple(float(d) for d in _per_item(tx_delays, nodes, "topology.tx_delays"))
        ),
        tx_delay_range=(low, high),
    )


def _classes(section: dict[str, Any]) -> tuple[FunctionClass, ...]:
    demands = _as_list(section["cpu_demand"])
    count = len(demands)
    service = _per_item(section["mean_service_time"], count, "classes.mean_service_time")
    deadline = _per_item(section["deadline"], count, "classes.deadline")
    interarrival = _per_item(section["mean_interarrival"], count, "classes.mean_interarrival")
    processing = _per_item(
        section.get("processing_delay", DEFAULT_PROCESSING_DELAY), count, "classes.processing_delay"
    )
    return tuple(
        FunctionClass(
            id=k + 1,
            cpu_demand=int(demands[k]),
            mean_service_time=float(service[k]),
            deadline=float(deadline[k]),
            mean_interarrival=float(interarrival[k]),
            processing_delay=float(processing[k]),
        )
        for k in range(count)
    )


def parse_agent_spec(entry: str) -> tuple[str, str]:
    """``"mnt:rf"`` -> ("mnt", "rf"); learning agents ignore the allocator."""
    agent, _, allocator = str(entry).partition(":")
    allocator = allocator or "ff"
    if agent not in AGENTS or allocator not in ALLOCATORS:
        raise ConfigurationError(f"sweep agent entry {entry!r} is not agent[:allocator]")
    return agent, allocator


class ConfigManager:
    """YAML configuration with layered fallbacks: defaults, global file, explicit file, flags."""

    def __init__(self, custom_config_dir: str | None = None):
        self.custom_config_dir = custom_config_dir
        self.config_dir = self._get_config_dir()
        self.global_config_file = self.config_dir / "config.yaml"

    def _get_config_dir(self) -> Path:
        """Get config directory with user choice support."""
        # 1. Custom directory (CLI override)
        if self.custom_config_dir:
            return Path(self.custom_config_dir).expanduser()

        # 2. Environment variable override
        if env_dir := os.getenv("EDGE_SCALER_CONFIG_DIR"):
            return Path(env_dir).expanduser()

        # 3. XDG Base Directory standard
        if xdg_config := os.getenv("XDG_CONFIG_HOME"):
            return Path(xdg_config) / "edge-scaler"

        # 4. Default fallback
        return Path.home() / ".config" / "edge-scaler"

    def get_config(
        self, config_file: str | None = None, overrides: dict[str, Any] | None = None
    ) -> dict[str, Any]:
        """Get the merged configuration tree."""
        # 1. Start with the golden defaults
        config = default_config()

        # 2. Global user file; unreadable files are skipped
        global_config = self._load_yaml_file(self.global_config_file)
        if global_config:
            config = self._deep_merge(config, global_config)

        # 3. Explicit document must exist and parse
        if config_file:
            explicit = self._load_required(Path(config_file).expanduser())
            config = self._deep_merge(config, explicit)

        # 4. Command-line overrides
        if overrides:
            config = self._deep_merge(config, overrides)

        return config

    def load_experiment(
        self, config_file: str | None = None, overrides: dict[str, Any] | None = None
    ) -> ExperimentConfig:
        return ExperimentConfig.from_dict(self.get_config(config_file, overrides))

    def _load_yaml_file(self, file_path: Path) -> dict[str, Any] | None:
        """Load and parse YAML file safely."""
        if not file_path.exists():
            return None

        try:
            with open(file_path, encoding="utf-8") as f:
                content = yaml.safe_load(f)
                return content if isinstance(content, dict) else None
        except (yaml.YAMLError, OSError):
            return None

    def _load_required(self, file_path: Path) -> dict[str, Any]:
        try:
            with open(file_path, encoding="utf-8") as f:
                content = yaml.safe_load(f)
        except OSError as exc:
            raise ConfigurationError(f"cannot read config file {file_path}: {exc}") from exc
        except yaml.YAMLError as exc:
            raise ConfigurationError(f"config file {file_path} is not valid YAML: {exc}") from exc
        if not isinstance(content, dict):
            raise ConfigurationError(f"config file {file_path} must hold a mapping")
        return content

    def _deep_merge(self, base: dict[str, Any], override: dict[str, Any]) -> dict[str, Any]:
        """Deep merge two dictionaries, with override taking precedence."""
        result = copy.deepcopy(base)

        for key, value in override.items():
            if key in result and isinstance(result[key], dict) and isinstance(value, dict):
                result[key] = self._deep_merge(result[key], value)
            else:
                result[key] = value

        return result

    def save_global_config(self, config: dict[str, Any]) -> Path:
        """Save global configuration."""
        self.config_dir.mkdir(parents=True, exist_ok=True)
        with open(self.global_config_file, "w", encoding="utf-8") as f:
            yaml.safe_dump(config, f, indent=2, default_flow_style=False, sort_keys=False)
        return self.global_config_file

    def get_config_info(self, config_file: str | None = None) -> dict[str, Any]:
        """Get information about configuration sources."""
        explicit = Path(config_file).expanduser() if config_file else None
        return {
            "config_dir": str(self.config_dir),
            "global_config": str(self.global_config_file),
            "explicit_config": str(explicit) if explicit else None,
            "sources": {
                "global_exists": self.global_config_file.exists(),
                "explicit_exists": bool(explicit and explicit.exists()),
            },
        }
