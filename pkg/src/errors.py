"""Exception hierarchy for edge-scaler."""

from __future__ import annotations


class EdgeScalerError(Exception):
    """Base error. ``code`` is the machine-readable tag printed by the CLI."""

    code = "error"

    def to_dict(self) -> dict[str, str]:
        return {"error": self.code, "message": str(self)}


class ConfigurationError(EdgeScalerError):
    """Invalid configuration value or unreadable configuration document."""

    code = "configuration"


class InfeasibleClass(EdgeScalerError):
    """A function class demands more CPU than the largest node offers."""

    code = "infeasible_class"

    def __init__(self, class_id: int, demand: int, largest_capacity: int):
        self.class_id = class_id
        self.demand = demand
        self.largest_capacity = largest_capacity
        super().__init__(
            f"class {class_id} needs {demand} CPU units but the largest node has {largest_capacity}"
        )

    def __reduce__(self) -> tuple[type, tuple[object, ...]]:
        return type(self), (self.class_id, self.demand, self.largest_capacity)


class NoFeasibleNode(EdgeScalerError):
    """No node can host (or reuse) a replica of the requested class."""

    code = "no_feasible_node"

    def __init__(self, class_id: int):
        self.class_id = class_id
        super().__init__(f"no feasible node for class {class_id}")

    def __reduce__(self) -> tuple[type, tuple[object, ...]]:
        return type(self), (self.class_id,)


class IllegalAction(EdgeScalerError):
    """Action is not in the available set for the current state and event."""

    code = "illegal_action"


class DimensionMismatch(EdgeScalerError):
    """Network input does not match the first layer."""

    code = "dimension_mismatch"


class TimelineExhausted(EdgeScalerError):
    """No pending events left."""

    code = "timeline_exhausted"


class EmitError(EdgeScalerError):
    """Writing a result file failed."""

    code = "emit"

    def __init__(self, path: str, reason: str):
        self.path = path
        self.reason = reason
        super().__init__(f"cannot write {path}: {reason}")

    # rebuilt from the constructor arguments when a worker process sends it back
    def __reduce__(self) -> tuple[type, tuple[object, ...]]:
        return type(self), (self.path, self.reason)
