"""In-process stream runtime: topologies of spouts and bolts with acking."""

from snapforge.stream.topology import (
    BoltSpec,
    Grouping,
    RoutingError,
    SpoutSpec,
    StreamTuple,
    Subscription,
    TopologySpec,
    UndeclaredStreamError,
    ValidationResult,
    route,
    validate_topology,
)
from snapforge.stream.engine import (
    Bolt,
    BoltContext,
    Defer,
    RunConfig,
    SimulatedClock,
    Spout,
    SpoutContext,
    StreamEngine,
    TopologyHandle,
    TopologyState,
    WallClock,
)

__all__ = [
    "Bolt",
    "BoltContext",
    "BoltSpec",
    "Defer",
    "Grouping",
    "RoutingError",
    "RunConfig",
    "SimulatedClock",
    "Spout",
    "SpoutContext",
    "SpoutSpec",
    "StreamEngine",
    "StreamTuple",
    "Subscription",
    "TopologyHandle",
    "TopologyState",
    "TopologySpec",
    "UndeclaredStreamError",
    "ValidationResult",
    "WallClock",
    "route",
    "validate_topology",
]
