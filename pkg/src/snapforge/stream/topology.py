"""Topology structure: tuples, groupings, component specs, validation, routing.

A topology is a DAG of spouts (stream sources) and bolts (processors).
Components declare named output streams with field schemas; bolts subscribe
to (component, stream) pairs with a grouping that decides which task of the
bolt receives each tuple.
"""

from __future__ import annotations

import random
from dataclasses import dataclass, field
from decimal import Decimal
from typing import Any, Callable, Mapping

from snapforge.messagelog import fnv1a64


class RoutingError(Exception):
    """Fields grouping referenced a value missing from the tuple."""


class UndeclaredStreamError(Exception):
    """Component emitted on a stream it never declared."""


@dataclass(frozen=True)
class StreamTuple:
    """Immutable unit of stream data.

    root_ids tracks which spout-emitted roots this tuple's tree membership
    rolls up to; anchor_ids are the direct parents it was emitted from.
    """

    tuple_id: int
    stream_id: str
    values: Mapping[str, Any]
    anchor_ids: frozenset[int] = frozenset()
    spawn_time: float = 0.0
    component: str = ""
    root_ids: frozenset[int] = frozenset()

    def __getitem__(self, key: str) -> Any:
        return self.values[key]


@dataclass(frozen=True)
class Grouping:
    """shuffle | fields(names) | global routing rule."""

    kind: str
    field_names: tuple[str, ...] = ()

    @staticmethod
    def shuffle() -> "Grouping":
        return Grouping("shuffle")

    @staticmethod
    def fields(*names: str) -> "Grouping":
        if not names:
            raise ValueError("fields grouping needs at least one field name")
        return Grouping("fields", tuple(names))

    @staticmethod
    def global_() -> "Grouping":
        return Grouping("global")


@dataclass(frozen=True)
class Subscription:
    component: str
    stream: str
    grouping: Grouping


@dataclass(frozen=True)
class SpoutSpec:
    id: str
    factory: Callable[[], Any]
    parallelism: int = 1
    streams: Mapping[str, tuple[str, ...]] = field(default_factory=dict)


@dataclass(frozen=True)
class BoltSpec:
    id: str
    factory: Callable[[], Any]
    parallelism: int = 1
    streams: Mapping[str, tuple[str, ...]] = field(default_factory=dict)
    subscriptions: tuple[Subscription, ...] = ()


@dataclass(frozen=True)
class TopologySpec:
    name: str
    spouts: tuple[SpoutSpec, ...] = ()
    bolts: tuple[BoltSpec, ...] = ()

    def component(self, comp_id: str):
        for c in (*self.spouts, *self.bolts):
            if c.id == comp_id:
                return c
        raise KeyError(comp_id)


@dataclass
class ValidationResult:
    ok: bool
    violations: list[str] = field(default_factory=list)


def validate_topology(spec: TopologySpec) -> ValidationResult:
    """Check parallelism, unique ids, subscription targets, schemas, acyclicity.

    Violations are data, not faults: every problem found is listed.
    """
    violations: list[str] = []
    components = list(spec.spouts) + list(spec.bolts)
    ids = [c.id for c in components]
    seen: set[str] = set()
    for cid in ids:
        if cid in seen:
            violations.append(f"duplicate component id {cid!r}")
        seen.add(cid)
    for c in components:
        if c.parallelism < 1:
            violations.append(f"component {c.id!r} has parallelism {c.parallelism} < 1")
    by_id = {c.id: c for c in components}
    for bolt in spec.bolts:
        for sub in bolt.subscriptions:
            src = by_id.get(sub.component)
            if src is None:
                violations.append(
                    f"bolt {bolt.id!r} subscribes to undeclared component {sub.component!r}"
                )
                continue
            if sub.stream not in src.streams:
                violations.append(
                    f"bolt {bolt.id!r} subscribes to unknown stream "
                    f"{sub.component!r}/{sub.stream!r}"
                )
                continue
            if sub.grouping.kind == "fields":
                schema = set(src.streams[sub.stream])
                missing = [f for f in sub.grouping.field_names if f not in schema]
                if missing:
                    violations.append(
                        f"bolt {bolt.id!r} fields-grouping names {missing} not in "
                        f"schema of {sub.component!r}/{sub.stream!r}"
                    )
    violations.extend(_find_cycles(spec))
    return ValidationResult(not violations, violations)


def _find_cycles(spec: TopologySpec) -> list[str]:
    """Kahn's algorithm; any leftover node set indicates a cycle."""
    edges: dict[str, set[str]] = {c.id: set() for c in (*spec.spouts, *spec.bolts)}
    indegree = {cid: 0 for cid in edges}
    for bolt in spec.bolts:
        for sub in bolt.subscriptions:
            if sub.component in edges and bolt.id not in edges[sub.component]:
                edges[sub.component].add(bolt.id)
                indegree[bolt.id] += 1
    queue = [cid for cid, deg in indegree.items() if deg == 0]
    visited = 0
    while queue:
        node = queue.pop()
        visited += 1
        for nxt in edges[node]:
            indegree[nxt] -= 1
            if indegree[nxt] == 0:
                queue.append(nxt)
    if visited != len(edges):
        stuck = sorted(cid for cid, deg in indegree.items() if deg > 0)
        return [f"subscription cycle through components {stuck}"]
    return []


def _hash_value(value: Any) -> bytes:
    """Canonical type-tagged encoding so equal values hash equally across runs."""
    if value is None:
        return b"n"
    if isinstance(value, bool):
        return b"t" if value else b"f"
    if isinstance(value, str):
        enc = value.encode("utf-8")
        return b"s" + len(enc).to_bytes(4, "little") + enc
    if isinstance(value, int):
        enc = str(value).encode()
        return b"i" + len(enc).to_bytes(4, "little") + enc
    if isinstance(value, Decimal):
        enc = str(value).encode()
        return b"d" + len(enc).to_bytes(4, "little") + enc
    if isinstance(value, float):
        enc = value.hex().encode()
        return b"g" + len(enc).to_bytes(4, "little") + enc
    if isinstance(value, (bytes, bytearray)):
        return b"b" + len(value).to_bytes(4, "little") + bytes(value)
    if isinstance(value, (list, tuple)):
        parts = b"".join(_hash_value(v) for v in value)
        return b"l" + len(value).to_bytes(4, "little") + parts
    raise TypeError(f"unhashable tuple field type {type(value).__name__}")


def route(
    tup: StreamTuple,
    grouping: Grouping,
    task_count: int,
    rng: random.Random | None = None,
) -> int:
    """Pick the destination task index for a tuple under a grouping.

    fields routing is a pure function of (field values, task_count); shuffle
    draws from the provided PRNG (the engine passes the emitting task's
    seeded generator).
    """
    if task_count < 1:
        raise ValueError("task_count must be >= 1")
    if grouping.kind == "global":
        return 0
    if grouping.kind == "shuffle":
        if task_count == 1:
            return 0
        return (rng or random).randrange(task_count)
    if grouping.kind == "fields":
        blob = b""
        for name in grouping.field_names:
            if name not in tup.values:
                raise RoutingError(
                    f"fields grouping needs {name!r}, tuple on {tup.stream_id!r} "
                    f"has {sorted(tup.values)}"
                )
            blob += _hash_value(tup.values[name])
        return fnv1a64(blob) % task_count
    raise ValueError(f"unknown grouping kind {grouping.kind!r}")
