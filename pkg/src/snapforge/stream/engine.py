"""Topology runtime: task scheduling, tuple-tree acking, lifecycle control.

Each task (one parallel instance of a spout or bolt) is a logical execution
unit with its own bounded input queue; a whole topology is pumped by one
driver at a time, so user callbacks are single-threaded per task and ack
bookkeeping is serialized exactly as a dedicated acker task would be. The
engine runs either cooperatively (tests call pump/run_until_idle, optionally
on a simulated clock) or under N worker threads, one per configured slot.

Ack tracking is the XOR scheme: each root keeps a single 64-bit value that
XORs in every delivered tuple id at emit and again at ack; zero means the
tree is fully acked. With ``track_trees=True`` an explicit pending-id set is
maintained alongside and any divergence from the XOR verdict raises, which
property tests use as the reference oracle.
"""

from __future__ import annotations

import heapq
import itertools
import random
import threading
import time
from collections import deque
from dataclasses import dataclass, field, replace
from enum import Enum
from typing import Any, Iterable, Mapping

from snapforge.messagelog import fnv1a64
from snapforge.stream.topology import (
    Grouping,
    RoutingError,
    StreamTuple,
    TopologySpec,
    UndeclaredStreamError,
    route,
    validate_topology,
)

_M64 = 0xFFFFFFFFFFFFFFFF


def _splitmix64(x: int) -> int:
    x = (x + 0x9E3779B97F4A7C15) & _M64
    z = ((x ^ (x >> 30)) * 0xBF58476D1CE4E5B9) & _M64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _M64
    return z ^ (z >> 31)


class WallClock:
    def monotonic(self) -> float:
        return time.monotonic()

    def sleep(self, seconds: float) -> None:
        time.sleep(seconds)


class SimulatedClock:
    """Manually advanced clock for deterministic timeout/politeness tests."""

    def __init__(self, start: float = 0.0) -> None:
        self._now = start

    def monotonic(self) -> float:
        return self._now

    def advance(self, seconds: float) -> None:
        self._now += seconds

    def advance_to(self, t: float) -> None:
        self._now = max(self._now, t)

    def sleep(self, seconds: float) -> None:
        self.advance(seconds)


@dataclass
class RunConfig:
    worker_slots: int = 2
    tuple_timeout_secs: float = 30.0
    queue_capacity: int = 1024
    rng_seed: int = 0


class TopologyState(str, Enum):
    QUEUED = "queued"
    ACTIVE = "active"
    DEACTIVATED = "deactivated"
    KILLED = "killed"


class SubmitError(Exception):
    """Invalid spec or duplicate topology name among non-killed runs."""


class IllegalTransitionError(Exception):
    pass


class AckTreeMismatch(AssertionError):
    """XOR completion verdict diverged from the explicit-set oracle."""


class Defer(Exception):
    """Raised by a bolt to retry the current tuple at/after wake_at."""

    def __init__(self, wake_at: float):
        super().__init__(f"defer until {wake_at}")
        self.wake_at = wake_at


class Spout:
    """Stream source; subclass and emit from next_tuple."""

    def open(self, ctx: "SpoutContext") -> None:
        pass

    def next_tuple(self, ctx: "SpoutContext") -> None:
        """Called when the topology is active and downstream has room.
        Emit zero or more root tuples via ctx.emit."""

    def on_ack(self, root: StreamTuple) -> None:
        pass

    def on_fail(self, root: StreamTuple) -> None:
        pass

    def close(self) -> None:
        pass


class Bolt:
    """Stream processor. Raising inside execute fails the input tuple;
    returning normally acks it unless manual_ack is set and ctx.ack was
    never called (the tuple then stays pending until it times out)."""

    manual_ack = False

    def open(self, ctx: "BoltContext") -> None:
        pass

    def execute(self, tup: StreamTuple, ctx: "BoltContext") -> None:
        pass

    def close(self) -> None:
        pass


class _ComponentContext:
    def __init__(self, run: "_Run", task: "_Task") -> None:
        self._run = run
        self._task = task
        self._emits: list[StreamTuple] = []

    @property
    def task_index(self) -> int:
        return self._task.index

    @property
    def component_id(self) -> str:
        return self._task.component_id

    def monotonic(self) -> float:
        return self._run.engine.clock.monotonic()

    def _begin(self) -> None:
        self._emits = []

    def _buffer_emit(
        self, stream_id: str, values: Mapping[str, Any], anchors: tuple[StreamTuple, ...]
    ) -> StreamTuple:
        declared = self._task.spec.streams
        if stream_id not in declared:
            raise UndeclaredStreamError(
                f"component {self._task.component_id!r} never declared stream {stream_id!r}"
            )
        schema = set(declared[stream_id])
        if set(values) != schema:
            raise UndeclaredStreamError(
                f"values {sorted(values)} do not match schema {sorted(schema)} "
                f"of {self._task.component_id!r}/{stream_id!r}"
            )
        root_ids = frozenset().union(*(a.root_ids for a in anchors)) if anchors else frozenset()
        tup = StreamTuple(
            tuple_id=self._run.next_tuple_id(),
            stream_id=stream_id,
            values=dict(values),
            anchor_ids=frozenset(a.tuple_id for a in anchors),
            spawn_time=self.monotonic(),
            component=self._task.component_id,
            root_ids=root_ids,
        )
        self._emits.append(tup)
        return tup


class SpoutContext(_ComponentContext):
    def emit(self, stream_id: str, values: Mapping[str, Any]) -> StreamTuple:
        """Emit a new root tuple; its tree is tracked until acked or failed."""
        return self._buffer_emit(stream_id, values, anchors=())


class BoltContext(_ComponentContext):
    """Execution surface for bolts.

    A manual_ack bolt that returns without acking its input keeps that tuple
    "held": still pending in its trees, ackable (or failable) from a later
    execute call and usable as an emit anchor — the pattern join bolts need.
    """

    def __init__(self, run: "_Run", task: "_Task") -> None:
        super().__init__(run, task)
        self._input: StreamTuple | None = None
        self._verdict: bool | None = None  # True acked, False failed, None default
        self._late_acks: list[StreamTuple] = []
        self._late_fails: list[StreamTuple] = []

    def _begin_input(self, tup: StreamTuple) -> None:
        self._begin()
        self._input = tup
        self._verdict = None
        self._late_acks = []
        self._late_fails = []

    def emit(
        self,
        stream_id: str,
        values: Mapping[str, Any],
        anchors: Iterable[StreamTuple] | None = None,
    ) -> StreamTuple:
        """Emit anchored to the input tuple by default; pass anchors=() for
        fire-and-forget tuples outside any tree."""
        if anchors is None:
            anchors = (self._input,) if self._input is not None else ()
        anchors = tuple(anchors)
        for a in anchors:
            if not self._is_pending_here(a):
                raise ValueError(
                    f"anchor {a.tuple_id} is not the current input nor held by this task"
                )
        return self._buffer_emit(stream_id, values, anchors)

    def _is_pending_here(self, tup: StreamTuple) -> bool:
        if self._input is not None and tup.tuple_id == self._input.tuple_id:
            return True
        return tup.tuple_id in self._task.held

    def ack(self, tup: StreamTuple) -> None:
        if self._input is not None and tup.tuple_id == self._input.tuple_id:
            self._verdict = True
        elif tup.tuple_id in self._task.held:
            self._late_acks.append(tup)
        else:
            raise ValueError("bolts may only ack their current input or held tuples")

    def fail(self, tup: StreamTuple) -> None:
        if self._input is not None and tup.tuple_id == self._input.tuple_id:
            self._verdict = False
        elif tup.tuple_id in self._task.held:
            self._late_fails.append(tup)
        else:
            raise ValueError("bolts may only fail their current input or held tuples")

    def hold(self) -> None:
        """Keep the current input pending for a later ack (join pattern);
        only meaningful for manual_ack bolts, where it is also the default."""
        self._verdict = None

    def defer(self, wake_at: float) -> None:
        """Abandon this execution (no emits, no ack) and retry at wake_at."""
        raise Defer(wake_at)


@dataclass
class _Task:
    component_id: str
    index: int
    spec: Any  # SpoutSpec | BoltSpec
    instance: Any  # Spout | Bolt
    is_spout: bool
    queue: deque = field(default_factory=deque)
    rng: random.Random = field(default_factory=random.Random)
    wake_at: float | None = None
    context: Any = None
    held: dict[int, StreamTuple] = field(default_factory=dict)


@dataclass
class _RootState:
    root: StreamTuple
    spout: Spout
    component_id: str
    xor: int = 0
    deadline: float = 0.0
    tree: set[int] | None = None  # explicit oracle when track_trees


class _Metrics:
    __slots__ = ("emitted", "acked", "failed")

    def __init__(self) -> None:
        self.emitted = 0
        self.acked = 0
        self.failed = 0

    def snapshot(self) -> dict[str, int]:
        return {"emitted": self.emitted, "acked": self.acked, "failed": self.failed}


class TopologyHandle:
    """External view of a submitted topology run."""

    def __init__(self, run: "_Run") -> None:
        self._run = run

    @property
    def run_id(self) -> str:
        return self._run.run_id

    @property
    def name(self) -> str:
        return self._run.spec.name

    @property
    def state(self) -> TopologyState:
        return self._run.state

    def metrics(self) -> dict[str, dict[str, int]]:
        out = {cid: m.snapshot() for cid, m in self._run.metrics.items()}
        out["_roots"] = {
            "emitted": self._run.roots_emitted,
            "acked": self._run.roots_acked,
            "failed": self._run.roots_failed,
            "pending": len(self._run.roots),
        }
        return out


class _Run:
    def __init__(self, engine: "StreamEngine", spec: TopologySpec, config: RunConfig, run_id: str):
        self.engine = engine
        self.spec = spec
        self.config = config
        self.run_id = run_id
        self.state = TopologyState.QUEUED
        self.handle = TopologyHandle(self)
        self.pump_lock = threading.Lock()
        self._id_counter = itertools.count(1)
        self._id_base = _splitmix64(config.rng_seed ^ fnv1a64(spec.name.encode()))
        self.tasks: dict[str, list[_Task]] = {}
        self.spout_tasks: list[_Task] = []
        self.bolt_tasks: list[_Task] = []
        self.subscribers: dict[tuple[str, str], list[tuple[str, Grouping]]] = {}
        self.roots: dict[int, _RootState] = {}
        self._deadlines: list[tuple[float, int]] = []
        self.metrics: dict[str, _Metrics] = {}
        self.roots_emitted = 0
        self.roots_acked = 0
        self.roots_failed = 0
        self.opened = False

    def next_tuple_id(self) -> int:
        return _splitmix64((self._id_base + next(self._id_counter)) & _M64)

    # -- lifecycle ----------------------------------------------------------

    def open_tasks(self) -> None:
        if self.opened:
            return
        for comp in (*self.spec.spouts, *self.spec.bolts):
            is_spout = comp in self.spec.spouts
            self.metrics[comp.id] = _Metrics()
            tasks = []
            for i in range(comp.parallelism):
                t = _Task(comp.id, i, comp, comp.factory(), is_spout=is_spout)
                t.rng = random.Random(f"{self.config.rng_seed}:{self.spec.name}:{comp.id}:{i}")
                t.context = SpoutContext(self, t) if is_spout else BoltContext(self, t)
                tasks.append(t)
            self.tasks[comp.id] = tasks
            (self.spout_tasks if is_spout else self.bolt_tasks).extend(tasks)
        for bolt in self.spec.bolts:
            for sub in bolt.subscriptions:
                self.subscribers.setdefault((sub.component, sub.stream), []).append(
                    (bolt.id, sub.grouping)
                )
        for tasks in self.tasks.values():
            for t in tasks:
                t.instance.open(t.context)
        self.opened = True

    def kill(self) -> None:
        for root_id in list(self.roots):
            self._fail_root(root_id)
        for tasks in self.tasks.values():
            for t in tasks:
                t.queue.clear()
                t.held.clear()
                t.instance.close()
        self.state = TopologyState.KILLED

    # -- acker bookkeeping ----------------------------------------------------

    def _register_root(self, root: StreamTuple, spout_task: _Task) -> None:
        state = _RootState(
            root=root,
            spout=spout_task.instance,
            component_id=spout_task.component_id,
            deadline=self.engine.clock.monotonic() + self.config.tuple_timeout_secs,
            tree=set() if self.engine.track_trees else None,
        )
        self.roots[root.tuple_id] = state
        heapq.heappush(self._deadlines, (state.deadline, root.tuple_id))
        self.roots_emitted += 1
        self.metrics[spout_task.component_id].emitted += 1

    def _apply_updates(
        self,
        xor_updates: dict[int, int],
        tree_adds: dict[int, set[int]],
        tree_removes: dict[int, set[int]],
    ) -> None:
        for root_id, upd in xor_updates.items():
            state = self.roots.get(root_id)
            if state is None:
                continue  # root already settled; late acks are idempotent no-ops
            state.xor ^= upd
            if state.tree is not None:
                state.tree |= tree_adds.get(root_id, set())
                state.tree -= tree_removes.get(root_id, set())
            if state.xor == 0:
                if state.tree is not None and state.tree:
                    raise AckTreeMismatch(
                        f"XOR claims root {root_id} complete, {len(state.tree)} ids pending"
                    )
                self._complete_root(root_id)
            elif state.tree is not None and not state.tree:
                raise AckTreeMismatch(f"tree of root {root_id} empty but XOR nonzero")

    def _complete_root(self, root_id: int) -> None:
        state = self.roots.pop(root_id)
        self.roots_acked += 1
        self.metrics[state.component_id].acked += 1
        state.spout.on_ack(state.root)

    def _fail_root(self, root_id: int) -> None:
        state = self.roots.pop(root_id, None)
        if state is None:
            return  # already settled; double-fail is idempotent
        self.roots_failed += 1
        self.metrics[state.component_id].failed += 1
        state.spout.on_fail(state.root)

    def check_timeouts(self) -> bool:
        now = self.engine.clock.monotonic()
        fired = False
        while self._deadlines and self._deadlines[0][0] <= now:
            _, root_id = heapq.heappop(self._deadlines)
            if root_id in self.roots:
                self._fail_root(root_id)
                fired = True
        return fired

    def earliest_hint(self) -> float | None:
        """Earliest future instant at which pumping could make progress."""
        hints = [t.wake_at for t in self.bolt_tasks if t.wake_at is not None and t.queue]
        while self._deadlines and self._deadlines[0][1] not in self.roots:
            heapq.heappop(self._deadlines)
        if self._deadlines and self.roots:
            hints.append(self._deadlines[0][0])
        return min(hints) if hints else None

    # -- emission fanout --------------------------------------------------------

    def _prepare_deliveries(self, emits: list[StreamTuple], task: _Task):
        """Route buffered emissions; returns (deliveries, xor updates, tree adds).

        Raises RoutingError on a fields-grouping miss (nothing delivered).
        """
        deliveries: list[tuple[_Task, StreamTuple]] = []
        xor_updates: dict[int, int] = {}
        tree_adds: dict[int, set[int]] = {}
        for logical in emits:
            for bolt_id, grouping in self.subscribers.get(
                (task.component_id, logical.stream_id), []
            ):
                targets = self.tasks[bolt_id]
                idx = route(logical, grouping, len(targets), rng=task.rng)
                copy = replace(logical, tuple_id=self.next_tuple_id())
                deliveries.append((targets[idx], copy))
                for r in copy.root_ids:
                    xor_updates[r] = xor_updates.get(r, 0) ^ copy.tuple_id
                    if self.engine.track_trees:
                        tree_adds.setdefault(r, set()).add(copy.tuple_id)
        return deliveries, xor_updates, tree_adds

    @staticmethod
    def _deliver(deliveries: list[tuple[_Task, StreamTuple]]) -> None:
        for target, copy in deliveries:
            target.queue.append(copy)

    # -- task pumping -------------------------------------------------------------

    def pump_spout(self, task: _Task) -> bool:
        ctx: SpoutContext = task.context
        ctx._begin()
        task.instance.next_tuple(ctx)
        if not ctx._emits:
            return False
        for logical in ctx._emits:
            root = replace(logical, root_ids=frozenset({logical.tuple_id}))
            self._register_root(root, task)
            try:
                deliveries, xor_updates, tree_adds = self._prepare_deliveries([root], task)
            except RoutingError:
                self._fail_root(root.tuple_id)
                continue
            if not deliveries:
                self._complete_root(root.tuple_id)  # no subscribers: trivially done
                continue
            self._apply_updates(xor_updates, tree_adds, {})
            self._deliver(deliveries)
        return True

    def pump_bolt(self, task: _Task, budget: int = 64) -> bool:
        if task.wake_at is not None:
            if self.engine.clock.monotonic() < task.wake_at:
                return False
            task.wake_at = None
        progress = False
        while budget > 0 and task.queue:
            tup: StreamTuple = task.queue[0]
            if tup.root_ids and all(r not in self.roots for r in tup.root_ids):
                task.queue.popleft()  # tree already failed/settled: discard
                progress = True
                continue
            ctx: BoltContext = task.context
            ctx._begin_input(tup)
            try:
                task.instance.execute(tup, ctx)
            except Defer as d:
                task.wake_at = d.wake_at
                return progress
            except Exception:
                task.queue.popleft()
                self._fail_input(task, tup)
                progress = True
                budget -= 1
                continue
            task.queue.popleft()
            progress = True
            budget -= 1
            try:
                deliveries, xor_updates, tree_adds = self._prepare_deliveries(ctx._emits, task)
            except RoutingError:
                self._fail_input(task, tup)
                continue
            self.metrics[task.component_id].emitted += len(ctx._emits)
            tree_removes: dict[int, set[int]] = {}
            for late in ctx._late_acks:
                task.held.pop(late.tuple_id, None)
                for r in late.root_ids:
                    xor_updates[r] = xor_updates.get(r, 0) ^ late.tuple_id
                    if self.engine.track_trees:
                        tree_removes.setdefault(r, set()).add(late.tuple_id)
                self.metrics[task.component_id].acked += 1
            for late in ctx._late_fails:
                task.held.pop(late.tuple_id, None)
                self.metrics[task.component_id].failed += 1
                for r in late.root_ids:
                    self._fail_root(r)
            if ctx._verdict is False:
                self._apply_updates(xor_updates, tree_adds, tree_removes)
                self._deliver(deliveries)
                self._fail_input(task, tup)
                continue
            ack_input = ctx._verdict is True or not task.instance.manual_ack
            if ack_input:
                for r in tup.root_ids:
                    xor_updates[r] = xor_updates.get(r, 0) ^ tup.tuple_id
                    if self.engine.track_trees:
                        tree_removes.setdefault(r, set()).add(tup.tuple_id)
                self.metrics[task.component_id].acked += 1
            else:
                task.held[tup.tuple_id] = tup
            self._apply_updates(xor_updates, tree_adds, tree_removes)
            self._deliver(deliveries)
        return progress

    def _fail_input(self, task: _Task, tup: StreamTuple) -> None:
        self.metrics[task.component_id].failed += 1
        for r in tup.root_ids:
            self._fail_root(r)

    # -- scheduling ----------------------------------------------------------------

    def any_queue_full(self) -> bool:
        cap = self.config.queue_capacity
        return any(len(t.queue) >= cap for t in self.bolt_tasks)

    def pump(self) -> bool:
        if self.state not in (TopologyState.ACTIVE, TopologyState.DEACTIVATED):
            return False
        progress = False
        for task in self.bolt_tasks:
            progress |= self.pump_bolt(task)
        if self.state is TopologyState.ACTIVE and not self.any_queue_full():
            for task in self.spout_tasks:
                progress |= self.pump_spout(task)
        progress |= self.check_timeouts()
        return progress


class StreamEngine:
    """Submit, run, and control topologies inside one process.

    Safe for concurrent submit/set_state; a topology's tasks are only ever
    pumped by one thread at a time.
    """

    def __init__(
        self,
        config: RunConfig | None = None,
        clock: WallClock | SimulatedClock | None = None,
        track_trees: bool = False,
    ) -> None:
        self.config = config or RunConfig()
        self.clock = clock or WallClock()
        self.track_trees = track_trees
        self._runs: dict[str, _Run] = {}
        self._lock = threading.RLock()
        self._run_seq = itertools.count(1)
        self._workers: list[threading.Thread] = []
        self._stop = threading.Event()

    # -- submission & state ----------------------------------------------------

    def submit(self, spec: TopologySpec, config: RunConfig | None = None) -> TopologyHandle:
        result = validate_topology(spec)
        if not result.ok:
            raise SubmitError("invalid topology: " + "; ".join(result.violations))
        with self._lock:
            for run in self._runs.values():
                if run.spec.name == spec.name and run.state is not TopologyState.KILLED:
                    raise SubmitError(f"topology named {spec.name!r} already running")
            run = _Run(self, spec, config or self.config, f"run-{next(self._run_seq):04d}")
            self._runs[run.run_id] = run
            self._maybe_activate()
            return run.handle

    def _active_count(self) -> int:
        return sum(
            1
            for r in self._runs.values()
            if r.state in (TopologyState.ACTIVE, TopologyState.DEACTIVATED)
        )

    def _maybe_activate(self) -> None:
        for run in self._runs.values():
            if self._active_count() >= self.config.worker_slots:
                break
            if run.state is TopologyState.QUEUED:
                run.open_tasks()
                run.state = TopologyState.ACTIVE

    def set_state(self, handle: TopologyHandle, target: TopologyState | str) -> None:
        target = TopologyState(target)
        with self._lock:
            run = handle._run
            current = run.state
            legal = {
                (TopologyState.ACTIVE, TopologyState.DEACTIVATED),
                (TopologyState.DEACTIVATED, TopologyState.ACTIVE),
                (TopologyState.ACTIVE, TopologyState.KILLED),
                (TopologyState.DEACTIVATED, TopologyState.KILLED),
            }
            if (current, target) not in legal:
                raise IllegalTransitionError(f"cannot move topology from {current} to {target}")
            if target is TopologyState.KILLED:
                with run.pump_lock:
                    run.kill()
                self._maybe_activate()
            else:
                run.state = target

    def handles(self) -> list[TopologyHandle]:
        with self._lock:
            return [r.handle for r in self._runs.values()]

    # -- cooperative execution ----------------------------------------------------

    def pump(self) -> bool:
        with self._lock:
            runs = [r for r in self._runs.values() if r.opened]
        progress = False
        for run in runs:
            with run.pump_lock:
                progress |= run.pump()
        return progress

    def run_until_idle(self, max_rounds: int = 1_000_000, advance_clock: bool = True) -> None:
        """Pump everything until quiescent.

        With a SimulatedClock, stalls jump the clock to the earliest wake
        hint (deferred bolt or root deadline) so politeness waits and tuple
        timeouts play out instantly.
        """
        for _ in range(max_rounds):
            if self.pump():
                continue
            with self._lock:
                runs = [r for r in self._runs.values() if r.opened]
            hints = [h for r in runs if (h := r.earliest_hint()) is not None]
            if not hints:
                return
            if isinstance(self.clock, SimulatedClock):
                if not advance_clock:
                    return
                self.clock.advance_to(min(hints))
            else:
                self.clock.sleep(max(0.0, min(hints) - self.clock.monotonic()) + 0.001)
        raise RuntimeError("run_until_idle exceeded max_rounds")

    # -- worker threads --------------------------------------------------------------

    def start(self) -> None:
        """Spawn one worker thread per configured slot (live mode)."""
        if self._workers:
            return
        self._stop.clear()
        for i in range(self.config.worker_slots):
            t = threading.Thread(target=self._worker_loop, name=f"sf-worker-{i}", daemon=True)
            t.start()
            self._workers.append(t)

    def _worker_loop(self) -> None:
        while not self._stop.is_set():
            progress = False
            with self._lock:
                runs = [r for r in self._runs.values() if r.opened]
            for run in runs:
                if run.pump_lock.acquire(blocking=False):
                    try:
                        progress |= run.pump()
                    finally:
                        run.pump_lock.release()
            if not progress:
                time.sleep(0.005)

    def stop(self) -> None:
        self._stop.set()
        for t in self._workers:
            t.join(timeout=2.0)
        self._workers.clear()
