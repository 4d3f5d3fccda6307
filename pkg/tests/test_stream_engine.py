"""Stream engine: validation, routing, acking, timeouts, lifecycle, metrics."""

import random
from collections import Counter, deque

import networkx as nx
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from snapforge.stream import (
    Bolt,
    BoltSpec,
    Defer,
    Grouping,
    RunConfig,
    SimulatedClock,
    Spout,
    SpoutSpec,
    StreamEngine,
    StreamTuple,
    Subscription,
    TopologySpec,
    TopologyState,
    route,
    validate_topology,
)
from snapforge.stream.engine import IllegalTransitionError, SubmitError


class ListSpout(Spout):
    """Emits queued items once each; optionally requeues failures."""

    def __init__(self, items, stream="urls", field="v", retry_failed=False, burst=1):
        self.todo = deque(items)
        self.stream = stream
        self.field = field
        self.retry_failed = retry_failed
        self.burst = burst
        self.acked = []
        self.failed = []

    def next_tuple(self, ctx):
        for _ in range(min(self.burst, len(self.todo))):
            ctx.emit(self.stream, {self.field: self.todo.popleft()})

    def on_ack(self, root):
        self.acked.append(root.values[self.field])

    def on_fail(self, root):
        self.failed.append(root.values[self.field])
        if self.retry_failed:
            self.todo.append(root.values[self.field])


class PassBolt(Bolt):
    """Re-emits its input value on stream 'out'."""

    def __init__(self, sink=None):
        self.sink = sink if sink is not None else []

    def execute(self, tup, ctx):
        self.sink.append(tup.values["v"])
        ctx.emit("out", {"v": tup.values["v"]})


class SinkBolt(Bolt):
    def __init__(self):
        self.seen = []

    def execute(self, tup, ctx):
        self.seen.append(tup.values["v"])


def chain_spec(name="chain", spout=None, mid=None, sink=None):
    spout = spout or ListSpout(range(5))
    mid = mid or PassBolt()
    sink = sink or SinkBolt()
    return TopologySpec(
        name=name,
        spouts=(SpoutSpec("spout", lambda: spout, 1, {"urls": ("v",)}),),
        bolts=(
            BoltSpec(
                "mid",
                lambda: mid,
                1,
                {"out": ("v",)},
                (Subscription("spout", "urls", Grouping.shuffle()),),
            ),
            BoltSpec(
                "sink",
                lambda: sink,
                1,
                {},
                (Subscription("mid", "out", Grouping.shuffle()),),
            ),
        ),
    )


def make_engine(**kw):
    kw.setdefault("clock", SimulatedClock())
    kw.setdefault("track_trees", True)
    return StreamEngine(**kw)


class TestValidation:
    def test_valid_chain(self):
        assert validate_topology(chain_spec()).ok

    def test_two_cycle(self):
        spec = TopologySpec(
            name="cyc",
            spouts=(SpoutSpec("s", Spout, 1, {"a": ("v",)}),),
            bolts=(
                BoltSpec("b1", Bolt, 1, {"x": ("v",)}, (Subscription("b2", "y", Grouping.shuffle()),)),
                BoltSpec("b2", Bolt, 1, {"y": ("v",)}, (Subscription("b1", "x", Grouping.shuffle()),)),
            ),
        )
        result = validate_topology(spec)
        assert not result.ok
        assert any("cycle" in v for v in result.violations)

    def test_unknown_stream(self):
        spec = TopologySpec(
            name="bad",
            spouts=(SpoutSpec("s", Spout, 1, {"a": ("v",)}),),
            bolts=(BoltSpec("b", Bolt, 1, {}, (Subscription("s", "prices", Grouping.shuffle()),)),),
        )
        result = validate_topology(spec)
        assert not result.ok
        assert any("prices" in v for v in result.violations)

    def test_unknown_component(self):
        spec = TopologySpec(
            name="bad2",
            spouts=(SpoutSpec("s", Spout, 1, {"a": ("v",)}),),
            bolts=(BoltSpec("b", Bolt, 1, {}, (Subscription("ghost", "a", Grouping.shuffle()),)),),
        )
        assert not validate_topology(spec).ok

    def test_bad_parallelism(self):
        spec = TopologySpec(name="p", spouts=(SpoutSpec("s", Spout, 0, {"a": ("v",)}),))
        assert not validate_topology(spec).ok

    def test_fields_grouping_schema_check(self):
        spec = TopologySpec(
            name="f",
            spouts=(SpoutSpec("s", Spout, 1, {"a": ("v",)}),),
            bolts=(BoltSpec("b", Bolt, 1, {}, (Subscription("s", "a", Grouping.fields("host")),)),),
        )
        result = validate_topology(spec)
        assert not result.ok
        assert any("host" in v for v in result.violations)

    @settings(max_examples=100, deadline=None)
    @given(st.data())
    def test_dag_check_matches_networkx(self, data):
        n = data.draw(st.integers(2, 8))
        edges = data.draw(
            st.lists(
                st.tuples(st.integers(0, n - 1), st.integers(0, n - 1)).filter(
                    lambda e: e[0] != e[1]
                ),
                max_size=16,
            )
        )
        bolts = []
        subs = {i: [] for i in range(n)}
        for src, dst in edges:
            subs[dst].append(Subscription(f"b{src}", "s", Grouping.shuffle()))
        for i in range(n):
            bolts.append(BoltSpec(f"b{i}", Bolt, 1, {"s": ("v",)}, tuple(subs[i])))
        spec = TopologySpec(
            name="rand", spouts=(SpoutSpec("sp", Spout, 1, {"s": ("v",)}),), bolts=tuple(bolts)
        )
        g = nx.DiGraph()
        g.add_nodes_from(range(n))
        g.add_edges_from(edges)
        assert validate_topology(spec).ok == nx.is_directed_acyclic_graph(g)


class TestRoute:
    def tup(self, **values):
        return StreamTuple(tuple_id=1, stream_id="s", values=values)

    def test_global_is_zero(self):
        assert route(self.tup(v=3), Grouping.global_(), 7) == 0

    def test_fields_deterministic(self):
        t = self.tup(host="shop.example.com", url="x")
        a = route(t, Grouping.fields("host"), 4)
        b = route(t, Grouping.fields("host"), 4)
        assert a == b
        t2 = self.tup(host="shop.example.com", url="y")
        assert route(t2, Grouping.fields("host"), 4) == a

    def test_fields_missing_raises(self):
        from snapforge.stream import RoutingError

        with pytest.raises(RoutingError):
            route(self.tup(v=1), Grouping.fields("host"), 4)

    def test_shuffle_uniform_chi_square(self):
        # 10^4 tuples over 4 tasks: expect 2500 each; chi-square(3 dof) at
        # the 99.9% level is 16.27, and each bucket within +-300
        rng = random.Random(1234)
        counts = Counter(
            route(self.tup(v=i), Grouping.shuffle(), 4, rng=rng) for i in range(10_000)
        )
        chi2 = sum((counts[i] - 2500.0) ** 2 / 2500.0 for i in range(4))
        assert chi2 < 16.27
        for i in range(4):
            assert abs(counts[i] - 2500) <= 300


class TestSubmit:
    def test_valid_becomes_active(self):
        eng = make_engine()
        h = eng.submit(chain_spec())
        assert h.state is TopologyState.ACTIVE

    def test_queued_when_no_slot(self):
        eng = make_engine(config=RunConfig(worker_slots=1))
        eng.submit(chain_spec("one"))
        h2 = eng.submit(chain_spec("two"))
        assert h2.state is TopologyState.QUEUED

    def test_promoted_after_kill(self):
        eng = make_engine(config=RunConfig(worker_slots=1))
        h1 = eng.submit(chain_spec("one"))
        h2 = eng.submit(chain_spec("two"))
        eng.set_state(h1, TopologyState.KILLED)
        assert h2.state is TopologyState.ACTIVE

    def test_duplicate_name_rejected(self):
        eng = make_engine()
        eng.submit(chain_spec("crawler-siteA"))
        with pytest.raises(SubmitError):
            eng.submit(chain_spec("crawler-siteA"))

    def test_duplicate_allowed_after_kill(self):
        eng = make_engine()
        h = eng.submit(chain_spec("again"))
        eng.set_state(h, TopologyState.KILLED)
        eng.submit(chain_spec("again"))

    def test_invalid_spec_rejected(self):
        eng = make_engine()
        spec = TopologySpec(name="bad", spouts=(SpoutSpec("s", Spout, 0, {"a": ("v",)}),))
        with pytest.raises(SubmitError):
            eng.submit(spec)


class TestAcking:
    def test_chain_all_acked(self):
        spout, sink = ListSpout(range(10)), SinkBolt()
        eng = make_engine()
        eng.submit(chain_spec(spout=spout, sink=sink))
        eng.run_until_idle()
        assert sorted(sink.seen) == list(range(10))
        assert sorted(spout.acked) == list(range(10))
        assert spout.failed == []

    def test_root_with_no_subscribers_acks_immediately(self):
        spout = ListSpout([1])
        spec = TopologySpec(
            name="lonely", spouts=(SpoutSpec("spout", lambda: spout, 1, {"urls": ("v",)}),)
        )
        eng = make_engine()
        eng.submit(spec)
        eng.run_until_idle()
        assert spout.acked == [1]

    def test_failing_bolt_fails_root(self):
        class Boom(Bolt):
            def execute(self, tup, ctx):
                raise RuntimeError("nope")

        spout = ListSpout(range(3))
        spec = TopologySpec(
            name="boom",
            spouts=(SpoutSpec("spout", lambda: spout, 1, {"urls": ("v",)}),),
            bolts=(
                BoltSpec("b", Boom, 1, {}, (Subscription("spout", "urls", Grouping.shuffle()),)),
            ),
        )
        eng = make_engine()
        eng.submit(spec)
        eng.run_until_idle()
        assert sorted(spout.failed) == [0, 1, 2]
        assert spout.acked == []

    def test_emit_on_undeclared_stream_fails_tuple(self):
        class BadEmit(Bolt):
            def execute(self, tup, ctx):
                ctx.emit("ghost-stream", {"v": 1})

        spout = ListSpout([7])
        spec = TopologySpec(
            name="bademit",
            spouts=(SpoutSpec("spout", lambda: spout, 1, {"urls": ("v",)}),),
            bolts=(
                BoltSpec("b", BadEmit, 1, {"out": ("v",)},
                         (Subscription("spout", "urls", Grouping.shuffle()),)),
            ),
        )
        eng = make_engine()
        eng.submit(spec)
        eng.run_until_idle()
        assert spout.failed == [7]

    def test_tree_completion_needs_every_node(self):
        # root -> two children; the root input stays held un-acked, so the
        # callback can only fire once a later execute acks it (join pattern)
        events = []

        class HoldThenAck(Bolt):
            manual_ack = True

            def __init__(self):
                self.held_input = None

            def execute(self, tup, ctx):
                if tup.values["v"] == "release":
                    ctx.ack(tup)
                    if self.held_input is not None:
                        ctx.ack(self.held_input)  # late ack of the held tuple
                    return
                self.held_input = tup
                ctx.emit("out", {"v": 50})
                ctx.emit("out", {"v": 51})
                # input intentionally left held

        class TailBolt(Bolt):
            def execute(self, tup, ctx):
                events.append(tup.values["v"])

        spout = ListSpout(["work"])
        releaser = ListSpout(["release"], stream="ctl")
        spec = TopologySpec(
            name="tree",
            spouts=(
                SpoutSpec("spout", lambda: spout, 1, {"urls": ("v",)}),
                SpoutSpec("ctl", lambda: releaser, 1, {"ctl": ("v",)}),
            ),
            bolts=(
                BoltSpec("join", HoldThenAck, 1, {"out": ("v",)},
                         (Subscription("spout", "urls", Grouping.global_()),
                          Subscription("ctl", "ctl", Grouping.global_()),)),
                BoltSpec("tail", TailBolt, 1, {},
                         (Subscription("join", "out", Grouping.shuffle()),)),
            ),
        )
        eng = make_engine()
        eng.submit(spec)
        eng.run_until_idle(advance_clock=False)
        assert sorted(events) == [50, 51]  # children processed and acked
        assert spout.acked == ["work"]  # root completed via the late ack
        assert spout.failed == []

    def test_double_settle_is_idempotent(self):
        eng = make_engine()
        spout = ListSpout([1])
        h = eng.submit(chain_spec(spout=spout))
        eng.run_until_idle()
        run = h._run
        before = (spout.acked[:], spout.failed[:])
        run._fail_root(999999)  # unknown root: no-op
        run._apply_updates({123456: 42}, {}, {})  # settled root: no-op
        assert (spout.acked, spout.failed) == before

    def test_timeout_fires_on_fail(self):
        class Swallow(Bolt):
            manual_ack = True

            def execute(self, tup, ctx):
                pass  # never acks: tuple stays pending until timeout

        spout = ListSpout([1, 2])
        spec = TopologySpec(
            name="timeout",
            spouts=(SpoutSpec("spout", lambda: spout, 1, {"urls": ("v",)}),),
            bolts=(
                BoltSpec("sw", Swallow, 1, {}, (Subscription("spout", "urls", Grouping.shuffle()),)),
            ),
        )
        clock = SimulatedClock()
        eng = make_engine(clock=clock, config=RunConfig(tuple_timeout_secs=30.0))
        eng.submit(spec)
        eng.run_until_idle()  # advances the simulated clock to the deadline
        assert sorted(spout.failed) == [1, 2]
        assert clock.monotonic() >= 30.0

    def test_spout_retry_after_fail(self):
        class FlakyOnce(Bolt):
            def __init__(self):
                self.seen = set()

            def execute(self, tup, ctx):
                v = tup.values["v"]
                if v not in self.seen:
                    self.seen.add(v)
                    raise RuntimeError("first attempt fails")

        spout = ListSpout(range(4), retry_failed=True)
        flaky = FlakyOnce()
        spec = TopologySpec(
            name="retry",
            spouts=(SpoutSpec("spout", lambda: spout, 1, {"urls": ("v",)}),),
            bolts=(
                BoltSpec("b", lambda: flaky, 1, {},
                         (Subscription("spout", "urls", Grouping.shuffle()),)),
            ),
        )
        eng = make_engine()
        eng.submit(spec)
        eng.run_until_idle()
        assert sorted(spout.acked) == [0, 1, 2, 3]
        assert sorted(spout.failed) == [0, 1, 2, 3]  # each failed exactly once


class TestFieldsGroupingDelivery:
    def test_same_key_same_task(self):
        per_task = {}

        class Recorder(Bolt):
            def __init__(self):
                self.idx = None

            def open(self, ctx):
                self.idx = ctx.task_index

            def execute(self, tup, ctx):
                per_task.setdefault(tup.values["host"], set()).add(self.idx)

        spout = ListSpout(
            [f"host{i % 5}" for i in range(50)], stream="urls", field="host"
        )
        spec = TopologySpec(
            name="fields",
            spouts=(SpoutSpec("spout", lambda: spout, 1, {"urls": ("host",)}),),
            bolts=(
                BoltSpec("rec", Recorder, 4, {},
                         (Subscription("spout", "urls", Grouping.fields("host")),)),
            ),
        )
        eng = make_engine()
        eng.submit(spec)
        eng.run_until_idle()
        for host, tasks in per_task.items():
            assert len(tasks) == 1  # one owner task per host


class TestLifecycle:
    def test_deactivate_stops_emission(self):
        spout = ListSpout(range(1000), burst=1)
        eng = make_engine()
        h = eng.submit(chain_spec(spout=spout))
        for _ in range(5):
            eng.pump()
        eng.set_state(h, TopologyState.DEACTIVATED)
        emitted_before = h.metrics()["spout"]["emitted"]
        for _ in range(5):
            eng.pump()
        assert h.metrics()["spout"]["emitted"] == emitted_before

    def test_reactivate_resumes(self):
        spout = ListSpout(range(10))
        eng = make_engine()
        h = eng.submit(chain_spec(spout=spout))
        eng.set_state(h, TopologyState.DEACTIVATED)
        eng.set_state(h, TopologyState.ACTIVE)
        eng.run_until_idle()
        assert sorted(spout.acked) == list(range(10))

    def test_killed_to_active_rejected(self):
        eng = make_engine()
        h = eng.submit(chain_spec())
        eng.set_state(h, TopologyState.KILLED)
        with pytest.raises(IllegalTransitionError):
            eng.set_state(h, TopologyState.ACTIVE)

    def test_queued_to_killed_rejected(self):
        eng = make_engine(config=RunConfig(worker_slots=1))
        eng.submit(chain_spec("one"))
        h2 = eng.submit(chain_spec("two"))
        with pytest.raises(IllegalTransitionError):
            eng.set_state(h2, TopologyState.KILLED)

    def test_kill_fails_pending_roots(self):
        class Swallow(Bolt):
            manual_ack = True

        spout = ListSpout([1, 2, 3])
        spec = TopologySpec(
            name="killpending",
            spouts=(SpoutSpec("spout", lambda: spout, 1, {"urls": ("v",)}),),
            bolts=(
                BoltSpec("sw", Swallow, 1, {}, (Subscription("spout", "urls", Grouping.shuffle()),)),
            ),
        )
        eng = make_engine()
        h = eng.submit(spec)
        eng.run_until_idle(advance_clock=False)
        eng.set_state(h, TopologyState.KILLED)
        assert sorted(spout.failed) == [1, 2, 3]


class TestBackpressure:
    def test_spout_pauses_when_queue_full(self):
        class Stuck(Bolt):
            def execute(self, tup, ctx):
                ctx.defer(wake_at=ctx.monotonic() + 1e9)

        spout = ListSpout(range(100), burst=1)
        spec = TopologySpec(
            name="bp",
            spouts=(SpoutSpec("spout", lambda: spout, 1, {"urls": ("v",)}),),
            bolts=(
                BoltSpec("stuck", Stuck, 1, {},
                         (Subscription("spout", "urls", Grouping.shuffle()),)),
            ),
        )
        eng = make_engine(config=RunConfig(queue_capacity=8, tuple_timeout_secs=1e12))
        h = eng.submit(spec)
        for _ in range(200):
            eng.pump()
        assert h.metrics()["spout"]["emitted"] <= 9  # capacity + the deferred one


class TestMetricsConservation:
    def test_emitted_equals_settled_plus_pending(self):
        rng = random.Random(7)

        class Flaky(Bolt):
            def execute(self, tup, ctx):
                if rng.random() < 0.2:
                    raise RuntimeError("injected")

        spout = ListSpout(range(300), burst=8)
        spec = TopologySpec(
            name="cons",
            spouts=(SpoutSpec("spout", lambda: spout, 1, {"urls": ("v",)}),),
            bolts=(
                BoltSpec("b", Flaky, 2, {}, (Subscription("spout", "urls", Grouping.shuffle()),)),
            ),
        )
        eng = make_engine()
        h = eng.submit(spec)
        eng.run_until_idle()
        roots = h.metrics()["_roots"]
        assert roots["emitted"] == roots["acked"] + roots["failed"] + roots["pending"]
        assert roots["pending"] == 0
        assert roots["emitted"] == 300
