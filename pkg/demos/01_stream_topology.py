"""Build and run a small stream topology: one spout, two bolts, acking.

A sentence spout feeds a splitter bolt (shuffle-grouped) and a counter bolt
(fields-grouped by word, so each word is owned by one task). The run ends
when every tuple tree is fully acked; the metrics show the conservation
emitted = acked + failed + pending.
"""

from collections import Counter, deque

from snapforge.stream import (
    Bolt,
    BoltSpec,
    Grouping,
    RunConfig,
    SimulatedClock,
    Spout,
    SpoutSpec,
    StreamEngine,
    Subscription,
    TopologySpec,
)

SENTENCES = [
    "red dress with silk belt",
    "blue denim jacket",
    "red silk scarf",
    "denim pants with red stitching",
]


class SentenceSpout(Spout):
    def __init__(self):
        self.todo = deque(SENTENCES)
        self.done = 0

    def next_tuple(self, ctx):
        if self.todo:
            ctx.emit("sentences", {"text": self.todo.popleft()})

    def on_ack(self, root):
        self.done += 1


class SplitBolt(Bolt):
    def execute(self, tup, ctx):
        for word in tup.values["text"].split():
            ctx.emit("words", {"word": word})


class CountBolt(Bolt):
    totals = Counter()

    def execute(self, tup, ctx):
        CountBolt.totals[tup.values["word"]] += 1


def main():
    spout = SentenceSpout()
    spec = TopologySpec(
        name="word-count",
        spouts=(SpoutSpec("sentences", lambda: spout, 1, {"sentences": ("text",)}),),
        bolts=(
            BoltSpec(
                "split",
                SplitBolt,
                2,
                {"words": ("word",)},
                (Subscription("sentences", "sentences", Grouping.shuffle()),),
            ),
            BoltSpec(
                "count",
                CountBolt,
                2,
                {},
                (Subscription("split", "words", Grouping.fields("word")),),
            ),
        ),
    )
    engine = StreamEngine(RunConfig(rng_seed=42), clock=SimulatedClock(), track_trees=True)
    handle = engine.submit(spec)
    print(f"submitted {handle.name}: state={handle.state.value}")
    engine.run_until_idle()
    print(f"spout saw {spout.done} trees complete")
    for word, count in CountBolt.totals.most_common(5):
        print(f"  {word:10s} {count}")
    roots = handle.metrics()["_roots"]
    print(f"roots: emitted={roots['emitted']} acked={roots['acked']} "
          f"failed={roots['failed']} pending={roots['pending']}")


if __name__ == "__main__":
    main()
