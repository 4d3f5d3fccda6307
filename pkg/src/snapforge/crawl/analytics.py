"""Image-analytics topology: log consumer spout, politeness-aware image
fetches, region detection, embedding extraction into the vector store.

    log-spout ─(fields host)─> image-fetcher ─> region-detector ─> embedder

The spout is a consumer group over the image-URL topic: offsets are
committed only once the whole tuple tree acks, and commits advance per
partition in contiguous order, so a crash or failure replays unprocessed
records (at-least-once). A record that keeps failing is skipped after
MAX_RECORD_ATTEMPTS with a warning so one poisoned image cannot wedge the
partition.
"""

from __future__ import annotations

import json
import logging

from snapforge.crawl.topology import PolitenessRegistry
from snapforge.gan.embed import WholeImageDetector, decode_image, normalize, preprocess_pil
from snapforge.gan.network import discriminator_forward
from snapforge.messagelog import fnv1a64
from snapforge.stream import Bolt, BoltSpec, Grouping, Spout, SpoutSpec, Subscription, TopologySpec
from snapforge.vectorindex import CollectionError, EmbeddingEntry

logger = logging.getLogger(__name__)

MAX_RECORD_ATTEMPTS = 3


class LogConsumerSpout(Spout):
    """Polls the image-URL topic and emits one root tuple per record."""

    def __init__(self, message_log, topic: str, group_id: str, burst: int = 8):
        self.log = message_log
        self.topic = topic
        self.group_id = group_id
        self.burst = burst
        self.in_flight: set[tuple[int, int]] = set()
        self.acked: dict[int, set[int]] = {}
        self.attempts: dict[tuple[int, int], int] = {}

    def next_tuple(self, ctx):
        window = len(self.in_flight) + self.burst
        emitted = 0
        for rec in self.log.poll(self.group_id, self.topic, window):
            slot = (rec.partition, rec.offset)
            if slot in self.in_flight or rec.offset in self.acked.get(rec.partition, ()):
                continue
            if self.attempts.get(slot, 0) >= MAX_RECORD_ATTEMPTS:
                logger.warning(
                    "skipping poisoned record %s[%d]@%d after %d attempts",
                    self.topic, rec.partition, rec.offset, self.attempts[slot],
                )
                self._settle(rec.partition, rec.offset)
                continue
            try:
                payload = json.loads(rec.payload.decode("utf-8"))
                from snapforge.crawl.urls import url_partition

                host, _ = url_partition(payload["image_url"])
            except Exception:
                logger.warning("malformed image record at %s; skipping", slot)
                self._settle(rec.partition, rec.offset)
                continue
            ctx.emit(
                "images",
                {
                    "doc_id": payload["doc_id"],
                    "image_url": payload["image_url"],
                    "site_name": payload.get("site_name", ""),
                    "host": host,
                    "partition": rec.partition,
                    "offset": rec.offset,
                },
            )
            self.in_flight.add(slot)
            self.attempts[slot] = self.attempts.get(slot, 0) + 1
            emitted += 1
            if emitted >= self.burst:
                return

    def _settle(self, partition: int, offset: int) -> None:
        """Mark an offset done and advance the contiguous commit point."""
        acked = self.acked.setdefault(partition, set())
        acked.add(offset)
        committed = self.log.committed(self.group_id, self.topic, partition)
        advanced = committed
        while advanced in acked:
            advanced += 1
        if advanced > committed:
            self.log.commit(self.group_id, self.topic, partition, advanced)
            for off in range(committed, advanced):
                acked.discard(off)
                self.attempts.pop((partition, off), None)

    def on_ack(self, root):
        slot = (root.values["partition"], root.values["offset"])
        self.in_flight.discard(slot)
        self._settle(*slot)

    def on_fail(self, root):
        self.in_flight.discard((root.values["partition"], root.values["offset"]))


class ImageFetchBolt(Bolt):
    """Downloads image bytes under the same per-host politeness contract as
    the page fetcher."""

    def __init__(self, transport, politeness: PolitenessRegistry, delay_ms: int):
        self.transport = transport
        self.politeness = politeness
        self.delay_ms = delay_ms

    def execute(self, tup, ctx):
        host = tup.values["host"]
        delay = self.delay_ms / 1000.0
        now = ctx.monotonic()
        allowed = self.politeness.next_allowed(host, delay)
        if now < allowed:
            ctx.defer(wake_at=allowed)
        self.politeness.record(host, now)
        page = self.transport.fetch(tup.values["image_url"])
        ctx.emit(
            "raw-images",
            {
                "doc_id": tup.values["doc_id"],
                "image_url": tup.values["image_url"],
                "site_name": tup.values["site_name"],
                "body": page.body,
            },
        )


class RegionDetectBolt(Bolt):
    """Runs the pluggable detector; falls back to the whole image."""

    def __init__(self, detector=None):
        self.detector = detector or WholeImageDetector()
        self._whole = WholeImageDetector()

    def execute(self, tup, ctx):
        img = decode_image(tup.values["body"])  # EmbeddingError -> tuple fails
        try:
            regions = self.detector.detect(img, key=tup.values["image_url"])
        except Exception:
            logger.warning("detector failed on %s; using whole image", tup.values["image_url"])
            regions = []
        if not regions:
            regions = self._whole.detect(img)
        for idx, region in enumerate(regions):
            ctx.emit(
                "regions",
                {
                    "doc_id": tup.values["doc_id"],
                    "image_url": tup.values["image_url"],
                    "site_name": tup.values["site_name"],
                    "body": tup.values["body"],
                    "bbox": [region.x, region.y, region.w, region.h],
                    "region_label": region.class_label,
                    "region_index": idx,
                },
            )


class EmbedBolt(Bolt):
    """Crops the region, extracts discriminator features, and inserts the
    normalized vector; replayed entries are idempotent no-ops."""

    def __init__(self, params, collection):
        self.params = params
        self.collection = collection

    def execute(self, tup, ctx):
        img = decode_image(tup.values["body"])
        x, y, w, h = tup.values["bbox"]
        crop = img.crop((x, y, x + w, y + h))
        tensor = preprocess_pil(crop, self.params.config.image_size)[None]
        _, _, features = discriminator_forward(
            self.params, tensor.astype(self.params.config.np_dtype)
        )
        vector = normalize(features[0])
        entry_id = (
            f"{tup.values['doc_id']}#{fnv1a64(tup.values['image_url'].encode()):08x}"
            f":{tup.values['region_index']}"
        )
        entry = EmbeddingEntry(
            entry_id,
            tup.values["doc_id"],
            tup.values["region_index"],
            vector,
            tup.values["region_label"],
        )
        try:
            self.collection.insert(entry)
        except CollectionError as e:
            if "duplicate" not in str(e):
                raise
            logger.debug("entry %s already present (replay)", entry_id)


def build_analytics_topology(
    message_log,
    topic: str,
    group_id: str,
    transport,
    politeness: PolitenessRegistry,
    params,
    collection,
    detector=None,
    politeness_delay_ms: int = 50,
    name: str = "image-analytics",
) -> TopologySpec:
    spouts = (
        SpoutSpec(
            "log-spout",
            lambda: LogConsumerSpout(message_log, topic, group_id),
            1,
            {"images": ("doc_id", "image_url", "site_name", "host", "partition", "offset")},
        ),
    )
    bolts = (
        BoltSpec(
            "image-fetcher",
            lambda: ImageFetchBolt(transport, politeness, politeness_delay_ms),
            2,
            {"raw-images": ("doc_id", "image_url", "site_name", "body")},
            (Subscription("log-spout", "images", Grouping.fields("host")),),
        ),
        BoltSpec(
            "region-detector",
            lambda: RegionDetectBolt(detector),
            1,
            {
                "regions": (
                    "doc_id", "image_url", "site_name", "body",
                    "bbox", "region_label", "region_index",
                )
            },
            (Subscription("image-fetcher", "raw-images", Grouping.shuffle()),),
        ),
        BoltSpec(
            "embedder",
            lambda: EmbedBolt(params, collection),
            1,
            {},
            (Subscription("region-detector", "regions", Grouping.shuffle()),),
        ),
    )
    return TopologySpec(name=name, spouts=spouts, bolts=bolts)
