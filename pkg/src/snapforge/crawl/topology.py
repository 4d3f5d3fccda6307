"""The crawler topology: two spouts and ten bolts.

    frontier-spout ─┐
    refresh-spout ──┴─> url-partitioner ─(fields host)─> fetcher
        fetcher ─> {name, price, brand, description, links, image-urls}
        field bolts ─(global)─> indexing (join by url) ─> image-url-producer

The frontier spout replays failed URLs (at-least-once) up to max_retries;
the fetcher owns per-host politeness clocks (fields grouping guarantees one
task per host) and defers until the delay has elapsed; the indexing bolt
holds the six field tuples of a page un-acked until the join completes or
times out, then indexes the document and acks the whole group.
"""

from __future__ import annotations

import json
import threading
from collections import deque
from dataclasses import dataclass, field

from snapforge.crawl.rules import extract_field
from snapforge.crawl.transport import TransportError, strip_noise
from snapforge.crawl.types import (
    CrawlRequest,
    FrontierEntry,
    PRODUCT_FIELDS,
    REQUIRED_FIELDS,
    ProductDoc,
)
from snapforge.crawl.urls import doc_id_for, url_partition
from snapforge.stream import Bolt, BoltSpec, Grouping, Spout, SpoutSpec, Subscription, TopologySpec

from decimal import Decimal

JOIN_TIMEOUT_SECS = 10.0
MAX_RETRIES = 2


class PolitenessRegistry:
    """Last request-start time per host. Hosts are owned by single fetcher
    tasks (fields grouping), so updates are uncontended; the lock guards the
    scheduler's seed fetches racing a live topology."""

    def __init__(self):
        self._last: dict[str, float] = {}
        self._lock = threading.Lock()

    def next_allowed(self, host: str, delay_secs: float) -> float:
        with self._lock:
            last = self._last.get(host)
        return 0.0 if last is None else last + delay_secs

    def record(self, host: str, now: float) -> None:
        with self._lock:
            self._last[host] = now


@dataclass
class _Entry:
    entry: FrontierEntry
    last_crawl: float | None = None


class FrontierStore:
    """URL frontier with status bookkeeping, optionally persisted into a
    text-index core (the crawler's URL store)."""

    def __init__(self, request_id: str, persist_index=None):
        self.request_id = request_id
        self._entries: dict[str, _Entry] = {}
        self.pending: deque[str] = deque()
        self._persist = persist_index
        self._lock = threading.Lock()

    def add(self, url: str) -> bool:
        with self._lock:
            if url in self._entries:
                return False
            self._entries[url] = _Entry(FrontierEntry(url, self.request_id))
            self.pending.append(url)
        self._persist_entry(url)
        return True

    def get(self, url: str) -> FrontierEntry | None:
        slot = self._entries.get(url)
        return slot.entry if slot else None

    def mark_fetched(self, url: str, now: float) -> None:
        slot = self._entries[url]
        slot.entry.status = "fetched"
        slot.last_crawl = now
        self._persist_entry(url)

    def mark_failed(self, url: str) -> None:
        self._entries[url].entry.status = "failed"
        self._persist_entry(url)

    def note_retry(self, url: str) -> int:
        slot = self._entries[url]
        slot.entry.retry_count += 1
        self._persist_entry(url)
        return slot.entry.retry_count

    def requeue(self, url: str) -> None:
        slot = self._entries[url]
        slot.entry.status = "pending"
        with self._lock:
            self.pending.append(url)
        self._persist_entry(url)

    def counts(self) -> dict[str, int]:
        out = {"pending": 0, "fetched": 0, "failed": 0}
        for slot in self._entries.values():
            out[slot.entry.status] += 1
        out["total"] = len(self._entries)
        return out

    def urls_fetched_before(self, cutoff: float) -> list[str]:
        return [
            url
            for url, slot in self._entries.items()
            if slot.entry.status == "fetched"
            and slot.last_crawl is not None
            and slot.last_crawl <= cutoff
        ]

    def _persist_entry(self, url: str) -> None:
        if self._persist is None:
            return
        e = self._entries[url].entry
        self._persist.upsert(
            {
                "doc_id": doc_id_for(url),
                "url": url,
                "request_id": e.request_id,
                "status": e.status,
                "retry_count": e.retry_count,
            }
        )
        self._persist.commit()


class FrontierSpout(Spout):
    """Emits pending frontier URLs; retries transient failures up to
    MAX_RETRIES, leaves permanently failed entries alone."""

    def __init__(self, store: FrontierStore, request: CrawlRequest, burst: int = 4):
        self.store = store
        self.request = request
        self.burst = burst

    def next_tuple(self, ctx):
        for _ in range(self.burst):
            with self.store._lock:
                url = self.store.pending.popleft() if self.store.pending else None
            if url is None:
                return
            ctx.emit("urls", {"url": url, "request_id": self.request.request_id})

    def on_ack(self, root):
        self.store.mark_fetched(root.values["url"], root.spawn_time)

    def on_fail(self, root):
        url = root.values["url"]
        entry = self.store.get(url)
        if entry is None or entry.status == "failed":
            return  # permanently failed by the fetcher (4xx) or unknown
        if entry.retry_count >= MAX_RETRIES:
            self.store.mark_failed(url)
            return
        self.store.note_retry(url)
        self.store.requeue(url)


class RefreshSpout(Spout):
    """Re-crawl spout: re-emits fetched URLs older than the configured
    interval; inert when the request sets no interval."""

    def __init__(self, store: FrontierStore, request: CrawlRequest, burst: int = 2):
        self.store = store
        self.request = request
        self.burst = burst
        self._inflight: set[str] = set()

    def next_tuple(self, ctx):
        interval = self.request.recrawl_interval_secs
        if interval is None:
            return
        cutoff = ctx.monotonic() - interval
        emitted = 0
        for url in self.store.urls_fetched_before(cutoff):
            if url in self._inflight:
                continue
            ctx.emit("urls", {"url": url, "request_id": self.request.request_id})
            self._inflight.add(url)
            emitted += 1
            if emitted >= self.burst:
                return

    def on_ack(self, root):
        url = root.values["url"]
        self._inflight.discard(url)
        self.store.mark_fetched(url, root.spawn_time)

    def on_fail(self, root):
        self._inflight.discard(root.values["url"])


class UrlPartitionerBolt(Bolt):
    def execute(self, tup, ctx):
        host, canonical = url_partition(tup.values["url"])  # raises on junk -> fail
        ctx.emit(
            "partitioned",
            {"host": host, "url": canonical, "request_id": tup.values["request_id"]},
        )


class FetcherBolt(Bolt):
    """Fetch with per-host politeness; 4xx marks the frontier entry failed
    for good, transient faults fail the tuple for spout-level retry."""

    def __init__(self, transport, politeness: PolitenessRegistry, requests_by_id, stores_by_id):
        self.transport = transport
        self.politeness = politeness
        self.requests_by_id = requests_by_id
        self.stores_by_id = stores_by_id

    def execute(self, tup, ctx):
        host = tup.values["host"]
        url = tup.values["url"]
        request = self.requests_by_id[tup.values["request_id"]]
        delay = request.politeness_delay_ms / 1000.0
        now = ctx.monotonic()
        allowed = self.politeness.next_allowed(host, delay)
        if now < allowed:
            ctx.defer(wake_at=allowed)
        self.politeness.record(host, now)
        try:
            page = self.transport.fetch(url)
        except TransportError as e:
            if not e.retryable:
                self.stores_by_id[request.request_id].mark_failed(url)
            raise
        body = page.body.decode("utf-8", errors="replace")
        if "html" in page.content_type:
            body = strip_noise(body)
        ctx.emit("pages", {"url": url, "request_id": request.request_id, "body": body})


class FieldBolt(Bolt):
    """Extracts one product field from the page; emits None when the field
    is simply absent (the join flags required gaps)."""

    def __init__(self, field_name: str, requests_by_id):
        self.field_name = field_name
        self.requests_by_id = requests_by_id

    def execute(self, tup, ctx):
        request = self.requests_by_id[tup.values["request_id"]]
        rule = request.extraction_rules.get(self.field_name)
        value = None
        if rule is not None:
            value = extract_field(tup.values["body"], rule, base_url=tup.values["url"])
        if self.field_name == "price" and isinstance(value, tuple):
            value = [str(value[0]), value[1]]
        ctx.emit(
            "fields",
            {
                "url": tup.values["url"],
                "request_id": tup.values["request_id"],
                "field": self.field_name,
                "value": value,
            },
        )


@dataclass
class _JoinGroup:
    first_seen: float
    values: dict = field(default_factory=dict)
    tuples: list = field(default_factory=list)


class IndexingBolt(Bolt):
    """Joins the six field tuples of one page by URL, builds the document,
    indexes it, and emits it onward; holds every contributing tuple un-acked
    until the join settles (complete or timed out)."""

    manual_ack = True

    def __init__(self, text_index, requests_by_id, join_timeout: float = JOIN_TIMEOUT_SECS):
        self.text_index = text_index
        self.requests_by_id = requests_by_id
        self.join_timeout = join_timeout
        self.groups: dict[tuple[str, str], _JoinGroup] = {}

    def execute(self, tup, ctx):
        key = (tup.values["request_id"], tup.values["url"])
        group = self.groups.get(key)
        if group is None:
            group = self.groups[key] = _JoinGroup(first_seen=ctx.monotonic())
        group.values[tup.values["field"]] = tup.values["value"]
        group.tuples.append(tup)
        if len(group.values) == len(PRODUCT_FIELDS):
            self._finalize(key, ctx, incomplete=False)
        self._flush_stale(ctx)

    def _flush_stale(self, ctx):
        now = ctx.monotonic()
        for key in [
            k for k, g in self.groups.items() if now - g.first_seen >= self.join_timeout
        ]:
            self._finalize(key, ctx, incomplete=True)

    def _finalize(self, key, ctx, incomplete: bool):
        request_id, url = key
        group = self.groups.pop(key)
        request = self.requests_by_id[request_id]
        values = group.values
        price = values.get("price")
        price_value = Decimal(price[0]) if price else None
        currency = price[1] if price else None
        missing_required = [f for f in REQUIRED_FIELDS if not values.get(f)]
        doc = ProductDoc(
            doc_id=doc_id_for(url),
            url=url,
            site_name=request.site_name,
            name=values.get("name"),
            price=price_value,
            currency=currency,
            brand=values.get("brand"),
            description=values.get("description"),
            links=values.get("links") or [],
            image_urls=values.get("image_urls") or [],
            crawl_time=ctx.monotonic(),
            incomplete=incomplete or bool(missing_required),
        )
        doc.validate()
        self.text_index.upsert(doc.to_record())
        self.text_index.commit()
        ctx.emit(
            "indexed",
            {
                "doc_id": doc.doc_id,
                "url": url,
                "site_name": doc.site_name,
                "image_urls": list(doc.image_urls),
            },
            anchors=group.tuples,
        )
        for t in group.tuples:
            ctx.ack(t)


class ImageUrlProducerBolt(Bolt):
    """Publishes one record per product image URL, keyed by doc_id so all of
    a product's images land in one partition."""

    def __init__(self, message_log, topic: str):
        self.message_log = message_log
        self.topic = topic

    def execute(self, tup, ctx):
        doc_id = tup.values["doc_id"]
        for image_url in tup.values["image_urls"]:
            payload = json.dumps(
                {
                    "doc_id": doc_id,
                    "image_url": image_url,
                    "site_name": tup.values["site_name"],
                }
            ).encode("utf-8")
            self.message_log.produce(self.topic, payload, key=doc_id.encode("utf-8"))


FIELD_BOLT_IDS = tuple(f"field-{name}" for name in PRODUCT_FIELDS)


def build_crawler_topology(
    request: CrawlRequest,
    store: FrontierStore,
    transport,
    politeness: PolitenessRegistry,
    text_index,
    message_log,
    requests_by_id,
    stores_by_id,
    topic: str = "image-urls",
    fetcher_parallelism: int = 2,
    join_timeout: float = JOIN_TIMEOUT_SECS,
) -> TopologySpec:
    url_schema = ("url", "request_id")
    spouts = (
        SpoutSpec(
            "frontier-spout",
            lambda: FrontierSpout(store, request),
            1,
            {"urls": url_schema},
        ),
        SpoutSpec(
            "refresh-spout",
            lambda: RefreshSpout(store, request),
            1,
            {"urls": url_schema},
        ),
    )
    field_bolts = tuple(
        BoltSpec(
            f"field-{name}",
            (lambda n: (lambda: FieldBolt(n, requests_by_id)))(name),
            1,
            {"fields": ("url", "request_id", "field", "value")},
            (Subscription("fetcher", "pages", Grouping.shuffle()),),
        )
        for name in PRODUCT_FIELDS
    )
    bolts = (
        BoltSpec(
            "url-partitioner",
            lambda: UrlPartitionerBolt(),
            2,
            {"partitioned": ("host", "url", "request_id")},
            (
                Subscription("frontier-spout", "urls", Grouping.shuffle()),
                Subscription("refresh-spout", "urls", Grouping.shuffle()),
            ),
        ),
        BoltSpec(
            "fetcher",
            lambda: FetcherBolt(transport, politeness, requests_by_id, stores_by_id),
            fetcher_parallelism,
            {"pages": ("url", "request_id", "body")},
            (Subscription("url-partitioner", "partitioned", Grouping.fields("host")),),
        ),
        *field_bolts,
        BoltSpec(
            "indexing",
            lambda: IndexingBolt(text_index, requests_by_id, join_timeout),
            1,
            {"indexed": ("doc_id", "url", "site_name", "image_urls")},
            tuple(
                Subscription(bolt_id, "fields", Grouping.global_())
                for bolt_id in FIELD_BOLT_IDS
            ),
        ),
        BoltSpec(
            "image-url-producer",
            lambda: ImageUrlProducerBolt(message_log, topic),
            1,
            {},
            (Subscription("indexing", "indexed", Grouping.shuffle()),),
        ),
    )
    return TopologySpec(name=f"crawler-{request.site_name}", spouts=spouts, bolts=bolts)
