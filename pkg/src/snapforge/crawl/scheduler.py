"""Topology scheduler: validates crawl requests, expands seeds into the URL
frontier, and submits crawler/analytics topologies to the stream engine.

Seed pages are fetched synchronously at registration (recording into the
shared politeness registry, sleeping out any residual delay), product URLs
are discovered and persisted into a per-site frontier core of the text
index, and the crawler topology is built, validated, and queued.
"""

from __future__ import annotations

import itertools
import logging
import os
import threading

from snapforge.crawl.topology import (
    FrontierStore,
    PolitenessRegistry,
    build_crawler_topology,
)
from snapforge.crawl.analytics import build_analytics_topology
from snapforge.crawl.transport import TransportError
from snapforge.crawl.types import CrawlRequest
from snapforge.crawl.urls import canonicalize_url, discover_product_urls, url_partition
from snapforge.messagelog import TopicError
from snapforge.stream import TopologyState
from snapforge.textindex import TextIndex

logger = logging.getLogger(__name__)


class RegistrationError(Exception):
    pass


class CrawlerScheduler:
    """Builds and controls crawl topologies over shared stores."""

    def __init__(
        self,
        engine,
        text_index,
        message_log,
        transport,
        index_dir: str | None = None,
        topic: str = "image-urls",
        topic_partitions: int = 4,
        fetcher_parallelism: int = 2,
        join_timeout: float = 10.0,
    ) -> None:
        self.engine = engine
        self.text_index = text_index
        self.message_log = message_log
        self.transport = transport
        self.index_dir = index_dir
        self.topic = topic
        self.fetcher_parallelism = fetcher_parallelism
        self.join_timeout = join_timeout
        self.politeness = PolitenessRegistry()
        self.requests_by_id: dict[str, CrawlRequest] = {}
        self.stores_by_id: dict[str, FrontierStore] = {}
        self.handles: dict[str, object] = {}
        self.frontier_cores: dict[str, TextIndex] = {}
        self.analytics_handle = None
        self._seq = itertools.count(1)
        self._lock = threading.Lock()
        try:
            message_log.create_topic(topic, topic_partitions)
        except TopicError:
            pass  # already present

    # -- registration -------------------------------------------------------

    def register_crawl_request(self, request: CrawlRequest) -> str:
        try:
            request.validate()
        except ValueError as e:
            raise RegistrationError(str(e)) from e
        with self._lock:
            for rid, existing in self.requests_by_id.items():
                handle = self.handles.get(rid)
                if (
                    existing.site_name == request.site_name
                    and handle is not None
                    and handle.state is not TopologyState.KILLED
                ):
                    raise RegistrationError(
                        f"site {request.site_name!r} already has an active crawl request"
                    )
            request_id = f"req-{next(self._seq):04d}"
        request.request_id = request_id

        core = self._frontier_core(request.site_name)
        store = FrontierStore(request_id, persist_index=core)
        discovered = self._expand_seeds(request, store)
        if discovered == 0 and not store.pending:
            logger.warning("request %s discovered no product URLs", request_id)

        spec = build_crawler_topology(
            request,
            store,
            self.transport,
            self.politeness,
            self.text_index,
            self.message_log,
            self.requests_by_id,
            self.stores_by_id,
            topic=self.topic,
            fetcher_parallelism=self.fetcher_parallelism,
            join_timeout=self.join_timeout,
        )
        self.requests_by_id[request_id] = request
        self.stores_by_id[request_id] = store
        try:
            handle = self.engine.submit(spec)
        except Exception:
            del self.requests_by_id[request_id]
            del self.stores_by_id[request_id]
            raise
        self.handles[request_id] = handle
        return request_id

    def _frontier_core(self, site_name: str) -> TextIndex:
        if site_name not in self.frontier_cores:
            journal = None
            if self.index_dir:
                journal = os.path.join(self.index_dir, f"frontier-{site_name}.jsonl")
            self.frontier_cores[site_name] = TextIndex(
                text_fields={"url": 1.0},
                filter_fields=("request_id", "status"),
                journal_path=journal,
            )
        return self.frontier_cores[site_name]

    def _expand_seeds(self, request: CrawlRequest, store: FrontierStore) -> int:
        clock = self.engine.clock
        delay = request.politeness_delay_ms / 1000.0
        fetched_any = False
        added = 0
        for seed in request.seed_urls:
            try:
                seed_url = canonicalize_url(seed)
                host, _ = url_partition(seed_url)
            except Exception as e:
                raise RegistrationError(f"bad seed URL {seed!r}: {e}") from e
            wait = self.politeness.next_allowed(host, delay) - clock.monotonic()
            if wait > 0:
                clock.sleep(wait)
            self.politeness.record(host, clock.monotonic())
            try:
                page = self.transport.fetch(seed_url)
            except TransportError as e:
                logger.warning("seed fetch failed for %s: %s", seed_url, e)
                continue
            fetched_any = True
            for url in discover_product_urls(
                page.body, request.url_include_patterns, seed_url
            ):
                if store.counts()["total"] >= request.max_pages:
                    break
                if store.add(url):
                    added += 1
        if not fetched_any:
            raise RegistrationError("every seed fetch failed")
        return added

    # -- lifecycle ------------------------------------------------------------

    def cancel(self, request_id: str) -> None:
        handle = self.handles.get(request_id)
        if handle is None:
            raise KeyError(request_id)
        if handle.state in (TopologyState.ACTIVE, TopologyState.DEACTIVATED):
            self.engine.set_state(handle, TopologyState.KILLED)

    def start_analytics(
        self, params, collection, detector=None, group_id: str = "analytics",
        politeness_delay_ms: int = 50,
    ):
        """Submit the image-analytics topology (once)."""
        if self.analytics_handle is not None:
            return self.analytics_handle
        spec = build_analytics_topology(
            self.message_log,
            self.topic,
            group_id,
            self.transport,
            self.politeness,
            params,
            collection,
            detector=detector,
            politeness_delay_ms=politeness_delay_ms,
        )
        self.analytics_handle = self.engine.submit(spec)
        return self.analytics_handle

    def status(self) -> dict:
        out = {}
        for rid, request in self.requests_by_id.items():
            handle = self.handles.get(rid)
            out[rid] = {
                "site_name": request.site_name,
                "state": handle.state.value if handle else "unknown",
                "frontier": self.stores_by_id[rid].counts(),
                "metrics": handle.metrics() if handle else {},
            }
        return out
