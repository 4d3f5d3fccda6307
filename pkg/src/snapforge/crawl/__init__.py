"""Focused-crawler subsystem: scheduler, crawl topology, analytics topology."""

from snapforge.crawl.types import CrawlRequest, FrontierEntry, ProductDoc, SelectorRule
from snapforge.crawl.urls import (
    InvalidUrlError,
    canonicalize_url,
    discover_product_urls,
    doc_id_for,
    url_partition,
)
from snapforge.crawl.rules import RuleError, extract_field, parse_price
from snapforge.crawl.transport import (
    FixtureTransport,
    HttpTransport,
    PageContent,
    TransportError,
    strip_noise,
)
from snapforge.crawl.scheduler import CrawlerScheduler, RegistrationError

__all__ = [
    "CrawlRequest",
    "CrawlerScheduler",
    "FixtureTransport",
    "FrontierEntry",
    "HttpTransport",
    "InvalidUrlError",
    "PageContent",
    "ProductDoc",
    "RegistrationError",
    "RuleError",
    "SelectorRule",
    "TransportError",
    "canonicalize_url",
    "discover_product_urls",
    "doc_id_for",
    "extract_field",
    "parse_price",
    "strip_noise",
    "url_partition",
]
