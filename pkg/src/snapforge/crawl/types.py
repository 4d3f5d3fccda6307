"""Crawl-request, extraction-rule, product, and frontier types."""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from decimal import Decimal
from typing import Any

PRODUCT_FIELDS = ("name", "price", "brand", "description", "links", "image_urls")
REQUIRED_FIELDS = ("name", "price", "image_urls")
LIST_FIELDS = ("links", "image_urls")
STRATEGIES = ("css-selector", "regex", "json-path")
POST_PROCESSORS = ("trim", "currency-parse", "absolute-url")


@dataclass(frozen=True)
class SelectorRule:
    field: str
    strategy: str  # css-selector | regex | json-path
    pattern: str
    post_process: tuple[str, ...] = ()

    def validate(self) -> None:
        if self.field not in PRODUCT_FIELDS:
            raise ValueError(f"unknown product field {self.field!r}")
        if self.strategy not in STRATEGIES:
            raise ValueError(f"unknown strategy {self.strategy!r}")
        for p in self.post_process:
            if p not in POST_PROCESSORS:
                raise ValueError(f"unknown post-processor {p!r}")
        if self.strategy == "css-selector":
            from snapforge.crawl.dom import parse_selector

            parse_selector(self.pattern)  # raises SelectorError
        elif self.strategy == "regex":
            re.compile(self.pattern)
        else:
            from snapforge.crawl.rules import parse_json_path

            parse_json_path(self.pattern)

    @staticmethod
    def from_dict(d: dict) -> "SelectorRule":
        return SelectorRule(
            field=d["field"],
            strategy=d["strategy"],
            pattern=d["pattern"],
            post_process=tuple(d.get("post_process", ())),
        )


@dataclass
class CrawlRequest:
    site_name: str
    seed_urls: list[str]
    url_include_patterns: list[str]
    extraction_rules: dict[str, SelectorRule]
    politeness_delay_ms: int = 200
    max_pages: int = 1000
    recrawl_interval_secs: float | None = None
    request_id: str = ""

    def validate(self) -> None:
        if not self.seed_urls:
            raise ValueError("seed_urls must be non-empty")
        if self.politeness_delay_ms < 0:
            raise ValueError("politeness_delay_ms must be >= 0")
        if self.max_pages < 1:
            raise ValueError("max_pages must be >= 1")
        for required in REQUIRED_FIELDS:
            if required not in self.extraction_rules:
                raise ValueError(f"missing extraction rule for required field {required!r}")
        for fname, rule in self.extraction_rules.items():
            if rule.field != fname:
                raise ValueError(f"rule under key {fname!r} declares field {rule.field!r}")
            rule.validate()

    @staticmethod
    def from_dict(d: dict) -> "CrawlRequest":
        return CrawlRequest(
            site_name=d["site_name"],
            seed_urls=list(d["seed_urls"]),
            url_include_patterns=list(d.get("url_include_patterns", ["*"])),
            extraction_rules={
                k: SelectorRule.from_dict(v) for k, v in d["extraction_rules"].items()
            },
            politeness_delay_ms=int(d.get("politeness_delay_ms", 200)),
            max_pages=int(d.get("max_pages", 1000)),
            recrawl_interval_secs=d.get("recrawl_interval_secs"),
        )


@dataclass
class ProductDoc:
    doc_id: str
    url: str
    site_name: str
    name: str | None
    price: Decimal | None
    currency: str | None
    brand: str | None
    description: str | None
    links: list[str] = field(default_factory=list)
    image_urls: list[str] = field(default_factory=list)
    crawl_time: float = 0.0
    incomplete: bool = False

    def validate(self) -> None:
        if self.price is not None and self.price < 0:
            raise ValueError(f"negative price {self.price} for {self.url}")

    def to_record(self) -> dict[str, Any]:
        """Flat JSON-safe mapping for the text index."""
        return {
            "doc_id": self.doc_id,
            "url": self.url,
            "site_name": self.site_name,
            "name": self.name,
            "price": str(self.price) if self.price is not None else None,
            "currency": self.currency,
            "brand": self.brand,
            "description": self.description,
            "links": list(self.links),
            "image_urls": list(self.image_urls),
            "crawl_time": self.crawl_time,
            "incomplete": self.incomplete,
        }


@dataclass
class FrontierEntry:
    url: str
    request_id: str
    status: str = "pending"  # pending | fetched | failed
    retry_count: int = 0
