"""URL canonicalization, host partitioning, and product-link discovery.

Canonical form: scheme and host lowercased, default port stripped, fragment
removed, query string preserved (product variants often live there). The
host key used for politeness routing is the full lowercased hostname.
"""

from __future__ import annotations

import fnmatch
import re
from html.parser import HTMLParser
from urllib.parse import urljoin, urlsplit, urlunsplit

from snapforge.messagelog import fnv1a64

DEFAULT_PORTS = {"http": 80, "https": 443}


class InvalidUrlError(Exception):
    pass


def canonicalize_url(url: str) -> str:
    parts = urlsplit(url.strip())
    scheme = parts.scheme.lower()
    if scheme not in ("http", "https"):
        raise InvalidUrlError(f"unsupported or missing scheme in {url!r}")
    if not parts.hostname:
        raise InvalidUrlError(f"no host in {url!r}")
    host = parts.hostname.lower()
    port = parts.port
    netloc = host if port in (None, DEFAULT_PORTS[scheme]) else f"{host}:{port}"
    path = parts.path or "/"
    return urlunsplit((scheme, netloc, path, parts.query, ""))


def url_partition(url: str) -> tuple[str, str]:
    """(host key, canonical url); the host key is the fields-grouping value
    that pins all of one host's fetches to a single task."""
    canonical = canonicalize_url(url)
    return urlsplit(canonical).hostname, canonical


def doc_id_for(url: str) -> str:
    """Stable document id: FNV-1a of the canonical URL, hex."""
    return f"{fnv1a64(canonicalize_url(url).encode('utf-8')):016x}"


class _AnchorCollector(HTMLParser):
    def __init__(self):
        super().__init__(convert_charrefs=True)
        self.hrefs: list[str] = []

    def handle_starttag(self, tag, attrs):
        if tag == "a":
            for name, value in attrs:
                if name == "href" and value:
                    self.hrefs.append(value)


def _matches(canonical: str, patterns) -> bool:
    path_q = urlsplit(canonical).path
    for pattern in patterns:
        if pattern.startswith("re:"):
            if re.search(pattern[3:], canonical):
                return True
        elif "://" in pattern:
            if fnmatch.fnmatch(canonical, pattern):
                return True
        elif fnmatch.fnmatch(path_q, pattern):
            return True
    return False


def discover_product_urls(page_content: str | bytes, include_patterns, base_url: str) -> list[str]:
    """All anchor hrefs resolved against base_url, canonicalized, deduplicated
    in first-seen order, and filtered by the include patterns (glob on the
    path, glob on the full URL when the pattern carries a scheme, or regex
    with an ``re:`` prefix). Unparseable markup yields an empty list."""
    if isinstance(page_content, bytes):
        page_content = page_content.decode("utf-8", errors="replace")
    collector = _AnchorCollector()
    try:
        collector.feed(page_content)
    except Exception:
        return []
    seen: set[str] = set()
    out: list[str] = []
    for href in collector.hrefs:
        try:
            canonical = canonicalize_url(urljoin(base_url, href))
        except InvalidUrlError:
            continue
        if canonical in seen:
            continue
        seen.add(canonical)
        if _matches(canonical, include_patterns):
            out.append(canonical)
    return out
