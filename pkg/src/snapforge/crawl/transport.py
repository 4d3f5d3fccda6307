"""Page transports: a deterministic fixture transport over a corpus
directory and a live HTTP client. Both return the same PageContent shape;
the fixture transport also records (host, timestamp) per fetch so tests can
assert politeness gaps.
"""

from __future__ import annotations

import mimetypes
import os
import re
import threading
from dataclasses import dataclass
from urllib.parse import urlsplit


class TransportError(Exception):
    def __init__(self, message: str, status: int | None = None, retryable: bool = True):
        super().__init__(message)
        self.status = status
        self.retryable = retryable


@dataclass(frozen=True)
class PageContent:
    url: str
    status: int
    content_type: str
    body: bytes
    fetch_time: float = 0.0


_SCRIPT_STYLE = re.compile(
    r"<(script|style)\b[^>]*>.*?</\1\s*>", re.IGNORECASE | re.DOTALL
)
_COMMENT = re.compile(r"<!--.*?-->", re.DOTALL)


def strip_noise(html_text: str) -> str:
    """Initial clearing: drop script/style elements and comments before the
    page flows to the extraction bolts."""
    return _COMMENT.sub("", _SCRIPT_STYLE.sub("", html_text))


class FixtureTransport:
    """Serves corpus/<host>/<path> files; empty path maps to index.html.

    A thread-safe fetch log of (host, clock timestamp) entries backs the
    politeness assertions.
    """

    def __init__(self, corpus_root: str, clock=None):
        self.corpus_root = corpus_root
        self.clock = clock
        self.fetch_log: list[tuple[str, float]] = []
        self._log_lock = threading.Lock()

    def _now(self) -> float:
        import time

        return self.clock.monotonic() if self.clock is not None else time.monotonic()

    def fetch(self, url: str) -> PageContent:
        parts = urlsplit(url)
        host = (parts.hostname or "").lower()
        now = self._now()
        with self._log_lock:
            self.fetch_log.append((host, now))
        site_dir = os.path.join(self.corpus_root, host)
        if not os.path.isdir(site_dir):
            raise TransportError(f"unknown fixture host {host!r}", status=404, retryable=False)
        rel = parts.path.lstrip("/") or "index.html"
        path = os.path.normpath(os.path.join(site_dir, rel))
        if not path.startswith(os.path.normpath(site_dir)):
            raise TransportError(f"path escape in {url!r}", status=400, retryable=False)
        if not os.path.isfile(path):
            raise TransportError(f"fixture file missing for {url!r}", status=404, retryable=False)
        with open(path, "rb") as f:
            body = f.read()
        ctype = mimetypes.guess_type(path)[0] or "application/octet-stream"
        return PageContent(url, 200, ctype, body, now)

    def gaps_by_host(self) -> dict[str, list[float]]:
        """Consecutive fetch-time gaps per host, in fetch order."""
        by_host: dict[str, list[float]] = {}
        with self._log_lock:
            log = list(self.fetch_log)
        for host, t in log:
            by_host.setdefault(host, []).append(t)
        return {
            host: [b - a for a, b in zip(times, times[1:])]
            for host, times in by_host.items()
        }


class HttpTransport:
    """Live transport over requests; 5xx and timeouts are retryable faults,
    4xx are permanent."""

    def __init__(self, timeout_secs: float = 15.0, user_agent: str = "snapforge/0.1"):
        self.timeout_secs = timeout_secs
        self.user_agent = user_agent

    def fetch(self, url: str) -> PageContent:
        import time

        import requests

        try:
            resp = requests.get(
                url, timeout=self.timeout_secs, headers={"User-Agent": self.user_agent}
            )
        except requests.RequestException as e:
            raise TransportError(f"request failed: {e}", retryable=True) from e
        if 400 <= resp.status_code < 500:
            raise TransportError(
                f"HTTP {resp.status_code} for {url}", status=resp.status_code, retryable=False
            )
        if resp.status_code >= 500:
            raise TransportError(
                f"HTTP {resp.status_code} for {url}", status=resp.status_code, retryable=True
            )
        ctype = resp.headers.get("Content-Type", "application/octet-stream").split(";")[0]
        return PageContent(url, resp.status_code, ctype, resp.content, time.monotonic())
