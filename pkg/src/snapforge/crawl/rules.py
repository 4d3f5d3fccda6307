"""Field extraction: CSS-selector / regex / json-path strategies plus the
trim, currency-parse, and absolute-url post-processors.

Scalar fields take the first match; the list-valued fields (links,
image_urls) collect every match. Price parsing accepts western and
Persian/Arabic digits and digit-group separators and maps a recognized
currency marker to its ISO code.
"""

from __future__ import annotations

import json
import re
from decimal import Decimal, InvalidOperation
from urllib.parse import urljoin

from snapforge.crawl.dom import parse_html, parse_selector, select_all
from snapforge.crawl.types import LIST_FIELDS, SelectorRule
from snapforge.crawl.urls import InvalidUrlError, canonicalize_url


class RuleError(Exception):
    pass


_DIGIT_TRANSLATION = str.maketrans("۰۱۲۳۴۵۶۷۸۹٠١٢٣٤٥٦٧٨٩", "01234567890123456789")
_GROUP_SEPARATORS = str.maketrans("", "", ",٬' ")
_NUMBER = re.compile(r"\d[\d,٬'\s]*(?:\.\d+)?")

CURRENCY_MARKERS = (
    ("ریال", "IRR"),
    ("تومان", "IRR"),
    ("rial", "IRR"),
    ("toman", "IRR"),
    ("irr", "IRR"),
    ("usd", "USD"),
    ("$", "USD"),
    ("eur", "EUR"),
    ("€", "EUR"),
    ("gbp", "GBP"),
    ("£", "GBP"),
)


def parse_price(text: str) -> tuple[Decimal, str | None]:
    """"1,250,000 ریال" -> (Decimal('1250000'), 'IRR')."""
    normalized = text.translate(_DIGIT_TRANSLATION)
    currency = None
    lowered = normalized.lower()
    for marker, code in CURRENCY_MARKERS:
        if marker in lowered:
            currency = code
            break
    m = _NUMBER.search(normalized)
    if not m:
        raise RuleError(f"no numeric value in price text {text!r}")
    digits = m.group(0).translate(_GROUP_SEPARATORS)
    try:
        value = Decimal(digits)
    except InvalidOperation as e:
        raise RuleError(f"unparseable price {text!r}") from e
    return value, currency


def parse_json_path(pattern: str) -> list:
    """Dotted path with optional [index] steps, e.g. "product.images[0].url"."""
    steps: list = []
    for part in pattern.split("."):
        m = re.fullmatch(r"([\w-]*)((?:\[\d+\])*)", part)
        if not m or (not m.group(1) and not m.group(2)):
            raise RuleError(f"bad json-path step {part!r}")
        if m.group(1):
            steps.append(m.group(1))
        for idx in re.findall(r"\[(\d+)\]", m.group(2)):
            steps.append(int(idx))
    if not steps:
        raise RuleError("empty json-path")
    return steps


def _walk_json(doc, steps):
    node = doc
    for step in steps:
        try:
            node = node[step]
        except (KeyError, IndexError, TypeError):
            return None
    return node


def _raw_matches(body: str, rule: SelectorRule, want_list: bool) -> list[str]:
    if rule.strategy == "css-selector":
        selector = parse_selector(rule.pattern)
        elements = select_all(parse_html(body), selector)
        values = [v for el in elements if (v := selector.value(el)) is not None]
    elif rule.strategy == "regex":
        rx = re.compile(rule.pattern)
        values = []
        for m in rx.finditer(body):
            values.append(m.group(1) if rx.groups else m.group(0))
    else:  # json-path
        steps = parse_json_path(rule.pattern)
        try:
            doc = json.loads(body)
        except json.JSONDecodeError:
            return []
        node = _walk_json(doc, steps)
        if node is None:
            values = []
        elif isinstance(node, list):
            values = [str(v) for v in node]
        else:
            values = [str(node)]
    return values if want_list else values[:1]


def extract_field(body: str | bytes, rule: SelectorRule, base_url: str = ""):
    """Apply one rule to page content.

    Returns None (scalar) or [] (list field) when nothing matches; a scalar
    string/ (Decimal, currency) for price; a list of strings for list fields.
    """
    if isinstance(body, bytes):
        body = body.decode("utf-8", errors="replace")
    want_list = rule.field in LIST_FIELDS
    values = _raw_matches(body, rule, want_list)
    processed = []
    for value in values:
        for post in rule.post_process:
            if value is None:
                break
            if post == "trim":
                value = value.strip()
            elif post == "currency-parse":
                value = parse_price(value)
            elif post == "absolute-url":
                try:
                    value = canonicalize_url(urljoin(base_url, value.strip()))
                except InvalidUrlError:
                    value = None
        if value is not None:
            processed.append(value)
    if rule.field == "price" and processed and not isinstance(processed[0], tuple):
        processed[0] = parse_price(str(processed[0]))  # implicit for price fields
    if want_list:
        return processed
    return processed[0] if processed else None
