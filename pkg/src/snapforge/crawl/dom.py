"""Minimal HTML DOM and CSS-selector subset for extraction rules.

Supported selector grammar (enough for product-page scraping):

    selector  = simple (" " simple)*          descendant combinator
    simple    = [tag] ("." class | "#" id | "[" attr ("=" value)? "]")*

with an optional trailing "::text" (default) or "::attr(name)" value
accessor. No commas, no child/sibling combinators, no pseudo-classes.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from html.parser import HTMLParser

VOID_TAGS = {
    "area", "base", "br", "col", "embed", "hr", "img", "input",
    "link", "meta", "param", "source", "track", "wbr",
}


class SelectorError(Exception):
    pass


@dataclass
class Element:
    tag: str
    attrs: dict[str, str]
    children: list = field(default_factory=list)  # Element | str
    parent: "Element | None" = None

    def text(self) -> str:
        parts: list[str] = []
        stack = list(reversed(self.children))
        while stack:
            node = stack.pop()
            if isinstance(node, str):
                parts.append(node)
            else:
                stack.extend(reversed(node.children))
        return "".join(parts)

    def classes(self) -> set[str]:
        return set((self.attrs.get("class") or "").split())

    def iter(self):
        """Pre-order document traversal."""
        yield self
        for child in self.children:
            if isinstance(child, Element):
                yield from child.iter()


class _TreeBuilder(HTMLParser):
    def __init__(self):
        super().__init__(convert_charrefs=True)
        self.root = Element("#document", {})
        self._stack = [self.root]

    def handle_starttag(self, tag, attrs):
        el = Element(tag, {k: (v or "") for k, v in attrs}, parent=self._stack[-1])
        self._stack[-1].children.append(el)
        if tag not in VOID_TAGS:
            self._stack.append(el)

    def handle_startendtag(self, tag, attrs):
        el = Element(tag, {k: (v or "") for k, v in attrs}, parent=self._stack[-1])
        self._stack[-1].children.append(el)

    def handle_endtag(self, tag):
        for i in range(len(self._stack) - 1, 0, -1):
            if self._stack[i].tag == tag:
                del self._stack[i:]
                break

    def handle_data(self, data):
        if data:
            self._stack[-1].children.append(data)


def parse_html(markup: str | bytes) -> Element:
    if isinstance(markup, bytes):
        markup = markup.decode("utf-8", errors="replace")
    builder = _TreeBuilder()
    builder.feed(markup)
    return builder.root


_SIMPLE = re.compile(
    r"""^(?P<tag>[\w-]+|\*)?
        (?P<quals>(?:\.[\w-]+|\#[\w-]+|\[[\w-]+(?:=[^\]]*)?\])*)$""",
    re.VERBOSE,
)
_QUAL = re.compile(r"\.(?P<cls>[\w-]+)|\#(?P<id>[\w-]+)|\[(?P<attr>[\w-]+)(?:=(?P<val>[^\]]*))?\]")


@dataclass(frozen=True)
class _Simple:
    tag: str | None
    classes: tuple[str, ...]
    id: str | None
    attr_checks: tuple[tuple[str, str | None], ...]

    def matches(self, el: Element) -> bool:
        if self.tag and self.tag != "*" and el.tag != self.tag:
            return False
        if self.id is not None and el.attrs.get("id") != self.id:
            return False
        if self.classes and not set(self.classes) <= el.classes():
            return False
        for attr, want in self.attr_checks:
            if attr not in el.attrs:
                return False
            if want is not None and el.attrs[attr] != want:
                return False
        return True


@dataclass(frozen=True)
class Selector:
    parts: tuple[_Simple, ...]
    accessor: str = "text"  # "text" | attribute name

    def matches(self, el: Element) -> bool:
        if not self.parts[-1].matches(el):
            return False
        node = el.parent
        remaining = len(self.parts) - 2
        while remaining >= 0 and node is not None:
            if self.parts[remaining].matches(node):
                remaining -= 1
            node = node.parent
        return remaining < 0

    def value(self, el: Element) -> str | None:
        if self.accessor == "text":
            return el.text()
        return el.attrs.get(self.accessor)


def parse_selector(pattern: str) -> Selector:
    pattern = pattern.strip()
    accessor = "text"
    if "::" in pattern:
        pattern, _, suffix = pattern.rpartition("::")
        suffix = suffix.strip()
        if suffix == "text":
            accessor = "text"
        elif suffix.startswith("attr(") and suffix.endswith(")"):
            accessor = suffix[5:-1].strip()
            if not accessor:
                raise SelectorError("empty attribute name in ::attr()")
        else:
            raise SelectorError(f"unknown accessor {suffix!r}")
    if not pattern:
        raise SelectorError("empty selector")
    simples = []
    for token in pattern.split():
        m = _SIMPLE.match(token)
        if not m or (not m.group("tag") and not m.group("quals")):
            raise SelectorError(f"cannot parse selector part {token!r}")
        classes, el_id, attr_checks = [], None, []
        for q in _QUAL.finditer(m.group("quals") or ""):
            if q.group("cls"):
                classes.append(q.group("cls"))
            elif q.group("id"):
                el_id = q.group("id")
            else:
                attr_checks.append((q.group("attr"), q.group("val")))
        simples.append(_Simple(m.group("tag"), tuple(classes), el_id, tuple(attr_checks)))
    return Selector(tuple(simples), accessor)


def select_all(root: Element, selector: Selector) -> list[Element]:
    return [el for el in root.iter() if el.tag != "#document" and selector.matches(el)]
