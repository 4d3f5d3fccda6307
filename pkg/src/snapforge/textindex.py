"""Embedded full-text index with BM25 ranking and near-real-time commits.

Documents are flat mappings with a required ``doc_id`` key. Upserts are
buffered and become searchable only after :meth:`TextIndex.commit`, which
atomically swaps the visible generation. Scoring is BM25 (k1=1.2, b=0.75)
computed per field and summed with field weights:

    score(q, d) = sum_f w_f * sum_t idf_f(t) * tf * (k1+1) / (tf + k1 * (1 - b + b * dl_f / avgdl_f))
    idf_f(t)    = ln(1 + (N - df + 0.5) / (df + 0.5))

with N the committed doc count, df the per-field document frequency, dl_f
the document's token count in field f and avgdl_f the mean over committed
docs. Persistence is a JSON-lines write-ahead journal of upsert/commit
operations replayed on open.
"""

from __future__ import annotations

import json
import math
import os
import re
import threading
from collections import defaultdict
from typing import Any, Iterable, Mapping

BM25_K1 = 1.2
BM25_B = 0.75

DEFAULT_TEXT_FIELDS = {"name": 3.0, "brand": 2.0, "description": 1.0}
DEFAULT_FILTER_FIELDS = ("site_name", "brand", "currency")

_WORD = re.compile(r"[^\W_]+", re.UNICODE)


def analyze(text: str, stopwords: Iterable[str] = ()) -> list[str]:
    """Unicode-aware lowercase word tokens; no stemming."""
    if not text:
        return []
    stop = set(stopwords)
    return [t for t in _WORD.findall(text.lower()) if t not in stop]


class FilterFieldError(Exception):
    """Search filter names a field that is not filterable."""


class _Generation:
    """One committed, immutable view of the index."""

    def __init__(self, number: int) -> None:
        self.number = number
        self.docs: dict[str, dict[str, Any]] = {}
        # (field, term) -> {doc_id: term_frequency}
        self.postings: dict[tuple[str, str], dict[str, int]] = defaultdict(dict)
        # field -> {doc_id: token count}
        self.field_lengths: dict[str, dict[str, int]] = defaultdict(dict)


class TextIndex:
    """Single-writer full-text index; readers see the last committed generation."""

    def __init__(
        self,
        text_fields: Mapping[str, float] | None = None,
        filter_fields: Iterable[str] = DEFAULT_FILTER_FIELDS,
        stopwords: Iterable[str] = (),
        journal_path: str | None = None,
    ) -> None:
        self.text_fields = dict(text_fields or DEFAULT_TEXT_FIELDS)
        self.filter_fields = tuple(filter_fields)
        self.stopwords = tuple(stopwords)
        self._journal_path = journal_path
        self._journal_file = None
        self._pending: dict[str, dict[str, Any]] = {}
        self._live = _Generation(0)
        self._write_lock = threading.Lock()
        if journal_path:
            if os.path.exists(journal_path):
                self._replay(journal_path)
            os.makedirs(os.path.dirname(journal_path) or ".", exist_ok=True)
            self._journal_file = open(journal_path, "a", encoding="utf-8")

    # -- write path --------------------------------------------------------

    def upsert(self, record: Mapping[str, Any]) -> None:
        """Buffer a document; replaces any prior generation of the same doc_id."""
        doc = dict(record)
        doc_id = doc.get("doc_id")
        if not doc_id:
            raise ValueError("record requires a non-empty doc_id")
        with self._write_lock:
            self._pending[doc_id] = doc
            self._journal({"op": "upsert", "record": doc})

    def commit(self) -> int:
        """Make buffered upserts visible atomically; returns the new generation."""
        with self._write_lock:
            gen = _Generation(self._live.number + 1)
            gen.docs = dict(self._live.docs)
            gen.postings = defaultdict(dict, {k: dict(v) for k, v in self._live.postings.items()})
            gen.field_lengths = defaultdict(
                dict, {k: dict(v) for k, v in self._live.field_lengths.items()}
            )
            for doc_id, doc in self._pending.items():
                if doc_id in gen.docs:
                    self._unindex(gen, doc_id, gen.docs[doc_id])
                gen.docs[doc_id] = doc
                self._index(gen, doc_id, doc)
            self._pending.clear()
            self._journal({"op": "commit"})
            self._live = gen  # atomic swap under the GIL
            return gen.number

    def _index(self, gen: _Generation, doc_id: str, doc: Mapping[str, Any]) -> None:
        for fname in self.text_fields:
            tokens = analyze(str(doc.get(fname) or ""), self.stopwords)
            if not tokens:
                continue
            gen.field_lengths[fname][doc_id] = len(tokens)
            for tok in tokens:
                entry = gen.postings[(fname, tok)]
                entry[doc_id] = entry.get(doc_id, 0) + 1

    def _unindex(self, gen: _Generation, doc_id: str, doc: Mapping[str, Any]) -> None:
        for fname in self.text_fields:
            tokens = analyze(str(doc.get(fname) or ""), self.stopwords)
            gen.field_lengths[fname].pop(doc_id, None)
            for tok in set(tokens):
                entry = gen.postings.get((fname, tok))
                if entry:
                    entry.pop(doc_id, None)
                    if not entry:
                        del gen.postings[(fname, tok)]

    # -- read path ---------------------------------------------------------

    @property
    def generation(self) -> int:
        return self._live.number

    def count(self) -> int:
        return len(self._live.docs)

    def get(self, doc_id: str) -> dict[str, Any] | None:
        doc = self._live.docs.get(doc_id)
        return dict(doc) if doc is not None else None

    def all_doc_ids(self) -> list[str]:
        return sorted(self._live.docs)

    def known_values(self, field: str) -> set:
        """Distinct committed values of a filterable field."""
        if field not in self.filter_fields:
            raise FilterFieldError(f"field {field!r} is not filterable")
        return {d[field] for d in self._live.docs.values() if d.get(field) is not None}

    def search(
        self,
        query: str,
        fields: Mapping[str, float] | None = None,
        filters: Mapping[str, Any] | None = None,
        limit: int = 10,
    ) -> list[tuple[str, float]]:
        """Ranked (doc_id, BM25 score), descending; ties broken by doc_id."""
        if limit < 1:
            raise ValueError("limit must be >= 1")
        gen = self._live
        weights = dict(fields or self.text_fields)
        for f in filters or {}:
            if f not in self.filter_fields:
                raise FilterFieldError(f"field {f!r} is not filterable")
        terms = analyze(query, self.stopwords)
        if not terms or not gen.docs:
            return []
        n_docs = len(gen.docs)
        scores: dict[str, float] = defaultdict(float)
        for fname, weight in weights.items():
            lengths = gen.field_lengths.get(fname)
            if not lengths:
                continue
            avgdl = sum(lengths.values()) / len(lengths)
            for term in terms:
                entry = gen.postings.get((fname, term))
                if not entry:
                    continue
                df = len(entry)
                idf = math.log(1.0 + (n_docs - df + 0.5) / (df + 0.5))
                for doc_id, tf in entry.items():
                    dl = lengths[doc_id]
                    denom = tf + BM25_K1 * (1.0 - BM25_B + BM25_B * dl / avgdl)
                    scores[doc_id] += weight * idf * tf * (BM25_K1 + 1.0) / denom
        hits = []
        for doc_id, score in scores.items():
            doc = gen.docs[doc_id]
            if filters and any(doc.get(f) != v for f, v in filters.items()):
                continue
            hits.append((doc_id, score))
        hits.sort(key=lambda h: (-h[1], h[0]))
        return hits[:limit]

    # -- journal -----------------------------------------------------------

    def _journal(self, op: dict) -> None:
        if self._journal_file is not None:
            self._journal_file.write(json.dumps(op, ensure_ascii=False) + "\n")
            self._journal_file.flush()

    def _replay(self, path: str) -> None:
        with open(path, encoding="utf-8") as f:
            for line in f:
                line = line.strip()
                if not line:
                    continue
                op = json.loads(line)
                if op["op"] == "upsert":
                    doc = op["record"]
                    self._pending[doc["doc_id"]] = doc
                elif op["op"] == "commit":
                    gen = _Generation(self._live.number + 1)
                    gen.docs = self._live.docs
                    gen.postings = self._live.postings
                    gen.field_lengths = self._live.field_lengths
                    for doc_id, doc in self._pending.items():
                        if doc_id in gen.docs:
                            self._unindex(gen, doc_id, gen.docs[doc_id])
                        gen.docs[doc_id] = doc
                        self._index(gen, doc_id, doc)
                    self._pending.clear()
                    self._live = gen

    def close(self) -> None:
        if self._journal_file is not None:
            self._journal_file.close()
            self._journal_file = None
