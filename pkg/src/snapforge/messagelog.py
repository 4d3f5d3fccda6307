"""Embedded partitioned append-only message log.

Decouples the crawler subsystem from image analytics: producers append
records to topic partitions, consumer groups track their own committed
offsets and replay independently. Partitions are in-memory lists of
immutable records; an optional snapshot writes one length-prefixed binary
file per partition.
"""

from __future__ import annotations

import os
import struct
import threading
import time
from dataclasses import dataclass, field

FNV1A_OFFSET = 0xCBF29CE484222325
FNV1A_PRIME = 0x100000001B3


def fnv1a64(data: bytes) -> int:
    """64-bit FNV-1a hash, fixed forever for cross-run determinism."""
    h = FNV1A_OFFSET
    for b in data:
        h ^= b
        h = (h * FNV1A_PRIME) & 0xFFFFFFFFFFFFFFFF
    return h


class TopicError(Exception):
    """Unknown/duplicate topic or invalid partition configuration."""


class OffsetError(Exception):
    """Commit offset beyond the partition end."""


@dataclass(frozen=True)
class Record:
    """One appended message; (topic, partition, offset) is its identity."""

    topic: str
    partition: int
    offset: int
    key: bytes | None
    payload: bytes
    append_time: float


@dataclass
class _Topic:
    name: str
    partitions: list[list[Record]]
    round_robin: int = 0
    lock: threading.Lock = field(default_factory=threading.Lock)


class MessageLog:
    """In-process message broker with topics, partitions and consumer groups.

    Appends to a single partition are serialized by the topic lock; polls
    read already-appended immutable records without locking; per-group
    commit state is guarded for exclusive update.
    """

    def __init__(self) -> None:
        self._topics: dict[str, _Topic] = {}
        self._groups: dict[str, dict[tuple[str, int], int]] = {}
        self._lock = threading.Lock()

    def create_topic(self, name: str, partitions: int) -> None:
        if partitions < 1:
            raise TopicError(f"partition count must be >= 1, got {partitions}")
        with self._lock:
            if name in self._topics:
                raise TopicError(f"topic {name!r} already exists")
            self._topics[name] = _Topic(name, [[] for _ in range(partitions)])

    def topics(self) -> list[str]:
        return sorted(self._topics)

    def _topic(self, name: str) -> _Topic:
        try:
            return self._topics[name]
        except KeyError:
            raise TopicError(f"unknown topic {name!r}") from None

    def partition_count(self, topic: str) -> int:
        return len(self._topic(topic).partitions)

    def end_offsets(self, topic: str) -> list[int]:
        """Next offset to be written, per partition."""
        return [len(p) for p in self._topic(topic).partitions]

    def produce(self, topic: str, payload: bytes, key: bytes | None = None) -> tuple[int, int]:
        """Append a record; returns (partition, offset).

        Keyed records go to fnv1a64(key) mod partitions so equal keys always
        share a partition; keyless records round-robin.
        """
        t = self._topic(topic)
        with t.lock:
            if key is not None:
                part = fnv1a64(key) % len(t.partitions)
            else:
                part = t.round_robin % len(t.partitions)
                t.round_robin += 1
            plist = t.partitions[part]
            rec = Record(topic, part, len(plist), key, payload, time.time())
            plist.append(rec)
            return part, rec.offset

    def committed(self, group_id: str, topic: str, partition: int) -> int:
        return self._groups.get(group_id, {}).get((topic, partition), 0)

    def poll(self, group_id: str, topic: str, max_records: int) -> list[Record]:
        """Read up to max_records at/after the group's committed offsets.

        Does not advance commit state: re-polling after a crash replays the
        same records (at-least-once).
        """
        t = self._topic(topic)
        out: list[Record] = []
        for part, plist in enumerate(t.partitions):
            start = self.committed(group_id, topic, part)
            end = len(plist)  # snapshot length; later appends not visible this poll
            for off in range(start, end):
                if len(out) >= max_records:
                    return out
                out.append(plist[off])
        return out

    def commit(self, group_id: str, topic: str, partition: int, next_offset: int) -> None:
        t = self._topic(topic)
        if not 0 <= partition < len(t.partitions):
            raise OffsetError(f"partition {partition} out of range for {topic!r}")
        if next_offset > len(t.partitions[partition]):
            raise OffsetError(
                f"commit {next_offset} beyond end {len(t.partitions[partition])} "
                f"of {topic!r}[{partition}]"
            )
        with self._lock:
            self._groups.setdefault(group_id, {})[(topic, partition)] = next_offset

    # -- snapshot persistence --------------------------------------------

    def snapshot(self, log_dir: str) -> None:
        """Write each partition to <topic>-<partition>.log.

        Record wire format, little-endian:
        [u32 payload_len][u32 key_len][key][payload]. A key_len of 0 stores
        a keyless record (empty keys are not distinguished).
        """
        os.makedirs(log_dir, exist_ok=True)
        for t in self._topics.values():
            for part, plist in enumerate(t.partitions):
                path = os.path.join(log_dir, f"{t.name}-{part}.log")
                with open(path, "wb") as f:
                    for rec in plist:
                        key = rec.key or b""
                        f.write(struct.pack("<II", len(rec.payload), len(key)))
                        f.write(key)
                        f.write(rec.payload)

    def load_snapshot(self, log_dir: str) -> None:
        """Recreate topics from snapshot files; offsets are re-assigned 0..n."""
        by_topic: dict[str, list[tuple[int, str]]] = {}
        for fname in os.listdir(log_dir):
            if not fname.endswith(".log"):
                continue
            stem = fname[: -len(".log")]
            topic, _, part = stem.rpartition("-")
            if not topic or not part.isdigit():
                continue
            by_topic.setdefault(topic, []).append((int(part), os.path.join(log_dir, fname)))
        for topic, parts in by_topic.items():
            parts.sort()
            self.create_topic(topic, len(parts))
            t = self._topics[topic]
            for part, path in parts:
                with open(path, "rb") as f:
                    data = f.read()
                pos = 0
                plist = t.partitions[part]
                while pos < len(data):
                    payload_len, key_len = struct.unpack_from("<II", data, pos)
                    pos += 8
                    key = data[pos : pos + key_len] if key_len else None
                    pos += key_len
                    payload = data[pos : pos + payload_len]
                    pos += payload_len
                    plist.append(Record(topic, part, len(plist), key, payload, time.time()))
