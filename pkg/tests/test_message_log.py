"""Message log: partitioning, offsets, consumer groups, snapshot format."""

import struct

import pytest

from snapforge.messagelog import MessageLog, OffsetError, TopicError, fnv1a64


@pytest.fixture
def log():
    return MessageLog()


class TestTopics:
    def test_create(self, log):
        log.create_topic("image-urls", 4)
        assert log.partition_count("image-urls") == 4
        assert log.end_offsets("image-urls") == [0, 0, 0, 0]

    def test_duplicate_rejected(self, log):
        log.create_topic("image-urls", 4)
        with pytest.raises(TopicError):
            log.create_topic("image-urls", 4)

    def test_zero_partitions_rejected(self, log):
        with pytest.raises(TopicError):
            log.create_topic("x", 0)

    def test_unknown_topic(self, log):
        with pytest.raises(TopicError):
            log.produce("nope", b"x")
        with pytest.raises(TopicError):
            log.poll("g", "nope", 1)


class TestProduce:
    def test_keyless_offsets_consecutive(self, log):
        log.create_topic("t", 1)
        offsets = [log.produce("t", bytes([i]))[1] for i in range(3)]
        assert offsets == [0, 1, 2]

    def test_same_key_same_partition(self, log):
        log.create_topic("t", 4)
        p1, _ = log.produce("t", b"a", key=b"doc-42")
        p2, _ = log.produce("t", b"b", key=b"doc-42")
        assert p1 == p2

    def test_round_robin_exact(self, log):
        # 10^4 keyless produces over 4 partitions land 2500 in each
        log.create_topic("t", 4)
        for i in range(10_000):
            log.produce("t", b"")
        assert log.end_offsets("t") == [2500, 2500, 2500, 2500]

    def test_key_placement_matches_hash(self, log):
        log.create_topic("t", 4)
        part, _ = log.produce("t", b"x", key=b"hello")
        assert part == fnv1a64(b"hello") % 4


class TestConsumerGroups:
    def test_fresh_group_reads_from_zero(self, log):
        log.create_topic("t", 1)
        log.produce("t", b"r0")
        log.produce("t", b"r1")
        recs = log.poll("g1", "t", 10)
        assert [r.payload for r in recs] == [b"r0", b"r1"]

    def test_committed_group_skips(self, log):
        log.create_topic("t", 1)
        log.produce("t", b"r0")
        log.produce("t", b"r1")
        log.commit("g1", "t", 0, 1)
        recs = log.poll("g1", "t", 10)
        assert [r.payload for r in recs] == [b"r1"]

    def test_empty_topic(self, log):
        log.create_topic("t", 2)
        assert log.poll("g", "t", 5) == []

    def test_poll_does_not_advance(self, log):
        log.create_topic("t", 1)
        log.produce("t", b"r0")
        assert len(log.poll("g", "t", 5)) == 1
        assert len(log.poll("g", "t", 5)) == 1  # same records again

    def test_rewind_replays(self, log):
        log.create_topic("t", 1)
        log.produce("t", b"r0")
        log.produce("t", b"r1")
        log.commit("g", "t", 0, 2)
        assert log.poll("g", "t", 5) == []
        log.commit("g", "t", 0, 0)
        assert len(log.poll("g", "t", 5)) == 2

    def test_commit_beyond_end_rejected(self, log):
        log.create_topic("t", 1)
        log.produce("t", b"r0")
        log.produce("t", b"r1")
        with pytest.raises(OffsetError):
            log.commit("g", "t", 0, 5)

    def test_groups_independent(self, log):
        log.create_topic("t", 1)
        for i in range(4):
            log.produce("t", bytes([i]))
        log.commit("fast", "t", 0, 4)
        assert log.poll("fast", "t", 10) == []
        assert len(log.poll("slow", "t", 10)) == 4


class TestReplayDeterminism:
    def test_two_groups_identical_sequences(self, log):
        # acceptance-scale check lives in test_acceptance; this is the small twin
        log.create_topic("t", 4)
        for i in range(200):
            key = f"k{i % 17}".encode() if i % 3 else None
            log.produce("t", f"payload-{i}".encode(), key=key)
        a = [(r.partition, r.offset, r.payload) for r in log.poll("a", "t", 10_000)]
        b = [(r.partition, r.offset, r.payload) for r in log.poll("b", "t", 10_000)]
        assert a == b

    def test_per_partition_fifo(self, log):
        log.create_topic("t", 4)
        for i in range(100):
            log.produce("t", bytes([i % 256]), key=str(i % 7).encode())
        seen = {}
        for r in log.poll("g", "t", 1000):
            last = seen.get(r.partition, -1)
            assert r.offset == last + 1
            seen[r.partition] = r.offset


class TestSnapshot:
    def test_round_trip(self, log, tmp_path):
        log.create_topic("t", 2)
        log.produce("t", b"hello", key=b"k1")
        log.produce("t", b"world")
        log.produce("t", b"\x00\xffbin", key=b"k2")
        log.snapshot(str(tmp_path))
        fresh = MessageLog()
        fresh.load_snapshot(str(tmp_path))
        orig = [(r.partition, r.offset, r.key, r.payload) for r in log.poll("g", "t", 100)]
        back = [(r.partition, r.offset, r.key, r.payload) for r in fresh.poll("g", "t", 100)]
        assert orig == back

    def test_wire_format(self, log, tmp_path):
        # [u32 payload_len][u32 key_len][key][payload], little-endian
        log.create_topic("t", 1)
        log.produce("t", b"payload", key=b"key")
        log.snapshot(str(tmp_path))
        raw = (tmp_path / "t-0.log").read_bytes()
        plen, klen = struct.unpack_from("<II", raw, 0)
        assert (plen, klen) == (7, 3)
        assert raw[8:11] == b"key"
        assert raw[11:18] == b"payload"
