import struct

import pytest
from hypothesis import given, settings, strategies as st

from p2pscaling.records import (Direction, IngestError, IngestStats, PacketRecord, Transport,
                                iter_pcap, load_records, read_pcap, read_records_csv,
                                summarize, write_pcap, write_records_csv)

from conftest import LOCAL, make_record

HEADER = "timestamp,src_addr,src_port,dst_addr,dst_port,transport,ip_total_len,payload_len,direction\n"


def test_csv_three_lines_in_order(tmp_path):
    path = tmp_path / "r.csv"
    path.write_text(HEADER
                    + "0.0,10.0.0.1,5000,192.0.2.1,80,TCP,1500,1460,Upload\n"
                    + "0.005,192.0.2.1,80,10.0.0.1,5000,TCP,40,0,Download\n"
                    + "0.025,192.0.2.1,80,10.0.0.1,5000,UDP,120,92,Download\n")
    recs = read_records_csv(path)
    assert [r.timestamp for r in recs] == [0.0, 0.005, 0.025]
    assert recs[0].direction is Direction.UPLOAD
    assert recs[1].payload_len == 0
    assert recs[2].transport is Transport.UDP


def test_csv_bad_transport_names_line(tmp_path):
    path = tmp_path / "r.csv"
    path.write_text(HEADER
                    + "0.0,10.0.0.1,5000,192.0.2.1,80,TCP,1500,1460,Upload\n"
                    + "0.1,10.0.0.1,5000,192.0.2.1,80,ICMP,84,0,Upload\n")
    with pytest.raises(IngestError, match="line 3"):
        read_records_csv(path)


def test_csv_missing_column(tmp_path):
    path = tmp_path / "r.csv"
    path.write_text("timestamp,src_addr\n0.0,10.0.0.1\n")
    with pytest.raises(IngestError):
        read_records_csv(path)


def test_record_rejects_payload_above_length():
    with pytest.raises(ValueError):
        PacketRecord(0.0, "10.0.0.1", 1, "10.0.0.2", 2, Transport.UDP, 100, 101, Direction.UPLOAD)


record_st = st.builds(
    make_record,
    t=st.integers(0, 10**9).map(lambda us: us / 1e6),
    size=st.integers(40, 1500),
    direction=st.sampled_from(["Upload", "Download"]),
    transport=st.sampled_from(["TCP", "UDP"]),
    remote=st.integers(0x0B000000, 0xDF000000).map(
        lambda n: ".".join(str((n >> s) & 255) for s in (24, 16, 8, 0))),
    lport=st.integers(0, 65535),
    rport=st.integers(0, 65535),
)


@settings(max_examples=50, deadline=None)
@given(st.lists(record_st, max_size=30))
def test_csv_round_trip(tmp_path_factory, records):
    path = tmp_path_factory.mktemp("rt") / "r.csv"
    write_records_csv(path, records)
    assert read_records_csv(path) == records


@pytest.mark.parametrize("big_endian", [False, True])
def test_pcap_single_udp_upload(tmp_path, big_endian):
    path = tmp_path / "one.pcap"
    write_pcap(path, [make_record(0.0, 120, "Upload", "UDP")], big_endian=big_endian)
    stats = IngestStats()
    recs = read_pcap(path, {LOCAL}, stats)
    assert len(recs) == 1
    r = recs[0]
    assert r.direction is Direction.UPLOAD
    assert r.ip_total_len == 120
    assert r.payload_len == 120 - 28
    assert stats.total == 1 and stats.emitted == 1 and stats.skipped == 0


def test_pcap_header_only(tmp_path):
    path = tmp_path / "empty.pcap"
    write_pcap(path, [])
    stats = IngestStats()
    assert read_pcap(path, {LOCAL}, stats) == []
    assert stats == IngestStats()


def test_pcap_bad_magic(tmp_path):
    path = tmp_path / "bad.pcap"
    path.write_bytes(b"\x00" * 24)
    with pytest.raises(IngestError):
        read_pcap(path, {LOCAL})


def test_pcap_empty_monitored_set(tmp_path):
    path = tmp_path / "e.pcap"
    write_pcap(path, [])
    with pytest.raises(ValueError):
        read_pcap(path, set())


def test_pcap_round_trip_rebased(tmp_path):
    recs = [make_record(t, s, d, tr) for t, s, d, tr in [
        (0.0, 1500, "Download", "TCP"), (0.5, 40, "Upload", "TCP"), (1.25, 300, "Download", "UDP")]]
    path = tmp_path / "rt.pcap"
    write_pcap(path, recs, epoch=1_150_000_000)
    assert read_pcap(path, {LOCAL}) == recs


def test_pcap_unordered_capture_rebased_to_earliest(tmp_path):
    recs = [make_record(2.0), make_record(1.0), make_record(3.0)]
    path = tmp_path / "u.pcap"
    write_pcap(path, recs)
    out = read_pcap(path, {LOCAL})
    assert [r.timestamp for r in out] == [0.0, 1.0, 2.0]
    with pytest.raises(IngestError):
        list(iter_pcap(path, {LOCAL}))


def _append_frame(path, frame, ts=1):
    with open(path, "ab") as fh:
        fh.write(struct.pack("<IIII", ts, 0, len(frame), len(frame)) + frame)


def test_pcap_skips_and_counts(tmp_path):
    path = tmp_path / "mix.pcap"
    write_pcap(path, [make_record(0.0, 200, "Upload"),
                      make_record(0.1, 200, "Download", remote="192.0.2.9")])
    eth = b"\x00" * 12
    # ARP frame
    _append_frame(path, eth + b"\x08\x06" + b"\x00" * 28)
    # ICMP packet from the monitored host
    ip = struct.pack("!BBHHHBBH4s4s", 0x45, 0, 28, 0, 0, 64, 1, 0,
                     bytes([10, 0, 0, 1]), bytes([192, 0, 2, 1]))
    _append_frame(path, eth + b"\x08\x00" + ip + b"\x00" * 8)
    stats = IngestStats()
    recs = read_pcap(path, {LOCAL}, stats)
    assert len(recs) == 2
    assert stats.non_ip == 1 and stats.non_tcp_udp == 1
    assert stats.emitted + stats.skipped == stats.total == 4

    stats = IngestStats()
    assert read_pcap(path, {"10.9.9.9"}, stats) == []
    assert stats.third_party == 2


def test_pcap_truncated_record(tmp_path):
    path = tmp_path / "t.pcap"
    write_pcap(path, [make_record(0.0, 200, "Upload")])
    with open(path, "ab") as fh:
        fh.write(struct.pack("<IIII", 1, 0, 100, 100) + b"\x00" * 10)
    stats = IngestStats()
    assert len(read_pcap(path, {LOCAL}, stats)) == 1
    assert stats.truncated == 1


def test_load_records_dispatches(tmp_path):
    recs = [make_record(0.0), make_record(0.2, 80, "Upload")]
    write_pcap(tmp_path / "a.pcap", recs)
    write_records_csv(tmp_path / "a.csv", recs)
    assert load_records(tmp_path / "a.pcap", [LOCAL]) == load_records(tmp_path / "a.csv")
    with pytest.raises(IngestError):
        load_records(tmp_path / "a.pcap")
    with pytest.raises(IngestError):
        load_records(tmp_path / "missing.csv")


def test_summarize_two_packets():
    s = summarize([make_record(0.0, 1000, "Upload", "TCP"),
                   make_record(10.0, 1000, "Download", "UDP")])
    assert s.duration == 10
    assert s.upload_fraction == 0.5 and s.download_fraction == 0.5
    assert s.transport_fractions["Upload"] == {"TCP": 0.5, "UDP": 0.0}
    assert s.transport_fractions["Download"] == {"TCP": 0.0, "UDP": 0.5}


def test_summarize_all_upload():
    s = summarize([make_record(t, 500, "Upload") for t in (0.0, 1.0, 2.0)])
    assert s.download_fraction == 0


def test_summarize_empty():
    with pytest.raises(ValueError, match="empty trace"):
        summarize([])


@settings(max_examples=50, deadline=None)
@given(st.lists(record_st, min_size=1, max_size=30), st.randoms(use_true_random=False))
def test_summarize_invariants(records, rnd):
    s = summarize(records)
    assert abs(s.upload_fraction + s.download_fraction - 1) <= 1e-9
    for d, frac in (("Upload", s.upload_fraction), ("Download", s.download_fraction)):
        assert abs(sum(s.transport_fractions[d].values()) - frac) <= 1e-9
    shuffled = list(records)
    rnd.shuffle(shuffled)
    p = summarize(shuffled)
    assert (p.total_bytes, p.duration) == (s.total_bytes, s.duration)
    assert p.transport_fractions == s.transport_fractions
