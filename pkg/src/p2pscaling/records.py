"""Packet records, capture ingestion and trace summaries.

Packets are normalized into :class:`PacketRecord` objects carrying a
direction relative to a set of monitored hosts. Two input formats are
supported: classic libpcap captures (Ethernet link type, either byte
order) and a canonical CSV format that doubles as the test-fixture format.
"""

from __future__ import annotations

import csv
import enum
import ipaddress
import logging
import struct
from dataclasses import dataclass, field
from functools import lru_cache
from pathlib import Path
from typing import Iterable, Iterator

logger = logging.getLogger(__name__)

CSV_COLUMNS = (
    "timestamp",
    "src_addr",
    "src_port",
    "dst_addr",
    "dst_port",
    "transport",
    "ip_total_len",
    "payload_len",
    "direction",
)

PCAP_MAGIC = 0xA1B2C3D4
LINKTYPE_ETHERNET = 1
ETHERTYPE_IPV4 = 0x0800
ETHERTYPE_VLAN = 0x8100
IPPROTO_TCP = 6
IPPROTO_UDP = 17


@lru_cache(maxsize=1 << 16)
def ip_to_int(addr: str) -> int:
    return int(ipaddress.IPv4Address(addr))


@lru_cache(maxsize=1 << 16)
def canonical_ip(addr: str) -> str:
    """Validated dotted-quad form of an IPv4 address."""
    return str(ipaddress.IPv4Address(addr.strip()))


class IngestError(ValueError):
    """Raised when an input file cannot be read as a trace."""


class Transport(str, enum.Enum):
    TCP = "TCP"
    UDP = "UDP"


class Direction(str, enum.Enum):
    UPLOAD = "Upload"
    DOWNLOAD = "Download"


@dataclass(frozen=True)
class PacketRecord:
    """One captured IPv4 packet seen from a monitored host.

    ``timestamp`` is in seconds relative to the start of the trace and
    ``ip_total_len`` is the IP total length, which is the packet size used
    for every threshold and byte count in the package.
    """

    timestamp: float
    src_addr: str
    src_port: int
    dst_addr: str
    dst_port: int
    transport: Transport
    ip_total_len: int
    payload_len: int
    direction: Direction

    def __post_init__(self):
        if self.payload_len < 0 or self.payload_len > self.ip_total_len:
            raise ValueError(
                f"payload_len {self.payload_len} outside [0, ip_total_len={self.ip_total_len}]"
            )
        for port in (self.src_port, self.dst_port):
            if not 0 <= port <= 65535:
                raise ValueError(f"port {port} out of range")
        if self.timestamp < 0:
            raise ValueError(f"negative timestamp {self.timestamp}")

    @property
    def remote_addr(self) -> str:
        """Address of the non-monitored endpoint."""
        return self.dst_addr if self.direction is Direction.UPLOAD else self.src_addr


@dataclass
class IngestStats:
    """Counters kept while reading a capture file."""

    total: int = 0
    emitted: int = 0
    truncated: int = 0
    non_ip: int = 0
    non_tcp_udp: int = 0
    third_party: int = 0

    @property
    def skipped(self) -> int:
        return self.truncated + self.non_ip + self.non_tcp_udp + self.third_party


@dataclass
class TraceSummary:
    """Byte shares per direction and transport, shaped like a trace summary table."""

    duration: float
    total_bytes: int
    upload_fraction: float
    download_fraction: float
    transport_fractions: dict = field(default_factory=dict)
    n_packets: int = 0

    @property
    def total_mb(self) -> float:
        return self.total_bytes / 2**20

    def to_dict(self) -> dict:
        return {
            "duration": self.duration,
            "total_bytes": self.total_bytes,
            "total_mb": self.total_mb,
            "n_packets": self.n_packets,
            "upload_fraction": self.upload_fraction,
            "download_fraction": self.download_fraction,
            "transport_fractions": {
                d: dict(t) for d, t in self.transport_fractions.items()
            },
        }


# ---------------------------------------------------------------------------
# pcap


def _pcap_header(fh) -> tuple[str, int, bool]:
    raw = fh.read(24)
    if len(raw) < 24:
        raise IngestError("malformed pcap: file header shorter than 24 bytes")
    for endian in ("<", ">"):
        (magic,) = struct.unpack(endian + "I", raw[:4])
        if magic == PCAP_MAGIC:
            break
        if magic == 0xA1B23C4D:
            # nanosecond variant of the classic format
            break
    else:
        raise IngestError(f"malformed pcap: bad magic 0x{raw[:4].hex()}")
    nano = magic == 0xA1B23C4D
    _, _, _, _, _, linktype = struct.unpack(endian + "HHiIII", raw[4:])
    if linktype != LINKTYPE_ETHERNET:
        raise IngestError(f"unsupported pcap link type {linktype} (need Ethernet)")
    return endian, linktype, nano


def _parse_frame(frame: bytes, stats: IngestStats):
    """Return (src, sport, dst, dport, transport, ip_len, payload_len) or None."""
    if len(frame) < 14:
        stats.truncated += 1
        return None
    (ethertype,) = struct.unpack("!H", frame[12:14])
    offset = 14
    while ethertype == ETHERTYPE_VLAN:
        if len(frame) < offset + 4:
            stats.truncated += 1
            return None
        (ethertype,) = struct.unpack("!H", frame[offset + 2 : offset + 4])
        offset += 4
    if ethertype != ETHERTYPE_IPV4:
        stats.non_ip += 1
        return None
    ip = frame[offset:]
    if len(ip) < 20:
        stats.truncated += 1
        return None
    version_ihl = ip[0]
    if version_ihl >> 4 != 4:
        stats.non_ip += 1
        return None
    ihl = (version_ihl & 0x0F) * 4
    total_len, = struct.unpack("!H", ip[2:4])
    proto = ip[9]
    src = ".".join(map(str, ip[12:16]))
    dst = ".".join(map(str, ip[16:20]))
    if proto == IPPROTO_TCP:
        if len(ip) < ihl + 20:
            stats.truncated += 1
            return None
        sport, dport = struct.unpack("!HH", ip[ihl : ihl + 4])
        header = (ip[ihl + 12] >> 4) * 4
        transport = Transport.TCP
    elif proto == IPPROTO_UDP:
        if len(ip) < ihl + 8:
            stats.truncated += 1
            return None
        sport, dport = struct.unpack("!HH", ip[ihl : ihl + 4])
        header = 8
        transport = Transport.UDP
    else:
        stats.non_tcp_udp += 1
        return None
    payload = max(total_len - ihl - header, 0)
    return src, sport, dst, dport, transport, total_len, payload


def _iter_pcap_raw(path, monitored: Iterable[str], stats: IngestStats | None):
    monitored = {str(ipaddress.IPv4Address(a)) for a in monitored}
    if not monitored:
        raise ValueError("monitored address set is empty")
    stats = stats if stats is not None else IngestStats()
    with open(path, "rb") as fh:
        endian, _, nano = _pcap_header(fh)
        tick = 1_000_000_000 if nano else 1_000_000
        while True:
            hdr = fh.read(16)
            if not hdr:
                break
            if len(hdr) < 16:
                stats.total += 1
                stats.truncated += 1
                break
            sec, frac, incl, _orig = struct.unpack(endian + "IIII", hdr)
            frame = fh.read(incl)
            stats.total += 1
            if len(frame) < incl:
                stats.truncated += 1
                break
            parsed = _parse_frame(frame, stats)
            if parsed is None:
                continue
            src, sport, dst, dport, transport, ip_len, payload = parsed
            if src in monitored:
                direction = Direction.UPLOAD
            elif dst in monitored:
                direction = Direction.DOWNLOAD
            else:
                stats.third_party += 1
                continue
            stats.emitted += 1
            yield (sec * 1_000_000 + (frac * 1_000_000) // tick,
                   (src, sport, dst, dport, transport, ip_len, payload, direction))


def _record(usec: int, fields) -> PacketRecord:
    src, sport, dst, dport, transport, ip_len, payload, direction = fields
    return PacketRecord(
        timestamp=usec / 1e6, src_addr=src, src_port=sport, dst_addr=dst, dst_port=dport,
        transport=transport, ip_total_len=ip_len, payload_len=payload, direction=direction,
    )


def iter_pcap(path, monitored: Iterable[str], stats: IngestStats | None = None) -> Iterator[PacketRecord]:
    """Yield records from a classic pcap file, in file order.

    Packets involving no monitored address, non-IPv4 frames and
    non-TCP/UDP packets are skipped and counted in ``stats``. Timestamps
    are rebased to the first accepted packet, so a capture that is not
    time-ordered should go through :func:`read_pcap` instead.
    """
    start = None
    for usec, fields in _iter_pcap_raw(path, monitored, stats):
        if start is None:
            start = usec
        if usec < start:
            raise IngestError(f"{path}: packet earlier than the first one; use read_pcap")
        yield _record(usec - start, fields)


def read_pcap(path, monitored: Iterable[str], stats: IngestStats | None = None) -> list[PacketRecord]:
    """Read a pcap file into timestamp-sorted records rebased to the earliest packet."""
    raw = list(_iter_pcap_raw(path, monitored, stats))
    if not raw:
        return []
    start = min(u for u, _ in raw)
    raw.sort(key=lambda item: item[0])
    return [_record(u - start, f) for u, f in raw]


def _build_frame(src: str, sport: int, dst: str, dport: int, transport: Transport,
                 ip_total_len: int) -> bytes:
    proto = IPPROTO_TCP if transport is Transport.TCP else IPPROTO_UDP
    thl = 20 if transport is Transport.TCP else 8
    if ip_total_len < 20 + thl:
        raise ValueError(f"ip_total_len {ip_total_len} too small for headers")
    ip = struct.pack(
        "!BBHHHBBH4s4s", 0x45, 0, ip_total_len, 0, 0, 64, proto, 0,
        ipaddress.IPv4Address(src).packed, ipaddress.IPv4Address(dst).packed,
    )
    if transport is Transport.TCP:
        l4 = struct.pack("!HHIIBBHHH", sport, dport, 0, 0, 5 << 4, 0x18, 65535, 0, 0)
    else:
        l4 = struct.pack("!HHHH", sport, dport, ip_total_len - 20, 0)
    payload = bytes(ip_total_len - 20 - thl)
    eth = b"\x00\x11\x22\x33\x44\x55" + b"\x66\x77\x88\x99\xaa\xbb" + struct.pack("!H", ETHERTYPE_IPV4)
    return eth + ip + l4 + payload


def write_pcap(path, records: Iterable[PacketRecord], big_endian: bool = False,
               epoch: float = 0.0) -> None:
    """Write records as a minimal Ethernet/IPv4 pcap file.

    Only header fields needed by :func:`read_pcap` are meaningful; payload
    bytes are zero. ``payload_len`` is implied by ``ip_total_len`` and the
    fixed header sizes (20-byte IP, 20-byte TCP, 8-byte UDP).
    """
    e = ">" if big_endian else "<"
    with open(path, "wb") as fh:
        fh.write(struct.pack(e + "IHHiIII", PCAP_MAGIC, 2, 4, 0, 0, 65535, LINKTYPE_ETHERNET))
        for r in records:
            frame = _build_frame(r.src_addr, r.src_port, r.dst_addr, r.dst_port,
                                 r.transport, r.ip_total_len)
            usec = round((epoch + r.timestamp) * 1e6)
            fh.write(struct.pack(e + "IIII", usec // 1_000_000, usec % 1_000_000,
                                 len(frame), len(frame)))
            fh.write(frame)


# ---------------------------------------------------------------------------
# canonical CSV


def _parse_row(row: dict, lineno: int) -> PacketRecord:
    try:
        return PacketRecord(
            timestamp=float(row["timestamp"]),
            src_addr=canonical_ip(row["src_addr"]),
            src_port=int(row["src_port"]),
            dst_addr=canonical_ip(row["dst_addr"]),
            dst_port=int(row["dst_port"]),
            transport=Transport(row["transport"].strip()),
            ip_total_len=int(row["ip_total_len"]),
            payload_len=int(row["payload_len"]),
            direction=Direction(row["direction"].strip()),
        )
    except (ValueError, TypeError, AttributeError, KeyError) as exc:
        raise IngestError(f"line {lineno}: {exc}") from exc


def iter_records_csv(path) -> Iterator[PacketRecord]:
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        missing = [c for c in CSV_COLUMNS if c not in (reader.fieldnames or ())]
        if missing:
            raise IngestError(f"line 1: missing column(s) {', '.join(missing)}")
        for lineno, row in enumerate(reader, start=2):
            if None in row.values() or None in row:
                raise IngestError(f"line {lineno}: wrong number of fields")
            yield _parse_row(row, lineno)


def read_records_csv(path) -> list[PacketRecord]:
    """Read canonical CSV records in file order."""
    return list(iter_records_csv(path))


def format_record(r: PacketRecord) -> list[str]:
    return [
        f"{r.timestamp:.6f}", r.src_addr, str(r.src_port), r.dst_addr, str(r.dst_port),
        r.transport.value, str(r.ip_total_len), str(r.payload_len), r.direction.value,
    ]


def write_records_csv(path, records: Iterable[PacketRecord]) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(CSV_COLUMNS)
        for r in records:
            writer.writerow(format_record(r))


def is_pcap(path) -> bool:
    with open(path, "rb") as fh:
        head = fh.read(4)
    return len(head) == 4 and (
        struct.unpack("<I", head)[0] in (PCAP_MAGIC, 0xA1B23C4D)
        or struct.unpack(">I", head)[0] in (PCAP_MAGIC, 0xA1B23C4D)
    )


def load_records(path, monitored: Iterable[str] | None = None) -> list[PacketRecord]:
    """Load a pcap or canonical CSV file, picking the reader by content."""
    path = Path(path)
    if not path.exists():
        raise IngestError(f"no such file: {path}")
    if is_pcap(path):
        if not monitored:
            raise IngestError("pcap input needs at least one monitored address")
        stats = IngestStats()
        records = read_pcap(path, monitored, stats)
        logger.info("read %d/%d packets from %s (%d skipped)", stats.emitted, stats.total,
                    path, stats.skipped)
        return records
    return read_records_csv(path)


# ---------------------------------------------------------------------------
# summaries


def summarize(records: Iterable[PacketRecord]) -> TraceSummary:
    """Duration and byte shares per direction and per transport."""
    lo = hi = None
    n = 0
    by = {(d, t): 0 for d in Direction for t in Transport}
    for r in records:
        n += 1
        lo = r.timestamp if lo is None else min(lo, r.timestamp)
        hi = r.timestamp if hi is None else max(hi, r.timestamp)
        by[r.direction, r.transport] += r.ip_total_len
    if n == 0:
        raise ValueError("empty trace")
    total = sum(by.values())
    if total == 0:
        raise ValueError("trace carries zero bytes")
    fractions = {
        d.value: {t.value: by[d, t] / total for t in Transport} for d in Direction
    }
    up = sum(by[Direction.UPLOAD, t] for t in Transport) / total
    return TraceSummary(
        duration=hi - lo,
        total_bytes=total,
        upload_fraction=up,
        download_fraction=1.0 - up,
        transport_fractions=fractions,
        n_packets=n,
    )
