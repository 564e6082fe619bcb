"""Per-peer download volumes and per-flow record extraction.

A flow is everything a single remote address sent to the monitored
hosts, pooled over its ports and sessions.
"""

from __future__ import annotations

import ipaddress
from dataclasses import dataclass

from .records import Direction, PacketRecord
from .sessions import MB, video_mask


@dataclass(frozen=True)
class FlowSummary:
    remote_addr: str
    bytes: int
    packets: int
    video_bytes: int
    video_packets: int

    @property
    def signaling_packets(self) -> int:
        return self.packets - self.video_packets

    @property
    def signaling_bytes(self) -> int:
        return self.bytes - self.video_bytes

    @property
    def mb(self) -> float:
        return self.bytes / MB

    @property
    def video_mb(self) -> float:
        return self.video_bytes / MB


def rank_download_flows(records, labels) -> list[FlowSummary]:
    """Download flows sorted by bytes, largest first; ties go to the lower address."""
    downloads = [r for r in records if r.direction is Direction.DOWNLOAD]
    if not downloads:
        raise ValueError("no download records")
    mask = video_mask(downloads, labels)
    acc: dict[str, list[int]] = {}
    for r, is_video in zip(downloads, mask):
        a = acc.setdefault(r.src_addr, [0, 0, 0, 0])
        a[0] += r.ip_total_len
        a[1] += 1
        if is_video:
            a[2] += r.ip_total_len
            a[3] += 1
    flows = [FlowSummary(addr, *vals) for addr, vals in acc.items()]
    flows.sort(key=lambda f: (-f.bytes, int(ipaddress.IPv4Address(f.remote_addr))))
    return flows


def flow_records(records, remote_addr: str) -> list[PacketRecord]:
    """Download records sent by ``remote_addr``, in input order."""
    remote_addr = str(ipaddress.IPv4Address(remote_addr))
    out = [r for r in records if r.direction is Direction.DOWNLOAD and r.src_addr == remote_addr]
    if not out:
        raise KeyError(f"no download records from {remote_addr}")
    return out


def nth_flow(flows: list[FlowSummary], n: int) -> FlowSummary:
    """The flow ranked ``n`` (1-based)."""
    if not 1 <= n <= len(flows):
        raise IndexError(f"rank {n} outside 1..{len(flows)}")
    return flows[n - 1]
