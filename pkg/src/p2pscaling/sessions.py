"""Session grouping, the large-packet video heuristic, and signaling accounting."""

from __future__ import annotations

import ipaddress
from collections import defaultdict
from dataclasses import dataclass
from functools import lru_cache
from typing import Iterable, Mapping

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from .records import Direction, PacketRecord, Transport, ip_to_int

LARGE_PACKET_BYTES = 1000
MIN_LARGE_PACKETS = 10
KBPS = 1024  # bit/s per Kbps
MB = 2**20


@dataclass(frozen=True, order=True)
class SessionKey:
    """Direction-agnostic conversation identity.

    The endpoint that sorts first as (numeric address, port) is ``lo``.
    """

    addr_lo: int
    port_lo: int
    addr_hi: int
    port_hi: int
    transport: str

    def __str__(self):
        return (f"{ipaddress.IPv4Address(self.addr_lo)}:{self.port_lo}-"
                f"{ipaddress.IPv4Address(self.addr_hi)}:{self.port_hi}/{self.transport}")

    def to_dict(self) -> dict:
        return {
            "addr_lo": str(ipaddress.IPv4Address(self.addr_lo)), "port_lo": self.port_lo,
            "addr_hi": str(ipaddress.IPv4Address(self.addr_hi)), "port_hi": self.port_hi,
            "transport": self.transport,
        }


@lru_cache(maxsize=1 << 16)
def session_key(a: str, pa: int, b: str, pb: int, transport) -> SessionKey:
    ea = (ip_to_int(a), int(pa))
    eb = (ip_to_int(b), int(pb))
    lo, hi = (ea, eb) if ea <= eb else (eb, ea)
    return SessionKey(lo[0], lo[1], hi[0], hi[1], Transport(transport).value)


def key_of(r: PacketRecord) -> SessionKey:
    return session_key(r.src_addr, r.src_port, r.dst_addr, r.dst_port, r.transport)


@dataclass(frozen=True)
class SessionLabel:
    key: SessionKey
    large_packet_count: int
    is_video: bool
    bytes: int = 0
    packets: int = 0

    def to_dict(self) -> dict:
        return {"key": str(self.key), "large_packet_count": self.large_packet_count,
                "is_video": self.is_video, "bytes": self.bytes, "packets": self.packets}


@dataclass
class SignalingReport:
    """Signaling byte ratios; ``None`` marks a direction without traffic."""

    total_ratio: float | None
    upload_ratio: float | None
    download_ratio: float | None
    total_bytes: int = 0
    signaling_bytes: int = 0
    upload_bytes: int = 0
    upload_signaling_bytes: int = 0
    download_bytes: int = 0
    download_signaling_bytes: int = 0

    def to_dict(self, labels: Iterable[SessionLabel] = ()) -> dict:
        out = {
            "total_ratio": self.total_ratio,
            "upload_ratio": self.upload_ratio,
            "download_ratio": self.download_ratio,
            "bytes": {
                "total": self.total_bytes, "signaling": self.signaling_bytes,
                "upload": self.upload_bytes, "upload_signaling": self.upload_signaling_bytes,
                "download": self.download_bytes,
                "download_signaling": self.download_signaling_bytes,
            },
        }
        out["sessions"] = [lab.to_dict() for lab in labels]
        return out


def group_sessions(records: Iterable[PacketRecord]) -> dict[SessionKey, list[PacketRecord]]:
    """Map each session key to its records, in input order."""
    sessions: dict[SessionKey, list[PacketRecord]] = defaultdict(list)
    for r in records:
        sessions[key_of(r)].append(r)
    return dict(sessions)


def classify_sessions(sessions: Mapping[SessionKey, Iterable[PacketRecord]],
                      large_bytes: int = LARGE_PACKET_BYTES,
                      min_large: int = MIN_LARGE_PACKETS) -> list[SessionLabel]:
    """Label sessions holding at least ``min_large`` packets of ``>= large_bytes`` as video."""
    labels = []
    for key in sorted(sessions):
        recs = list(sessions[key])
        n_large = sum(r.ip_total_len >= large_bytes for r in recs)
        labels.append(SessionLabel(key, n_large, n_large >= min_large,
                                   sum(r.ip_total_len for r in recs), len(recs)))
    return labels


def _label_index(labels) -> dict[SessionKey, SessionLabel]:
    if isinstance(labels, Mapping):
        return dict(labels)
    return {lab.key: lab for lab in labels}


def video_mask(records: Iterable[PacketRecord], labels,
               large_bytes: int = LARGE_PACKET_BYTES) -> np.ndarray:
    """Boolean per record: large packet inside a video session."""
    index = _label_index(labels)
    out = []
    for r in records:
        k = key_of(r)
        try:
            lab = index[k]
        except KeyError:
            raise KeyError(f"record belongs to unlabeled session {k}") from None
        out.append(lab.is_video and r.ip_total_len >= large_bytes)
    return np.asarray(out, dtype=bool)


def filter_video(records, labels, large_bytes: int = LARGE_PACKET_BYTES) -> list[PacketRecord]:
    """Keep only large packets of video sessions; the rest is signaling."""
    records = list(records)
    mask = video_mask(records, labels, large_bytes)
    return [r for r, keep in zip(records, mask) if keep]


def _ratio(part: int, whole: int) -> float | None:
    return part / whole if whole else None


def signaling_report(records, labels, large_bytes: int = LARGE_PACKET_BYTES) -> SignalingReport:
    """Byte share of the signaling complement, overall and per direction."""
    records = list(records)
    mask = video_mask(records, labels, large_bytes)
    tot = {d: 0 for d in Direction}
    sig = {d: 0 for d in Direction}
    for r, is_video in zip(records, mask):
        tot[r.direction] += r.ip_total_len
        if not is_video:
            sig[r.direction] += r.ip_total_len
    up, down = Direction.UPLOAD, Direction.DOWNLOAD
    total, signaling = tot[up] + tot[down], sig[up] + sig[down]
    return SignalingReport(
        total_ratio=_ratio(signaling, total),
        upload_ratio=_ratio(sig[up], tot[up]),
        download_ratio=_ratio(sig[down], tot[down]),
        total_bytes=total, signaling_bytes=signaling,
        upload_bytes=tot[up], upload_signaling_bytes=sig[up],
        download_bytes=tot[down], download_signaling_bytes=sig[down],
    )


def video_bitrate(total_mb: float, download_fraction: float, download_signaling_ratio: float,
                  duration: float, dead_time: float = 0.0) -> float:
    """Mean downloaded video rate in Kbps (1 Kbps = 1024 bit/s, 1 MB = 2**20 bytes).

    ``dead_time`` is a stretch of the trace during which no video arrived;
    it is taken off the duration.
    """
    if not duration > dead_time >= 0:
        raise ValueError(f"need duration > dead_time >= 0, got {duration}, {dead_time}")
    for name, v in (("download_fraction", download_fraction),
                    ("download_signaling_ratio", download_signaling_ratio)):
        if not 0 <= v <= 1:
            raise ValueError(f"{name} must be in [0, 1], got {v}")
    video_bits = total_mb * MB * 8 * download_fraction * (1 - download_signaling_ratio)
    return video_bits / (duration - dead_time) / KBPS


class SessionClassifier(TransformerMixin, BaseEstimator):
    """Large-packet video/signaling heuristic as an estimator.

    ``fit`` groups the records into sessions and labels them;
    ``predict`` returns a per-packet video flag and ``transform`` keeps
    only the video packets.
    """

    def __init__(self, large_bytes=LARGE_PACKET_BYTES, min_large=MIN_LARGE_PACKETS):
        self.large_bytes = large_bytes
        self.min_large = min_large

    def fit(self, X, y=None):
        if self.large_bytes <= 0 or self.min_large < 1:
            raise ValueError("large_bytes must be > 0 and min_large >= 1")
        self.labels_ = classify_sessions(group_sessions(X), self.large_bytes, self.min_large)
        self.n_sessions_ = len(self.labels_)
        self.n_video_sessions_ = sum(lab.is_video for lab in self.labels_)
        return self

    def predict(self, X):
        check_is_fitted(self, "labels_")
        return video_mask(X, self.labels_, self.large_bytes)

    def transform(self, X):
        check_is_fitted(self, "labels_")
        return filter_video(X, self.labels_, self.large_bytes)

    def signaling_report(self, X) -> SignalingReport:
        check_is_fitted(self, "labels_")
        return signaling_report(X, self.labels_, self.large_bytes)
