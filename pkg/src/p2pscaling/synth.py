"""Synthetic series and labeled packet traces with known ground truth."""

from __future__ import annotations

import ipaddress
import json
from dataclasses import asdict, dataclass, field
from typing import Sequence

import numpy as np

from .records import Direction, PacketRecord, Transport
from .sessions import LARGE_PACKET_BYTES, MIN_LARGE_PACKETS, SessionKey, session_key


def fgn_autocovariance(hurst: float, lags) -> np.ndarray:
    """Autocovariance of unit-variance fractional Gaussian noise."""
    k = np.abs(np.asarray(lags, dtype=float))
    two_h = 2 * hurst
    return 0.5 * (np.abs(k + 1) ** two_h - 2 * k ** two_h + np.abs(k - 1) ** two_h)


def _is_pow2(n: int) -> bool:
    return n >= 1 and n & (n - 1) == 0


def gen_fgn(length: int, hurst: float, seed=None, max_doublings: int = 4) -> np.ndarray:
    """Exact fractional Gaussian noise by circulant embedding (Davies-Harte).

    The covariance row of size ``m = 2 * length`` is diagonalised by the
    FFT; if any eigenvalue is negative the embedding is doubled, up to
    ``max_doublings`` times.
    """
    if not 0 < hurst < 1:
        raise ValueError("hurst must lie in (0, 1)")
    if not _is_pow2(length):
        raise ValueError(f"length must be a power of two, got {length}")
    rng = np.random.default_rng(seed)
    m = 2 * length
    for _ in range(max_doublings + 1):
        half = fgn_autocovariance(hurst, np.arange(m // 2 + 1))
        row = np.concatenate([half, half[-2:0:-1]])
        eig = np.fft.fft(row).real
        if eig.min() >= -1e-10 * eig.max():
            break
        m *= 2
    else:
        raise ValueError("circulant embedding is not non-negative definite")
    eig = np.clip(eig, 0, None)
    z = rng.standard_normal(m) + 1j * rng.standard_normal(m)
    return np.fft.fft(np.sqrt(eig / m) * z)[:length].real


def gen_poisson(length: int, rate: float, seed=None) -> np.ndarray:
    """I.i.d. Poisson counts."""
    if rate <= 0:
        raise ValueError("rate must be positive")
    return np.random.default_rng(seed).poisson(rate, size=length).astype(np.int64)


def square_wave(length: int, period_bins: int, phase: int = 0) -> np.ndarray:
    """0/1 square wave, high during the first half of each period."""
    t = (np.arange(length) + phase) % period_bins
    return (t < period_bins / 2).astype(float)


def gen_periodic(length: int, period_bins: int, base_rate: float, amplitude: float,
                 seed=None, phase: int = 0) -> np.ndarray:
    """Poisson counts whose rate alternates between base_rate and base_rate + amplitude.

    With ``amplitude=0`` the output equals :func:`gen_poisson` for the
    same seed.
    """
    if period_bins < 2:
        raise ValueError("period_bins must be >= 2")
    if amplitude < 0:
        raise ValueError("amplitude must be >= 0")
    if base_rate < 0:
        raise ValueError("negative rate")
    rate = base_rate + amplitude * square_wave(length, period_bins, phase)
    if not (rate > 0).all():
        raise ValueError("rate must be positive in every bin")
    return np.random.default_rng(seed).poisson(rate).astype(np.int64)


def gen_modulated_counts(rate: np.ndarray, seed=None) -> np.ndarray:
    """Poisson counts with a per-bin rate (negative rates clip to zero)."""
    return np.random.default_rng(seed).poisson(np.clip(rate, 0, None)).astype(np.int64)


# ---------------------------------------------------------------------------
# labeled session mixes


@dataclass
class SessionBlueprint:
    """One synthetic conversation between the monitored host and a peer.

    ``role`` is "video" or "signaling". Packets are split into large ones
    (sizes from ``large_size``) and small ones (sizes from ``small_size``);
    a size is either an int or an inclusive ``(lo, hi)`` range.
    ``download_share`` is the probability that a packet travels from the
    peer to the monitored host.
    """

    role: str
    large_count: int
    small_count: int
    local_addr: str = "10.0.0.1"
    local_port: int = 5000
    remote_addr: str = "192.0.2.1"
    remote_port: int = 8000
    transport: str = "UDP"
    large_size: object = (1000, 1500)
    small_size: object = (40, 199)
    timing: str = "uniform"
    download_share: float = 0.5
    start: float = 0.0
    end: float | None = None


@dataclass
class SessionMixSpec:
    sessions: list = field(default_factory=list)
    duration: float = 60.0
    seed: int = 0

    def to_dict(self) -> dict:
        return {"sessions": [asdict(s) for s in self.sessions], "duration": self.duration,
                "seed": self.seed}

    @classmethod
    def from_dict(cls, d: dict) -> "SessionMixSpec":
        sessions = []
        for s in d.get("sessions", []):
            s = dict(s)
            for k in ("large_size", "small_size"):
                if isinstance(s.get(k), list):
                    s[k] = tuple(s[k])
            sessions.append(SessionBlueprint(**s))
        return cls(sessions, d.get("duration", 60.0), d.get("seed", 0))


@dataclass
class GroundTruth:
    """Authoritative labels of a generated mix."""

    session_is_video: dict  # SessionKey -> bool
    packet_is_video: list  # aligned with the sorted record list

    def to_dict(self) -> dict:
        return {
            "sessions": [
                {"key": k.to_dict(), "is_video": v}
                for k, v in sorted(self.session_is_video.items())
            ],
            "packet_is_video": [int(v) for v in self.packet_is_video],
        }


def _size_bounds(size) -> tuple[int, int]:
    if isinstance(size, (int, np.integer)):
        return int(size), int(size)
    lo, hi = size
    if lo > hi:
        raise ValueError(f"empty size range {size}")
    return int(lo), int(hi)


def _check_blueprint(bp: SessionBlueprint, large_bytes: int, min_large: int) -> None:
    if bp.role not in ("video", "signaling"):
        raise ValueError(f"unknown role {bp.role!r}")
    if bp.large_count < 0 or bp.small_count < 0:
        raise ValueError("packet counts must be >= 0")
    Transport(bp.transport)
    llo, lhi = _size_bounds(bp.large_size)
    slo, shi = _size_bounds(bp.small_size)
    if bp.large_count and llo < large_bytes:
        raise ValueError(f"large packet sizes must be >= {large_bytes} B, got {bp.large_size}")
    if bp.small_count and shi >= large_bytes:
        raise ValueError(f"small packet sizes must be < {large_bytes} B, got {bp.small_size}")
    min_len = 40 if Transport(bp.transport) is Transport.TCP else 28
    if (bp.small_count and slo < min_len) or (bp.large_count and llo < min_len):
        raise ValueError(f"packet size below {bp.transport} header size {min_len}")
    if bp.role == "video" and bp.large_count < min_large:
        raise ValueError(
            f"video blueprint needs >= {min_large} large packets, got {bp.large_count}")
    if bp.role == "signaling" and bp.large_count >= min_large:
        raise ValueError(
            f"signaling blueprint must have < {min_large} large packets, got {bp.large_count}")
    if not 0 <= bp.download_share <= 1:
        raise ValueError("download_share must be in [0, 1]")
    if bp.timing not in ("uniform", "poisson"):
        raise ValueError(f"unknown timing model {bp.timing!r}")


def _timestamps(rng, n: int, lo: float, hi: float, timing: str) -> np.ndarray:
    if n == 0:
        return np.empty(0)
    if timing == "uniform":
        t = rng.uniform(lo, hi, size=n)
    else:
        gaps = rng.exponential(1.0, size=n + 1)
        t = lo + (hi - lo) * np.cumsum(gaps)[:-1] / gaps.sum()
    # microsecond resolution, as in captures
    return np.sort(np.round(t, 6))


def gen_session_mix(spec: SessionMixSpec, large_bytes: int = LARGE_PACKET_BYTES,
                    min_large: int = MIN_LARGE_PACKETS):
    """Realise the blueprints as packet records plus ground-truth labels.

    Returns ``(records, truth)``; records are sorted by timestamp (stable
    with respect to blueprint order) and ``truth.packet_is_video`` follows
    that order.
    """
    rng = np.random.default_rng(spec.seed)
    rows = []
    truth_sessions: dict[SessionKey, bool] = {}
    for bp in spec.sessions:
        _check_blueprint(bp, large_bytes, min_large)
        transport = Transport(bp.transport)
        hdr = 40 if transport is Transport.TCP else 28
        key = session_key(bp.local_addr, bp.local_port, bp.remote_addr, bp.remote_port, transport)
        if key in truth_sessions:
            raise ValueError(f"duplicate blueprint for session {key}")
        truth_sessions[key] = bp.role == "video"
        n = bp.large_count + bp.small_count
        llo, lhi = _size_bounds(bp.large_size)
        slo, shi = _size_bounds(bp.small_size)
        sizes = np.concatenate([
            rng.integers(llo, lhi + 1, size=bp.large_count),
            rng.integers(slo, shi + 1, size=bp.small_count),
        ]).astype(int)
        is_large = np.arange(n) < bp.large_count
        order = rng.permutation(n)
        sizes, is_large = sizes[order], is_large[order]
        end = spec.duration if bp.end is None else bp.end
        stamps = _timestamps(rng, n, bp.start, end, bp.timing)
        down = rng.random(n) < bp.download_share
        for t, size, large, dn in zip(stamps, sizes, is_large, down):
            if dn:
                src, sport, dst, dport = bp.remote_addr, bp.remote_port, bp.local_addr, bp.local_port
            else:
                src, sport, dst, dport = bp.local_addr, bp.local_port, bp.remote_addr, bp.remote_port
            rec = PacketRecord(
                timestamp=float(t), src_addr=src, src_port=sport, dst_addr=dst, dst_port=dport,
                transport=transport, ip_total_len=int(size), payload_len=int(size) - hdr,
                direction=Direction.DOWNLOAD if dn else Direction.UPLOAD,
            )
            rows.append((rec, bool(large) and bp.role == "video"))
    rows.sort(key=lambda item: item[0].timestamp)
    records = [r for r, _ in rows]
    truth = GroundTruth(truth_sessions, [v for _, v in rows])
    return records, truth


def random_session_mix(seed: int, n_video: tuple[int, int] = (1, 5),
                       n_signaling: tuple[int, int] = (1, 8), duration: float = 120.0,
                       local_addr: str = "10.0.0.1") -> SessionMixSpec:
    """A randomized but threshold-respecting mix, for property-style checks.

    Includes boundary cases on purpose: video sessions with exactly
    ``MIN_LARGE_PACKETS`` large packets, signaling sessions with up to
    ``MIN_LARGE_PACKETS - 1`` large packets and large packets of exactly
    ``LARGE_PACKET_BYTES``.
    """
    rng = np.random.default_rng(seed)
    base = int(ipaddress.IPv4Address("198.51.100.0"))
    nv = int(rng.integers(n_video[0], n_video[1] + 1))
    ns = int(rng.integers(n_signaling[0], n_signaling[1] + 1))
    peers = rng.choice(200, size=nv + ns, replace=False)
    sessions = []
    for i in range(nv + ns):
        video = i < nv
        transport = "TCP" if rng.random() < 0.5 else "UDP"
        if video:
            large = int(rng.integers(MIN_LARGE_PACKETS, 60))
        else:
            large = int(rng.integers(0, MIN_LARGE_PACKETS))
        sessions.append(SessionBlueprint(
            role="video" if video else "signaling",
            large_count=large,
            small_count=int(rng.integers(0, 80)),
            local_addr=local_addr,
            local_port=int(rng.integers(1024, 65536)),
            remote_addr=str(ipaddress.IPv4Address(base + int(peers[i]))),
            remote_port=int(rng.integers(1024, 65536)),
            transport=transport,
            large_size=(LARGE_PACKET_BYTES, 1500) if rng.random() < 0.7 else LARGE_PACKET_BYTES,
            small_size=(40, 199),
            timing="uniform" if rng.random() < 0.5 else "poisson",
            download_share=float(rng.uniform(0.1, 0.9)),
        ))
    return SessionMixSpec(sessions, duration, seed)


def trace_from_counts(up_counts: Sequence[int], down_counts: Sequence[int],
                      bin_width: float = 0.02, seed=None, signaling_share: float = 0.2,
                      n_peers: int = 8, local_addr: str = "10.0.0.1",
                      transport: str = "UDP") -> list[PacketRecord]:
    """Packet trace whose per-bin arrivals follow the given count series.

    Each arrival is placed uniformly inside its bin and attached to one of
    ``n_peers`` sessions. Every session carries plenty of large packets, so
    all of them are video sessions; a ``signaling_share`` fraction of the
    packets is small and is therefore dropped by the video filter.
    """
    rng = np.random.default_rng(seed)
    transport = Transport(transport)
    hdr = 40 if transport is Transport.TCP else 28
    base = int(ipaddress.IPv4Address("203.0.113.10"))
    width_us = int(round(bin_width * 1e6))
    records = []
    for direction, counts in ((Direction.UPLOAD, up_counts), (Direction.DOWNLOAD, down_counts)):
        counts = np.asarray(counts, dtype=np.int64)
        total = int(counts.sum())
        bins = np.repeat(np.arange(len(counts)), counts)
        offs = rng.integers(0, width_us, size=total)
        stamps = (bins * width_us + offs) / 1e6
        peer = rng.integers(0, n_peers, size=total)
        small = rng.random(total) < signaling_share
        sizes = np.where(small, rng.integers(60, 200, size=total),
                         rng.integers(1000, 1500, size=total))
        for t, p, s in zip(stamps, peer, sizes):
            remote = str(ipaddress.IPv4Address(base + int(p)))
            port = 9000 + int(p)
            if direction is Direction.UPLOAD:
                ends = (local_addr, 5000, remote, port)
            else:
                ends = (remote, port, local_addr, 5000)
            records.append(PacketRecord(float(t), ends[0], ends[1], ends[2], ends[3],
                                        transport, int(s), int(s) - hdr, direction))
    records.sort(key=lambda r: r.timestamp)
    return records


def write_ground_truth(path, truth: GroundTruth, spec: SessionMixSpec | None = None) -> None:
    payload = truth.to_dict()
    if spec is not None:
        payload["spec"] = spec.to_dict()
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")
