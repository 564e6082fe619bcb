"""Packet-trace toolkit for the multiscale analysis of P2P streaming traffic."""

from .flows import FlowSummary, flow_records, rank_download_flows
from .records import (Direction, IngestError, PacketRecord, TraceSummary, Transport,
                      read_pcap, read_records_csv, summarize, write_records_csv)
from .sessions import (SessionClassifier, SessionKey, SessionLabel, SignalingReport,
                       classify_sessions, filter_video, group_sessions, signaling_report,
                       video_bitrate)
from .stationarity import StationarityReport, StationarityTester, compare_parts, split_thirds
from .timeseries import ArrivalBinner, TimeSeries, bin_counts
from .wavelets import (LogscaleDiagram, ScalingEstimate, SpectrumFeature,
                       WaveletScalingEstimator, detect_features, dwt_details,
                       estimate_scaling, logscale_diagram)

__version__ = "0.1.0"

__all__ = [
    "ArrivalBinner", "Direction", "FlowSummary", "IngestError", "LogscaleDiagram",
    "PacketRecord", "ScalingEstimate", "SessionClassifier", "SessionKey", "SessionLabel",
    "SignalingReport", "SpectrumFeature", "StationarityReport", "StationarityTester",
    "TimeSeries", "TraceSummary", "Transport", "WaveletScalingEstimator", "bin_counts",
    "classify_sessions", "compare_parts", "detect_features", "dwt_details",
    "estimate_scaling", "filter_video", "flow_records", "group_sessions", "logscale_diagram",
    "rank_download_flows", "read_pcap", "read_records_csv", "signaling_report",
    "split_thirds", "summarize", "video_bitrate", "write_records_csv",
]
