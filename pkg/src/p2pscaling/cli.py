"""Command-line pipeline.

Subcommands: convert, summary, classify, bitrate, ldiag, stationarity,
topflows, synth. Options may also come from a JSON file given with
``--config``; command-line flags take precedence.

Exit codes: 0 success, 1 input error, 2 analysis precondition failure.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import numpy as np

from . import flows as fl
from . import reports, sessions, stationarity, synth, timeseries, wavelets
from .records import Direction, IngestError, load_records, summarize, write_records_csv
from .timeseries import EmptySeriesError

logger = logging.getLogger("p2pscaling")

EXIT_OK, EXIT_INPUT, EXIT_ANALYSIS = 0, 1, 2

DIRECTIONS = {"upload": Direction.UPLOAD, "download": Direction.DOWNLOAD}
KINDS = ("overall", "video")


@dataclass
class PipelineConfig:
    inputs: list = field(default_factory=list)
    monitored: list = field(default_factory=list)
    output: str = "out"
    bin_width: float = timeseries.DEFAULT_BIN_WIDTH
    directions: list = field(default_factory=lambda: ["upload", "download"])
    kinds: list = field(default_factory=lambda: list(KINDS))
    large_bytes: int = sessions.LARGE_PACKET_BYTES
    min_large: int = sessions.MIN_LARGE_PACKETS
    vanishing_moments: int = 3
    j1: int | None = None
    j2: int | None = None
    n_parts: int = 3
    payload_only: bool = True
    seed: int = 0

    @classmethod
    def from_sources(cls, args: argparse.Namespace, file_values: dict) -> "PipelineConfig":
        cfg = cls()
        names = {f.name for f in fields(cls)}
        unknown = set(file_values) - names
        if unknown:
            raise IngestError(f"unknown config key(s): {', '.join(sorted(unknown))}")
        for name in names:
            if name in file_values:
                setattr(cfg, name, file_values[name])
            flag = getattr(args, name, None)
            if flag is not None:
                setattr(cfg, name, flag)
        cfg.directions = [d.lower() for d in cfg.directions]
        cfg.kinds = [k.lower() for k in cfg.kinds]
        for d in cfg.directions:
            if d not in DIRECTIONS:
                raise IngestError(f"unknown direction {d!r}")
        for k in cfg.kinds:
            if k not in KINDS:
                raise IngestError(f"unknown traffic kind {k!r}")
        return cfg

    def hash(self) -> str:
        # the output location does not change results
        params = asdict(self)
        params.pop("output")
        return reports.config_hash(params)


# ---------------------------------------------------------------------------
# shared steps


def _load(cfg: PipelineConfig):
    if not cfg.inputs:
        raise IngestError("no input file given")
    records = []
    for path in cfg.inputs:
        records.extend(load_records(path, cfg.monitored))
    if len(cfg.inputs) > 1:
        records.sort(key=lambda r: r.timestamp)
    return records


def _labels(cfg, records):
    return sessions.classify_sessions(sessions.group_sessions(records), cfg.large_bytes,
                                      cfg.min_large)


def _analyze_series(cfg, series) -> dict:
    """Diagram, scaling estimate and feature for one series; failures are recorded."""
    out: dict = {"n_bins": len(series), "n_packets": int(series.counts.sum()),
                 "start": series.start, "bin_width": series.bin_width}
    details = wavelets.dwt_details(series, cfg.vanishing_moments)
    ld = wavelets.logscale_diagram(details)
    out["diagram"] = ld
    try:
        out["estimate"] = wavelets.estimate_scaling(ld, cfg.j1, cfg.j2).to_dict()
    except ValueError as exc:
        out["estimate"] = None
        out["estimate_error"] = str(exc)
    try:
        out["feature"] = wavelets.detect_features(ld).to_dict()
    except ValueError as exc:
        out["feature"] = None
        out["feature_error"] = str(exc)
    return out


def _quadrant_records(cfg, records, labels):
    video = sessions.filter_video(records, labels, cfg.large_bytes) if "video" in cfg.kinds else []
    return {"overall": records, "video": video}


def _series(cfg, recs, direction):
    return timeseries.bin_counts(recs, cfg.bin_width, DIRECTIONS[direction], cfg.payload_only)


# ---------------------------------------------------------------------------
# subcommands


def run_convert(cfg: PipelineConfig, out: reports.OutputDir) -> dict:
    records = _load(cfg)
    write_records_csv(out.root / "records.csv", records)
    out.register("records.csv")
    return {"records": len(records)}


def run_summary(cfg, out) -> dict:
    s = summarize(_load(cfg))
    table = s.to_dict()
    out.write_json("summary.json", table)
    pct = lambda v: 100 * v  # noqa: E731
    tf = s.transport_fractions
    rows = [
        {"metric": "duration_s", "value": s.duration},
        {"metric": "size_mb", "value": s.total_mb},
        {"metric": "download_pct", "value": pct(s.download_fraction)},
        {"metric": "download_tcp_pct", "value": pct(tf["Download"]["TCP"])},
        {"metric": "download_udp_pct", "value": pct(tf["Download"]["UDP"])},
        {"metric": "upload_pct", "value": pct(s.upload_fraction)},
        {"metric": "upload_tcp_pct", "value": pct(tf["Upload"]["TCP"])},
        {"metric": "upload_udp_pct", "value": pct(tf["Upload"]["UDP"])},
    ]
    out.write_csv("summary.csv", rows, ["metric", "value"])
    return table


def run_classify(cfg, out) -> dict:
    records = _load(cfg)
    labels = _labels(cfg, records)
    rep = sessions.signaling_report(records, labels, cfg.large_bytes)
    payload = rep.to_dict(labels)
    out.write_json("classify.json", payload)
    return {k: payload[k] for k in ("total_ratio", "upload_ratio", "download_ratio")}


def run_bitrate(cfg, out, args) -> dict:
    if cfg.inputs:
        records = _load(cfg)
        s = summarize(records)
        rep = sessions.signaling_report(records, _labels(cfg, records), cfg.large_bytes)
        total_mb, dfrac = s.total_mb, s.download_fraction
        dsig = rep.download_ratio if rep.download_ratio is not None else 0.0
        duration = s.duration if args.duration is None else args.duration
    else:
        missing = [n for n in ("total_mb", "download_fraction", "download_signaling", "duration")
                   if getattr(args, n) is None]
        if missing:
            raise IngestError("bitrate needs an input trace or --" + ", --".join(
                m.replace("_", "-") for m in missing))
        total_mb, dfrac = args.total_mb, args.download_fraction
        dsig, duration = args.download_signaling, args.duration
    kbps = sessions.video_bitrate(total_mb, dfrac, dsig, duration, args.dead_time)
    result = {"total_mb": total_mb, "download_fraction": dfrac, "download_signaling_ratio": dsig,
              "duration": duration, "dead_time": args.dead_time, "kbps": kbps}
    out.write_json("bitrate.json", result)
    print(f"{kbps:.1f} Kbps")
    return result


def _diagram_block(name, res, out, prefix):
    ld = res.pop("diagram")
    fname = f"{prefix}_{name}.csv"
    out.write_text(fname, reports.diagram_csv(ld))
    res["diagram_csv"] = fname
    return res


def run_ldiag(cfg, out) -> dict:
    records = _load(cfg)
    labels = _labels(cfg, records)
    by_kind = _quadrant_records(cfg, records, labels)
    result = {"bin_width": cfg.bin_width,
              "note": "each quadrant's bins are anchored at its own first packet",
              "quadrants": {}}
    for direction in cfg.directions:
        for kind in cfg.kinds:
            name = f"{direction}_{kind}"
            try:
                series = _series(cfg, by_kind[kind], direction)
                res = _analyze_series(cfg, series)
            except (EmptySeriesError, wavelets.SeriesTooShortError) as exc:
                result["quadrants"][name] = {"absent": True, "reason": str(exc)}
                continue
            result["quadrants"][name] = _diagram_block(name, res, out, "ldiag")
    out.write_json("ldiag.json", result)
    if all(q.get("absent") for q in result["quadrants"].values()):
        raise EmptySeriesError("no quadrant produced a diagram")
    return result


def run_stationarity(cfg, out) -> dict:
    records = _load(cfg)
    labels = _labels(cfg, records)
    by_kind = _quadrant_records(cfg, records, labels)
    result = {"n_parts": cfg.n_parts, "quadrants": {}}
    for direction in cfg.directions:
        for kind in cfg.kinds:
            name = f"{direction}_{kind}"
            try:
                series = _series(cfg, by_kind[kind], direction)
                parts = stationarity.split_parts(series, cfg.n_parts, cfg.vanishing_moments)
                rep = stationarity.compare_parts(parts, cfg.vanishing_moments)
            except (EmptySeriesError, wavelets.SeriesTooShortError) as exc:
                result["quadrants"][name] = {"absent": True, "reason": str(exc)}
                continue
            entry = rep.to_dict()
            entry["part_bins"] = len(parts[0])
            entry["diagrams_csv"] = [reports.diagram_csv(ld) for ld in rep.diagrams]
            cols = (["octave"] + [f"y{p}" for p in range(1, cfg.n_parts + 1)]
                    + [f"ci{p}" for p in range(1, cfg.n_parts + 1)])
            fname = f"stationarity_{name}.csv"
            out.write_csv(fname, rep.overlay_rows(), cols)
            entry["overlay_csv"] = fname
            result["quadrants"][name] = entry
    out.write_json("stationarity.json", result)
    if all(q.get("absent") for q in result["quadrants"].values()):
        raise EmptySeriesError("no quadrant could be analyzed")
    return result


def run_topflows(cfg, out, rank: int = 1, top: int | None = None) -> dict:
    records = _load(cfg)
    labels = _labels(cfg, records)
    ranked = fl.rank_download_flows(records, labels)
    rows = [{"rank": i, "remote_addr": f.remote_addr, "bytes": f.bytes, "packets": f.packets,
             "video_bytes": f.video_bytes, "video_packets": f.video_packets}
            for i, f in enumerate(ranked[:top] if top else ranked, start=1)]
    out.write_csv("topflows.csv", rows,
                  ["rank", "remote_addr", "bytes", "packets", "video_bytes", "video_packets"])
    chosen = fl.nth_flow(ranked, rank)
    flow_recs = fl.flow_records(records, chosen.remote_addr)
    by_kind = _quadrant_records(cfg, flow_recs, labels)
    result = {
        "rank": rank, "remote_addr": chosen.remote_addr, "bytes": chosen.bytes,
        "mb": chosen.mb, "packets": chosen.packets, "video_bytes": chosen.video_bytes,
        "video_mb": chosen.video_mb, "video_packets": chosen.video_packets,
        "signaling_packets": chosen.signaling_packets,
        "signaling_mb": chosen.signaling_bytes / sessions.MB,
        "note": "a flow holds download traffic only; upload quadrants do not apply",
        "quadrants": {},
    }
    for kind in cfg.kinds:
        name = f"download_{kind}"
        try:
            series = _series(cfg, by_kind[kind], "download")
            res = _analyze_series(cfg, series)
        except (EmptySeriesError, wavelets.SeriesTooShortError) as exc:
            result["quadrants"][name] = {"absent": True, "reason": str(exc)}
            continue
        result["quadrants"][name] = _diagram_block(name, res, out, f"topflow{rank}")
    out.write_json(f"topflow{rank}.json", result)
    return result


def run_synth(cfg, out, args) -> dict:
    kind = args.kind
    seed = cfg.seed
    if kind in ("fgn", "poisson", "periodic"):
        if kind == "fgn":
            values = synth.gen_fgn(args.length, args.hurst, seed)
        elif kind == "poisson":
            values = synth.gen_poisson(args.length, args.rate, seed)
        else:
            values = synth.gen_periodic(args.length, args.period_bins, args.rate,
                                        args.amplitude, seed, args.phase)
        series = timeseries.TimeSeries(cfg.bin_width, 0.0, values)
        text = reports.csv_text([{"bin_index": i, "count": v} for i, v in enumerate(values)],
                                ["bin_index", "count"])
        header = f"# bin_width={cfg.bin_width:.6g} generator={kind} seed={seed}\n"
        out.write_text("series.csv", header + text)
        return {"kind": kind, "length": len(series), "seed": seed}
    if kind == "mix":
        if args.spec:
            spec = synth.SessionMixSpec.from_dict(json.loads(Path(args.spec).read_text()))
        else:
            spec = synth.random_session_mix(seed)
        records, truth = synth.gen_session_mix(spec, cfg.large_bytes, cfg.min_large)
        write_records_csv(out.root / "records.csv", records)
        out.register("records.csv")
        synth.write_ground_truth(out.root / "truth.json", truth, spec)
        out.register("truth.json")
        return {"kind": kind, "records": len(records), "sessions": len(truth.session_is_video)}
    if kind == "trace":
        counts = {}
        for i, direction in enumerate(("up", "down")):
            s = seed + 7919 * i
            if args.model == "fgn":
                x = synth.gen_fgn(args.length, args.hurst, s)
                rate = args.rate * (1 + args.amplitude * x)
            elif args.model == "periodic":
                rate = args.rate + args.amplitude * synth.square_wave(
                    args.length, args.period_bins, args.phase)
            else:
                rate = np.full(args.length, float(args.rate))
            counts[direction] = synth.gen_modulated_counts(rate, s + 1)
        records = synth.trace_from_counts(counts["up"], counts["down"], cfg.bin_width,
                                          seed, transport=args.transport)
        write_records_csv(out.root / "records.csv", records)
        out.register("records.csv")
        return {"kind": kind, "model": args.model, "records": len(records)}
    raise IngestError(f"unknown synth kind {kind!r}")


# ---------------------------------------------------------------------------
# argument parsing


def _add_common(p: argparse.ArgumentParser, inputs: str = "*") -> None:
    p.add_argument("inputs", nargs=inputs, default=None, help="pcap or canonical CSV file(s)")
    p.add_argument("--config", help="JSON file with option values; flags override it")
    p.add_argument("-o", "--output", default=None, help="output directory (default: out)")
    p.add_argument("-m", "--monitored", action="append", default=None,
                   help="monitored host address (repeatable; needed for pcap input)")
    p.add_argument("--bin-width", dest="bin_width", type=float, default=None)
    p.add_argument("--large-bytes", dest="large_bytes", type=int, default=None)
    p.add_argument("--min-large", dest="min_large", type=int, default=None)
    p.add_argument("--vanishing-moments", dest="vanishing_moments", type=int, default=None)
    p.add_argument("--j1", type=int, default=None)
    p.add_argument("--j2", type=int, default=None)
    p.add_argument("--direction", dest="directions", action="append", default=None,
                   choices=sorted(DIRECTIONS))
    p.add_argument("--kind", dest="kinds", action="append", default=None, choices=KINDS)
    p.add_argument("--all-packets", dest="payload_only", action="store_false", default=None,
                   help="also count TCP packets without payload")
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("-v", "--verbose", action="store_true")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="p2pscaling", description=__doc__.split("\n")[0])
    sub = parser.add_subparsers(dest="command", required=True)
    for name, text in [
        ("convert", "write the input as canonical CSV records"),
        ("summary", "trace duration and byte shares per direction/transport"),
        ("classify", "video/signaling session labels and signaling ratios"),
        ("ldiag", "logscale diagrams for upload/download x overall/video"),
        ("stationarity", "compare diagrams of equal parts of each series"),
    ]:
        p = sub.add_parser(name, help=text)
        _add_common(p)
        if name == "stationarity":
            p.add_argument("--parts", dest="n_parts", type=int, default=None)
    p = sub.add_parser("topflows", help="rank download peers and analyze one flow")
    _add_common(p)
    p.add_argument("--rank", type=int, default=1, help="1-based rank of the flow to analyze")
    p.add_argument("--top", type=int, default=None, help="rows to keep in topflows.csv")
    p = sub.add_parser("bitrate", help="video download bitrate in Kbps")
    _add_common(p)
    p.add_argument("--total-mb", dest="total_mb", type=float)
    p.add_argument("--download-fraction", dest="download_fraction", type=float)
    p.add_argument("--download-signaling", dest="download_signaling", type=float)
    p.add_argument("--duration", type=float)
    p.add_argument("--dead-time", dest="dead_time", type=float, default=0.0)
    p = sub.add_parser("synth", help="generate oracle series and traces")
    p.add_argument("kind", choices=["fgn", "poisson", "periodic", "mix", "trace"])
    _add_common(p, inputs="?")
    p.add_argument("--length", type=int, default=2**14)
    p.add_argument("--hurst", type=float, default=0.8)
    p.add_argument("--rate", type=float, default=5.0)
    p.add_argument("--amplitude", type=float, default=5.0)
    p.add_argument("--period-bins", dest="period_bins", type=int, default=256)
    p.add_argument("--phase", type=int, default=0)
    p.add_argument("--model", choices=["fgn", "periodic", "poisson"], default="fgn")
    p.add_argument("--transport", choices=["TCP", "UDP"], default="UDP")
    p.add_argument("--spec", help="JSON session-mix spec (kind=mix)")
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        file_values = {}
        if args.config:
            file_values = json.loads(Path(args.config).read_text(encoding="utf-8"))
        if args.command == "synth":
            args.inputs = None
        elif not args.inputs:
            args.inputs = None
        cfg = PipelineConfig.from_sources(args, file_values)
        out = reports.OutputDir(cfg.output, cfg.hash())
        if args.command == "bitrate":
            result = run_bitrate(cfg, out, args)
        elif args.command == "topflows":
            result = run_topflows(cfg, out, args.rank, args.top)
        elif args.command == "synth":
            result = run_synth(cfg, out, args)
        else:
            result = {
                "convert": run_convert, "summary": run_summary, "classify": run_classify,
                "ldiag": run_ldiag, "stationarity": run_stationarity,
            }[args.command](cfg, out)
        out.write_manifest(args.command)
    except (IngestError, OSError, json.JSONDecodeError) as exc:
        print(f"input error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except (ValueError, KeyError, IndexError) as exc:
        print(f"analysis error: {exc}", file=sys.stderr)
        return EXIT_ANALYSIS
    if args.command != "bitrate":
        print(reports.dumps(_brief(result)), end="")
    return EXIT_OK


def _brief(result: dict) -> dict:
    """Drop bulky fields before echoing a result to stdout."""
    if not isinstance(result, dict):
        return result
    out = {}
    for k, v in result.items():
        if k in ("diagrams_csv", "evidence", "sessions"):
            continue
        out[k] = _brief(v) if isinstance(v, dict) else v
    return out


if __name__ == "__main__":
    sys.exit(main())
