"""Deterministic CSV/JSON writers and the output manifest.

Floats are written with 6 significant digits and keys in sorted order so
that identical inputs give byte-identical files.
"""

from __future__ import annotations

import csv
import hashlib
import io
import json
import math
from pathlib import Path

import numpy as np

SIG_DIGITS = 6


def fmt(x) -> str:
    if isinstance(x, (bool, np.bool_)):
        return "true" if x else "false"
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if isinstance(x, (float, np.floating)):
        x = float(x)
        if math.isnan(x):
            return "nan"
        if math.isinf(x):
            return "inf" if x > 0 else "-inf"
        return f"{x:.{SIG_DIGITS}g}"
    return "" if x is None else str(x)


def normalize(obj):
    """Round floats to 6 significant digits; make the object JSON-safe."""
    if isinstance(obj, dict):
        return {str(k): normalize(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [normalize(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [normalize(v) for v in obj.tolist()]
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        x = float(obj)
        if not math.isfinite(x):
            return fmt(x)
        return float(f"{x:.{SIG_DIGITS}g}")
    return obj


def dumps(obj) -> str:
    return json.dumps(normalize(obj), indent=2, sort_keys=True) + "\n"


def csv_text(rows: list[dict], columns: list[str]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(columns)
    for row in rows:
        writer.writerow([fmt(row.get(c)) for c in columns])
    return buf.getvalue()


DIAGRAM_COLUMNS = ["octave", "scale_seconds", "y", "n_coeffs", "ci_half"]


def diagram_csv(ld) -> str:
    return csv_text(ld.rows(), DIAGRAM_COLUMNS)


class OutputDir:
    """Collects written files so a manifest can list them."""

    def __init__(self, root, config_hash: str):
        self.root = Path(root)
        self.root.mkdir(parents=True, exist_ok=True)
        self.config_hash = config_hash
        self.files: list[str] = []

    def write_text(self, name: str, text: str) -> Path:
        path = self.root / name
        path.write_text(text, encoding="utf-8")
        if name not in self.files:
            self.files.append(name)
        return path

    def write_json(self, name: str, obj) -> Path:
        return self.write_text(name, dumps(obj))

    def write_csv(self, name: str, rows: list[dict], columns: list[str]) -> Path:
        return self.write_text(name, csv_text(rows, columns))

    def register(self, name: str) -> None:
        if name not in self.files:
            self.files.append(name)

    def write_manifest(self, command: str) -> Path:
        entries = []
        for name in sorted(self.files):
            digest = hashlib.sha256((self.root / name).read_bytes()).hexdigest()
            entries.append({"file": name, "sha256": digest, "config_hash": self.config_hash})
        payload = {"command": command, "config_hash": self.config_hash, "files": entries}
        path = self.root / "manifest.json"
        path.write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n", encoding="utf-8")
        return path


def config_hash(config: dict) -> str:
    blob = json.dumps(normalize(config), sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(blob.encode()).hexdigest()[:16]
