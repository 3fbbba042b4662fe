"""
File formats shared by the command-line tools.

* signal CSV: header ``t_s,<channel>[,<channel>...]``, one sample per row,
  strictly increasing ``t_s``; the sampling rate is ``1 / median(dt)`` and
  every interval must lie within 1% of that median.
* feature-input CSV for scoring: columns ``spo2_pct, rmssd_ms, pi,
  phase_left_deg, phase_right_deg`` (any subset, extra columns ignored);
  an empty cell is an absent modality.
* results JSON: :class:`ResultsDocument`.
* SVG: a bare line chart for plot-data outputs.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from datetime import datetime, timezone
from importlib import metadata
from pathlib import Path

import numpy as np

from .signal_core import TimeSeries

SCHEMA_VERSION = 1
RATE_TOLERANCE = 0.01
SCORE_COLUMNS = ("spo2_pct", "rmssd_ms", "pi", "phase_left_deg", "phase_right_deg")


class DataError(ValueError):
    """Malformed or unusable input data."""


def tool_version() -> str:
    try:
        return metadata.version("artifact")
    except metadata.PackageNotFoundError:
        return "0+unknown"


# --------------------------------------------------------------------------
# signal CSV
# --------------------------------------------------------------------------

def read_signal_csv(path, channel: str | None = None, fs: float | None = None,
                    scale: float = 1.0) -> TimeSeries:
    """Load one channel of a signal CSV.

    ``channel`` defaults to the first column after ``t_s``. ``fs`` overrides
    the inferred rate (timestamps are then only checked for order).
    ``scale`` multiplies the samples (e.g. 1000 for seconds to ms).
    """
    path = Path(path)
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise DataError(f"{path}: empty file")
    header = [h.strip() for h in rows[0]]
    if len(header) < 2 or header[0] != "t_s":
        raise DataError(f"{path}:1: header must be 't_s,<channel>', got {','.join(header)!r}")
    name = channel or header[1]
    if name not in header[1:]:
        raise DataError(f"{path}:1: channel {name!r} not in header {header[1:]}")
    col = header.index(name)
    t, x, lines = [], [], []
    for lineno, row in enumerate(rows[1:], start=2):
        if not row or all(not c.strip() for c in row):
            continue
        if len(row) != len(header):
            raise DataError(f"{path}:{lineno}: expected {len(header)} fields, got {len(row)}")
        try:
            tv, xv = float(row[0]), float(row[col])
        except ValueError:
            raise DataError(f"{path}:{lineno}: non-numeric value in {row!r}") from None
        if not (math.isfinite(tv) and math.isfinite(xv)):
            raise DataError(f"{path}:{lineno}: non-finite value")
        if t and tv <= t[-1]:
            raise DataError(f"{path}:{lineno}: t_s not strictly increasing ({tv} after {t[-1]})")
        t.append(tv)
        x.append(xv * scale)
        lines.append(lineno)
    if len(t) < 2:
        raise DataError(f"{path}: need at least two samples, got {len(t)}")
    dt = np.diff(t)
    med = float(np.median(dt))
    if fs is None:
        bad = np.flatnonzero(np.abs(dt - med) > RATE_TOLERANCE * med)
        if bad.size:
            i = int(bad[0])
            raise DataError(f"{path}:{lines[i + 1]}: sample interval {dt[i]:.6g} s deviates more than "
                            f"{RATE_TOLERANCE:.0%} from the median {med:.6g} s")
        fs = 1.0 / med
    return TimeSeries(fs, np.asarray(x), t0=t[0], label=name)


def write_signal_csv(path, channels: dict, fs: float, t0: float = 0.0):
    """Write equally sampled channels ``{name: samples}`` in signal CSV format."""
    names = list(channels)
    data = [np.asarray(channels[n], dtype=float) for n in names]
    n = data[0].size
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["t_s", *names])
        for i in range(n):
            w.writerow([repr(t0 + i / fs), *(repr(float(d[i])) for d in data)])


# --------------------------------------------------------------------------
# scoring input CSV
# --------------------------------------------------------------------------

@dataclass
class ScoreRow:
    line: int
    values: dict = field(default_factory=dict)   # column -> float | None
    error: str | None = None


def read_score_csv(path) -> list:
    """Parse a feature-input CSV into :class:`ScoreRow` records.

    A malformed number becomes a row-level error naming the column; parsing
    continues with the next row.
    """
    path = Path(path)
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if not reader.fieldnames:
            raise DataError(f"{path}: empty file")
        fields = [f.strip() for f in reader.fieldnames]
        reader.fieldnames = fields
        if not set(fields) & set(SCORE_COLUMNS):
            raise DataError(f"{path}:1: none of the modality columns {SCORE_COLUMNS} present")
        out = []
        for rec in reader:
            row = ScoreRow(reader.line_num)
            for c in SCORE_COLUMNS:
                cell = (rec.get(c) or "").strip()
                if not cell:
                    row.values[c] = None
                    continue
                try:
                    v = float(cell)
                except ValueError:
                    row.error = f"line {row.line}: column {c}: not a number: {cell!r}"
                    break
                if not math.isfinite(v):
                    row.error = f"line {row.line}: column {c}: non-finite value {cell!r}"
                    break
                row.values[c] = v
            out.append(row)
    return out


# --------------------------------------------------------------------------
# results document
# --------------------------------------------------------------------------

def _clean(obj):
    """JSON-safe copy: non-finite floats become None, numpy scalars/arrays become Python."""
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _clean(obj.tolist())
    if isinstance(obj, np.generic):
        return _clean(obj.item())
    if isinstance(obj, float) and not math.isfinite(obj):
        return None
    return obj


@dataclass
class ResultsDocument:
    command: str
    config: dict
    metrics: dict
    seed: int
    version: str = field(default_factory=tool_version)
    timestamp: str = field(default_factory=lambda: datetime.now(timezone.utc).isoformat(timespec="seconds"))
    schema_version: int = SCHEMA_VERSION

    def to_dict(self) -> dict:
        return {
            "schema_version": self.schema_version,
            "command": self.command,
            "config": _clean(self.config),
            "metrics": _clean(self.metrics),
            "provenance": {"version": self.version, "timestamp": self.timestamp, "seed": self.seed},
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True, allow_nan=False) + "\n"

    @classmethod
    def from_dict(cls, d: dict) -> "ResultsDocument":
        v = d.get("schema_version")
        if not isinstance(v, int) or v < 1 or v > SCHEMA_VERSION:
            raise DataError(f"unsupported schema_version {v!r}")
        p = d["provenance"]
        return cls(d["command"], d["config"], d["metrics"], p["seed"], p["version"], p["timestamp"], v)

    @classmethod
    def from_json(cls, text: str) -> "ResultsDocument":
        return cls.from_dict(json.loads(text))

    def write(self, path):
        Path(path).write_text(self.to_json())


# --------------------------------------------------------------------------
# SVG
# --------------------------------------------------------------------------

def svg_line_chart(series: dict, x, title: str = "", xlabel: str = "", ylabel: str = "",
                   width: int = 640, height: int = 400) -> str:
    """Static line chart; ``series`` maps a legend name to y values over ``x``."""
    x = np.asarray(x, dtype=float)
    ys = {k: np.asarray(v, dtype=float) for k, v in series.items()}
    allv = np.concatenate([v[np.isfinite(v)] for v in ys.values()] + [np.zeros(0)])
    if allv.size == 0:
        allv = np.zeros(1)
    ml, mr, mt, mb = 60, 20, 30, 45
    pw, ph = width - ml - mr, height - mt - mb
    x0, x1 = float(x.min()), float(x.max())
    y0, y1 = float(allv.min()), float(allv.max())
    if x1 == x0:
        x1 = x0 + max(1.0, abs(x0) * 1e-3)
    if y1 == y0:
        pad = max(1.0, abs(y0) * 1e-3)
        y0, y1 = y0 - pad, y1 + pad
    sx = lambda v: ml + (v - x0) / (x1 - x0) * pw
    sy = lambda v: mt + ph - (v - y0) / (y1 - y0) * ph
    colors = ("#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b")
    out = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
           f'viewBox="0 0 {width} {height}" font-family="sans-serif" font-size="11">',
           f'<rect x="{ml}" y="{mt}" width="{pw}" height="{ph}" fill="none" stroke="#444"/>',
           f'<text x="{width / 2}" y="18" text-anchor="middle" font-size="13">{_esc(title)}</text>',
           f'<text x="{ml + pw / 2}" y="{height - 8}" text-anchor="middle">{_esc(xlabel)}</text>',
           f'<text x="14" y="{mt + ph / 2}" text-anchor="middle" '
           f'transform="rotate(-90 14 {mt + ph / 2})">{_esc(ylabel)}</text>']
    for frac in (0.0, 0.5, 1.0):
        xv, yv = x0 + frac * (x1 - x0), y0 + frac * (y1 - y0)
        out.append(f'<text x="{sx(xv):.1f}" y="{mt + ph + 14}" text-anchor="middle">{xv:.4g}</text>')
        out.append(f'<text x="{ml - 4}" y="{sy(yv) + 4:.1f}" text-anchor="end">{yv:.4g}</text>')
    for i, (name, y) in enumerate(ys.items()):
        ok = np.isfinite(y)
        pts = " ".join(f"{sx(a):.2f},{sy(b):.2f}" for a, b in zip(x[ok], y[ok]))
        c = colors[i % len(colors)]
        out.append(f'<polyline fill="none" stroke="{c}" stroke-width="1.5" points="{pts}"/>')
        out.append(f'<text x="{ml + 8}" y="{mt + 14 + 14 * i}" fill="{c}">{_esc(name)}</text>')
    out.append("</svg>")
    return "\n".join(out) + "\n"


def _esc(s: str) -> str:
    return s.replace("&", "&amp;").replace("<", "&lt;").replace(">", "&gt;")
