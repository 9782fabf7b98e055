"""Experiment reports and their CSV/SVG serialisation."""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np


@dataclass
class ExperimentReport:
    name: str
    columns: tuple
    rows: list = field(default_factory=list)
    summary: list = field(default_factory=list)  # ordered (key, value) pairs
    passed: bool = True
    wall_time: float = 0.0  # kept out of every CSV so outputs are reproducible
    plot: tuple | None = None  # (x column, y column) for the SVG

    def add_summary(self, key, value):
        self.summary.append((key, value))

    def column(self, name):
        i = self.columns.index(name)
        return [r[i] for r in self.rows]

    @property
    def max_ratio(self) -> float:
        if "ratio" not in self.columns or not self.rows:
            return math.nan
        return max(float(v) for v in self.column("ratio"))


def fmt(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return str(v)


def csv_text(columns, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    for r in rows:
        w.writerow([fmt(v) for v in r])
    return buf.getvalue()


def emit_csv(report: ExperimentReport, path) -> None:
    """Rows CSV at ``path``; the summary goes next to it as ``<stem>_summary.csv``."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(csv_text(report.columns, report.rows), encoding="utf-8")
    summary_path = path.with_name(path.stem + "_summary.csv")
    summary_path.write_text(csv_text(("key", "value"), report.summary), encoding="utf-8")


def read_csv(path):
    """(header, rows) with every cell as text."""
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    return tuple(rows[0]), rows[1:]


def _ticks(lo, hi):
    return [10.0**k for k in range(math.floor(lo), math.ceil(hi) + 1)]


def emit_svg_plot(report: ExperimentReport, path, width=640, height=420) -> None:
    """Log-log scatter of the report's plot columns (positive values only)."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    xs, ys = [], []
    if report.plot and report.rows:
        xcol, ycol = report.plot
        for x, y in zip(report.column(xcol), report.column(ycol)):
            try:
                x, y = float(x), float(y)
            except (TypeError, ValueError):
                continue
            if x > 0 and y > 0 and math.isfinite(x) and math.isfinite(y):
                xs.append(math.log10(x))
                ys.append(math.log10(y))
    pad = 50
    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
        f'viewBox="0 0 {width} {height}">',
        f'<rect width="{width}" height="{height}" fill="white"/>',
        f'<text x="{width / 2}" y="20" text-anchor="middle" font-size="14">{report.name}</text>',
    ]
    if xs:
        x0, x1 = min(xs), max(xs)
        y0, y1 = min(ys), max(ys)
        x1 = x1 if x1 > x0 else x0 + 1.0
        y1 = y1 if y1 > y0 else y0 + 1.0

        def px(v):
            return pad + (v - x0) / (x1 - x0) * (width - 2 * pad)

        def py(v):
            return height - pad - (v - y0) / (y1 - y0) * (height - 2 * pad)

        parts.append(
            f'<rect x="{pad}" y="{pad}" width="{width - 2 * pad}" height="{height - 2 * pad}" '
            'fill="none" stroke="black"/>'
        )
        for t in _ticks(x0, x1):
            lt = math.log10(t)
            if x0 <= lt <= x1:
                parts.append(f'<text x="{px(lt):.1f}" y="{height - pad + 16}" font-size="10" '
                             f'text-anchor="middle">1e{int(lt)}</text>')
        for t in _ticks(y0, y1):
            lt = math.log10(t)
            if y0 <= lt <= y1:
                parts.append(f'<text x="{pad - 6}" y="{py(lt):.1f}" font-size="10" '
                             f'text-anchor="end">1e{int(lt)}</text>')
        for x, y in zip(xs, ys):
            parts.append(f'<circle cx="{px(x):.2f}" cy="{py(y):.2f}" r="2" fill="steelblue"/>')
        parts.append(f'<text x="{width / 2}" y="{height - 10}" text-anchor="middle" '
                     f'font-size="12">{report.plot[0]}</text>')
        parts.append(f'<text x="14" y="{height / 2}" font-size="12" '
                     f'transform="rotate(-90 14 {height / 2})" text-anchor="middle">{report.plot[1]}</text>')
    else:
        parts.append(f'<text x="{width / 2}" y="{height / 2}" text-anchor="middle">no positive data</text>')
    parts.append("</svg>")
    path.write_text("\n".join(parts) + "\n", encoding="utf-8")
