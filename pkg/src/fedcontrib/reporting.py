"""Canonical JSON/CSV output and a small SVG emitter (bar and scatter only)."""

from __future__ import annotations

import csv
import io
import json
import math
from html import escape
from pathlib import Path
from typing import Sequence

import numpy as np

FLOAT_DIGITS = 10


def canonical(obj):
    """Plain-Python copy of ``obj`` with floats rounded to 1e-10."""
    if isinstance(obj, dict):
        return {str(k): canonical(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [canonical(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [canonical(v) for v in obj.tolist()]
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        value = float(obj)
        if not math.isfinite(value):
            return None
        value = round(value, FLOAT_DIGITS)
        return 0.0 if value == 0 else value
    return obj


def dumps(obj) -> str:
    return json.dumps(canonical(obj), sort_keys=True, indent=2) + "\n"


def write_json(path: Path, obj) -> Path:
    path.write_text(dumps(obj), encoding="utf-8")
    return path


def write_csv(path: Path, header: Sequence[str], rows) -> Path:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    for row in rows:
        writer.writerow(canonical(list(row)))
    path.write_text(buf.getvalue(), encoding="utf-8")
    return path


_W, _H = 640, 400
_LEFT, _RIGHT, _TOP, _BOTTOM = 70, 20, 40, 90


def _frame(title: str, body: list[str]) -> str:
    head = (
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{_W}" height="{_H}" '
        f'viewBox="0 0 {_W} {_H}" font-family="sans-serif" font-size="11">'
    )
    title_el = f'<text x="{_W / 2:.1f}" y="22" text-anchor="middle" font-size="14">{escape(title)}</text>'
    return "\n".join([head, '<rect width="100%" height="100%" fill="white"/>', title_el, *body, "</svg>"]) + "\n"


def _ticks(lo: float, hi: float, count: int = 5) -> list[float]:
    if hi == lo:
        return [lo]
    return [lo + (hi - lo) * k / (count - 1) for k in range(count)]


def bar_chart(labels: Sequence[str], values: Sequence[float], title: str, ylabel: str = "") -> str:
    values = [float(v) for v in values]
    lo = min(0.0, *values) if values else 0.0
    hi = max(0.0, *values) if values else 1.0
    if hi == lo:
        hi = lo + 1.0
    plot_w = _W - _LEFT - _RIGHT
    plot_h = _H - _TOP - _BOTTOM

    def y_of(v: float) -> float:
        return _TOP + plot_h * (hi - v) / (hi - lo)

    body = [
        f'<line x1="{_LEFT}" y1="{_TOP}" x2="{_LEFT}" y2="{_TOP + plot_h}" stroke="black"/>',
        f'<line x1="{_LEFT}" y1="{y_of(0):.2f}" x2="{_W - _RIGHT}" y2="{y_of(0):.2f}" stroke="black"/>',
    ]
    for t in _ticks(lo, hi):
        body.append(
            f'<text x="{_LEFT - 6}" y="{y_of(t) + 4:.2f}" text-anchor="end">{t:.3g}</text>'
        )
    if ylabel:
        body.append(
            f'<text x="16" y="{_TOP + plot_h / 2:.1f}" text-anchor="middle" '
            f'transform="rotate(-90 16 {_TOP + plot_h / 2:.1f})">{escape(ylabel)}</text>'
        )
    slot = plot_w / max(1, len(values))
    for k, (label, v) in enumerate(zip(labels, values)):
        x = _LEFT + k * slot + slot * 0.15
        top, bottom = sorted((y_of(v), y_of(0)))
        fill = "#1f77b4" if v >= 0 else "#d62728"
        body.append(
            f'<rect x="{x:.2f}" y="{top:.2f}" width="{slot * 0.7:.2f}" height="{bottom - top:.2f}" fill="{fill}"/>'
        )
        cx = x + slot * 0.35
        body.append(
            f'<text x="{cx:.2f}" y="{_TOP + plot_h + 12}" text-anchor="end" '
            f'transform="rotate(-40 {cx:.2f} {_TOP + plot_h + 12})">{escape(str(label))}</text>'
        )
    return _frame(title, body)


def scatter_rows(
    row_labels: Sequence[str], points: Sequence[tuple[int, float]], title: str, xlabel: str = ""
) -> str:
    """One horizontal strip per label; ``points`` are (row index, x value).

    Vertical jitter inside a strip is a fixed function of the point's order,
    so the output is deterministic.
    """
    xs = [float(p[1]) for p in points] or [0.0]
    lo, hi = min(xs + [0.0]), max(xs + [0.0])
    if hi == lo:
        hi = lo + 1.0
    left = 180
    plot_w = _W - left - _RIGHT
    plot_h = _H - _TOP - 60
    strip = plot_h / max(1, len(row_labels))

    def x_of(v: float) -> float:
        return left + plot_w * (v - lo) / (hi - lo)

    body = [
        f'<line x1="{x_of(0):.2f}" y1="{_TOP}" x2="{x_of(0):.2f}" y2="{_TOP + plot_h}" stroke="#888"/>'
    ]
    for r, label in enumerate(row_labels):
        y = _TOP + strip * (r + 0.5)
        body.append(f'<text x="{left - 6}" y="{y + 4:.2f}" text-anchor="end">{escape(str(label))}</text>')
    for k, (r, v) in enumerate(points):
        jitter = ((k * 7919) % 97) / 97.0 - 0.5
        y = _TOP + strip * (r + 0.5 + 0.6 * jitter)
        body.append(f'<circle cx="{x_of(float(v)):.2f}" cy="{y:.2f}" r="2" fill="#1f77b4" fill-opacity="0.6"/>')
    axis_y = _TOP + plot_h + 14
    for t in _ticks(lo, hi):
        body.append(f'<text x="{x_of(t):.2f}" y="{axis_y}" text-anchor="middle">{t:.3g}</text>')
    if xlabel:
        body.append(f'<text x="{left + plot_w / 2:.1f}" y="{axis_y + 20}" text-anchor="middle">{escape(xlabel)}</text>')
    return _frame(title, body)
