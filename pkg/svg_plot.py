# svg_plot.py
import logging
import math
import os
from html import escape
from typing import Dict, Optional, Sequence

from utils import atomic_write_text

log = logging.getLogger("sandwich.svg")

TEMPLATE_DIR = os.path.join(os.path.dirname(os.path.abspath(__file__)), "templates")
PALETTE = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b")
WIDTH, HEIGHT = 640, 420
MARGIN = {"left": 70, "right": 20, "top": 40, "bottom": 50}

FALLBACK_FRAME = ('<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}">'
                  "{series}{legend}</svg>")
FALLBACK_SERIES = '<polyline fill="none" stroke="{color}" points="{points}"/>{markers}'


class _Default(dict):
    def __missing__(self, key):
        return ""


def _template(name: str, fallback: str) -> str:
    try:
        with open(os.path.join(TEMPLATE_DIR, name), "r", encoding="utf-8") as f:
            return f.read()
    except OSError:
        log.exception("SVG template %s missing, using the built-in one", name)
        return fallback


def _fmt(v: float) -> str:
    return f"{v:.4g}"


def _span(values):
    lo, hi = min(values), max(values)
    if hi == lo:
        pad = abs(lo) * 0.1 or 1.0
        return lo - pad, hi + pad
    return lo, hi


def line_plot(path: str, series: Dict[str, Sequence], title: str = "", xlabel: str = "", ylabel: str = "",
              scatter: bool = False, log_y: bool = False) -> Optional[str]:
    """
    series: {label: (xs, ys)}. Non-finite points (and non-positive ones with log_y) are skipped.
    Writes the SVG to path and returns it; None when nothing is plottable.
    """
    clean = {}
    for label, (xs, ys) in series.items():
        pts = [(float(x), float(y)) for x, y in zip(xs, ys)
               if x is not None and y is not None and math.isfinite(float(x)) and math.isfinite(float(y))
               and (not log_y or float(y) > 0)]
        if pts:
            clean[label] = [(x, math.log10(y) if log_y else y) for x, y in pts]
    if not clean:
        log.warning("nothing to plot for %s", path)
        return None

    x0, x1 = _span([x for pts in clean.values() for x, _ in pts])
    y0, y1 = _span([y for pts in clean.values() for _, y in pts])
    left, right = MARGIN["left"], WIDTH - MARGIN["right"]
    top, bottom = MARGIN["top"], HEIGHT - MARGIN["bottom"]

    def px(x):
        return left + (x - x0) / (x1 - x0) * (right - left)

    def py(y):
        return bottom - (y - y0) / (y1 - y0) * (bottom - top)

    ticks = []
    for i in range(5):
        xv = x0 + (x1 - x0) * i / 4
        yv = y0 + (y1 - y0) * i / 4
        ylab = _fmt(10 ** yv) if log_y else _fmt(yv)
        ticks.append(f'<text x="{px(xv):.1f}" y="{bottom + 16}" text-anchor="middle">{_fmt(xv)}</text>')
        ticks.append(f'<text x="{left - 6}" y="{py(yv) + 4:.1f}" text-anchor="end">{ylab}</text>')

    series_tpl = _template("series.svg.txt", FALLBACK_SERIES)
    parts, legend = [], []
    for i, (label, pts) in enumerate(clean.items()):
        color = PALETTE[i % len(PALETTE)]
        coords = " ".join(f"{px(x):.1f},{py(y):.1f}" for x, y in pts)
        markers = "\n".join(f'<circle cx="{px(x):.1f}" cy="{py(y):.1f}" r="3" fill="{color}"/>' for x, y in pts) \
            if scatter or len(pts) == 1 else ""
        parts.append(series_tpl.format_map(_Default(color=color, points=coords if not scatter else "",
                                                    markers=markers)))
        ly = top + 14 * i
        legend.append(f'<rect x="{right - 150}" y="{ly - 9}" width="10" height="10" fill="{color}"/>'
                      f'<text x="{right - 135}" y="{ly}">{escape(str(label))}</text>')

    frame = _template("line_plot.svg.txt", FALLBACK_FRAME)
    svg = frame.format_map(_Default(
        width=WIDTH, height=HEIGHT, left=left, right=right, top=top, bottom=bottom,
        title_x=WIDTH // 2, xlabel_y=HEIGHT - 12, ylabel_y=(top + bottom) // 2,
        title=escape(title), xlabel=escape(xlabel), ylabel=escape(ylabel + (" (log10)" if log_y else "")),
        ticks="\n".join(ticks), series="\n".join(parts), legend="\n".join(legend),
    ))
    atomic_write_text(path, svg)
    log.debug("plot written: %s (%d series)", path, len(clean))
    return svg
