"""Sweep tables, summaries and an SVG line chart."""

from __future__ import annotations

import csv
import io
import math
from xml.sax.saxutils import escape

from .mapper import ALGORITHMS, HeightEstimate, evaluate

SWEEP_COLUMNS = ("init_c_dbhz", "algorithm", "converged", "point_m", "range_low_m", "range_high_m",
                 "iterations")

SERIES_COLOURS = {"4plb": "#1b6ca8", "4pl": "#e07b39", "hinge": "#3a9a5b", "bayes": "#b8405e"}


def _num(v):
    if v is None or not math.isfinite(v):
        return ""
    return repr(float(v))


def sweep_rows_to_csv(rows):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(SWEEP_COLUMNS)
    for r in rows:
        e = r.estimate
        if isinstance(e, HeightEstimate):
            lo, hi, iters = _num(e.range_low), _num(e.range_high), str(e.iterations)
        else:
            lo = hi = iters = ""
        w.writerow([_num(r.init_c), r.algorithm, "true" if e.converged else "false", _num(e.point),
                    lo, hi, iters])
    return buf.getvalue()


def read_sweep_csv(text):
    """Parse a sweep CSV back into dicts with typed values."""
    out = []
    for row in csv.DictReader(io.StringIO(text)):
        def f(key):
            return float(row[key]) if row[key] else float("nan")
        out.append({
            "init_c_dbhz": f("init_c_dbhz"),
            "algorithm": row["algorithm"],
            "converged": row["converged"] == "true",
            "point_m": f("point_m"),
            "range_low_m": f("range_low_m"),
            "range_high_m": f("range_high_m"),
            "iterations": int(row["iterations"]) if row["iterations"] else None,
        })
    return out


def sweep_summary(rows, truth=None):
    """Per-algorithm convergence count and spread; RMSE when ``truth`` is known."""
    summary = {}
    for algo in ALGORITHMS:
        ests = [r.estimate for r in rows if r.algorithm == algo]
        if not ests:
            continue
        rep = evaluate(ests, truth if truth is not None else 0.0).to_dict()
        if truth is None:
            rep["rmse"] = None
        summary[algo] = rep
    return summary


def _ticks(lo, hi, n=5):
    if hi <= lo:
        return [lo]
    raw = (hi - lo) / n
    mag = 10 ** math.floor(math.log10(raw))
    step = min((m * mag for m in (1, 2, 5, 10) if m * mag >= raw), default=10 * mag)
    first = math.ceil(lo / step) * step
    return [first + k * step for k in range(int((hi - first) / step + 1e-9) + 1)]


def sweep_svg(rows, truth=None, width=640, height=400):
    """Point estimate against initial threshold, one polyline per algorithm.

    Non-converged estimates break their series.  The true height, when
    given, is drawn as a horizontal dashed rule.
    """
    margin = dict(left=60, right=110, top=20, bottom=45)
    series = {}
    for r in rows:
        series.setdefault(r.algorithm, []).append(
            (r.init_c, r.estimate.point if r.estimate.converged else float("nan")))
    xs = [x for pts in series.values() for x, _ in pts]
    ys = [y for pts in series.values() for _, y in pts if math.isfinite(y)]
    if truth is not None:
        ys.append(truth)
    x_lo, x_hi = (min(xs), max(xs)) if xs else (0.0, 1.0)
    y_lo, y_hi = (min(ys), max(ys)) if ys else (0.0, 1.0)
    if x_hi == x_lo:
        x_lo, x_hi = x_lo - 1.0, x_hi + 1.0
    pad = 0.05 * (y_hi - y_lo) or 1.0
    y_lo, y_hi = y_lo - pad, y_hi + pad
    pw = width - margin["left"] - margin["right"]
    ph = height - margin["top"] - margin["bottom"]

    def px(x):
        return margin["left"] + (x - x_lo) / (x_hi - x_lo) * pw

    def py(y):
        return margin["top"] + (y_hi - y) / (y_hi - y_lo) * ph

    out = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
        f'viewBox="0 0 {width} {height}" font-family="sans-serif" font-size="11">',
        f'<rect x="{margin["left"]}" y="{margin["top"]}" width="{pw}" height="{ph}" '
        'fill="none" stroke="#444"/>',
    ]
    for t in _ticks(x_lo, x_hi):
        out.append(f'<text x="{px(t):.2f}" y="{height - margin["bottom"] + 15}" '
                   f'text-anchor="middle">{t:g}</text>')
    for t in _ticks(y_lo, y_hi):
        out.append(f'<text x="{margin["left"] - 6}" y="{py(t) + 4:.2f}" text-anchor="end">{t:g}</text>')
    out.append(f'<text x="{margin["left"] + pw / 2:.2f}" y="{height - 8}" text-anchor="middle">'
               'initial classifier threshold c (dB-Hz)</text>')
    out.append(f'<text x="14" y="{margin["top"] + ph / 2:.2f}" text-anchor="middle" '
               f'transform="rotate(-90 14 {margin["top"] + ph / 2:.2f})">estimated height (m)</text>')
    if truth is not None:
        out.append(f'<line class="truth" x1="{margin["left"]}" x2="{margin["left"] + pw}" '
                   f'y1="{py(truth):.2f}" y2="{py(truth):.2f}" stroke="#000" stroke-dasharray="6 4"/>')

    for i, (algo, pts) in enumerate(series.items()):
        colour = SERIES_COLOURS.get(algo, "#666")
        out.append(f'<g class="series" data-algorithm="{escape(algo)}" stroke="{colour}" fill="{colour}">')
        run = []
        for x, y in pts + [(None, float("nan"))]:
            if math.isfinite(y):
                run.append(f"{px(x):.2f},{py(y):.2f}")
                continue
            if len(run) > 1:
                out.append(f'<polyline fill="none" stroke-width="1.5" points="{" ".join(run)}"/>')
            for p in run:
                cx, cy = p.split(",")
                out.append(f'<circle cx="{cx}" cy="{cy}" r="2.5"/>')
            run = []
        out.append("</g>")
        ly = margin["top"] + 14 + 16 * i
        lx = margin["left"] + pw + 12
        out.append(f'<line x1="{lx}" x2="{lx + 18}" y1="{ly - 4}" y2="{ly - 4}" stroke="{colour}" '
                   f'stroke-width="2"/><text x="{lx + 24}" y="{ly}">{escape(algo)}</text>')
    out.append("</svg>")
    return "\n".join(out) + "\n"
