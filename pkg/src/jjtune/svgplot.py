"""Direct SVG chart generation: line/scatter charts with linear or log axes.

No plotting framework; emitted text is deterministic for golden files.
"""

import math
from dataclasses import dataclass, field

WIDTH = 640
HEIGHT = 420
MARGIN_L, MARGIN_R, MARGIN_T, MARGIN_B = 64, 16, 28, 44
PALETTE = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b")


@dataclass
class Series:
    label: str
    x: list
    y: list
    marker: bool = False
    line: bool = True
    color: str = ""


@dataclass
class Chart:
    title: str
    xlabel: str
    ylabel: str
    series: list = field(default_factory=list)
    logy: bool = False
    logx: bool = False


def _fmt(v):
    return f"{v:.6g}"


def _nice_ticks(lo, hi, n=5):
    if hi <= lo:
        hi = lo + 1.0
    span = hi - lo
    raw = span / max(n - 1, 1)
    mag = 10.0 ** math.floor(math.log10(raw))
    for mult in (1.0, 2.0, 5.0, 10.0):
        if raw <= mult * mag:
            step = mult * mag
            break
    start = math.ceil(lo / step) * step
    ticks = []
    v = start
    while v <= hi + 1e-9 * step:
        ticks.append(0.0 if abs(v) < 1e-12 * step else v)
        v += step
    return ticks


def _log_ticks(lo, hi):
    lo_e = math.floor(math.log10(lo))
    hi_e = math.ceil(math.log10(hi))
    return [10.0 ** e for e in range(lo_e, hi_e + 1)]


def render(chart):
    xs = [v for s in chart.series for v in s.x]
    ys = [v for s in chart.series for v in s.y]
    if not xs:
        xs = ys = [0.0, 1.0]
    if chart.logx:
        xs = [v for v in xs if v > 0] or [1.0]
    if chart.logy:
        ys = [v for v in ys if v > 0] or [1.0]
    x_lo, x_hi = min(xs), max(xs)
    y_lo, y_hi = min(ys), max(ys)
    if x_lo == x_hi:
        x_lo, x_hi = x_lo - 0.5, x_hi + 0.5
    if y_lo == y_hi:
        y_lo, y_hi = y_lo - 0.5, y_hi + 0.5
    if not chart.logy:
        pad = 0.05 * (y_hi - y_lo)
        y_lo, y_hi = y_lo - pad, y_hi + pad

    plot_w = WIDTH - MARGIN_L - MARGIN_R
    plot_h = HEIGHT - MARGIN_T - MARGIN_B

    def tx(v):
        if chart.logx:
            f = (math.log10(v) - math.log10(x_lo)) / (math.log10(x_hi) - math.log10(x_lo))
        else:
            f = (v - x_lo) / (x_hi - x_lo)
        return MARGIN_L + f * plot_w

    def ty(v):
        if chart.logy:
            f = (math.log10(v) - math.log10(y_lo)) / (math.log10(y_hi) - math.log10(y_lo))
        else:
            f = (v - y_lo) / (y_hi - y_lo)
        return MARGIN_T + (1.0 - f) * plot_h

    parts = []
    parts.append(f'<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" '
                 f'height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}">')
    parts.append(f'<rect x="0" y="0" width="{WIDTH}" height="{HEIGHT}" fill="white"/>')
    parts.append(f'<text x="{WIDTH/2:.1f}" y="18" text-anchor="middle" '
                 f'font-family="sans-serif" font-size="13">{chart.title}</text>')

    x_ticks = _log_ticks(x_lo, x_hi) if chart.logx else _nice_ticks(x_lo, x_hi)
    y_ticks = _log_ticks(y_lo, y_hi) if chart.logy else _nice_ticks(y_lo, y_hi)
    for v in x_ticks:
        if not (x_lo <= v <= x_hi):
            continue
        x = tx(v)
        parts.append(f'<line x1="{x:.1f}" y1="{MARGIN_T}" x2="{x:.1f}" '
                     f'y2="{HEIGHT - MARGIN_B}" stroke="#dddddd" stroke-width="1"/>')
        parts.append(f'<text x="{x:.1f}" y="{HEIGHT - MARGIN_B + 16}" '
                     f'text-anchor="middle" font-family="sans-serif" '
                     f'font-size="11">{_fmt(v)}</text>')
    for v in y_ticks:
        if not (y_lo <= v <= y_hi):
            continue
        y = ty(v)
        parts.append(f'<line x1="{MARGIN_L}" y1="{y:.1f}" x2="{WIDTH - MARGIN_R}" '
                     f'y2="{y:.1f}" stroke="#dddddd" stroke-width="1"/>')
        parts.append(f'<text x="{MARGIN_L - 6}" y="{y + 4:.1f}" text-anchor="end" '
                     f'font-family="sans-serif" font-size="11">{_fmt(v)}</text>')

    parts.append(f'<rect x="{MARGIN_L}" y="{MARGIN_T}" width="{plot_w}" '
                 f'height="{plot_h}" fill="none" stroke="#333333"/>')
    parts.append(f'<text x="{MARGIN_L + plot_w/2:.1f}" y="{HEIGHT - 8}" '
                 f'text-anchor="middle" font-family="sans-serif" '
                 f'font-size="12">{chart.xlabel}</text>')
    parts.append(f'<text x="16" y="{MARGIN_T + plot_h/2:.1f}" text-anchor="middle" '
                 f'font-family="sans-serif" font-size="12" '
                 f'transform="rotate(-90 16 {MARGIN_T + plot_h/2:.1f})">'
                 f'{chart.ylabel}</text>')

    for i, s in enumerate(chart.series):
        color = s.color or PALETTE[i % len(PALETTE)]
        pts = [(tx(x), ty(y)) for x, y in zip(s.x, s.y)
               if (not chart.logx or x > 0) and (not chart.logy or y > 0)]
        if s.line and len(pts) > 1:
            path = " ".join(f"{x:.2f},{y:.2f}" for x, y in pts)
            parts.append(f'<polyline points="{path}" fill="none" '
                         f'stroke="{color}" stroke-width="1.5"/>')
        if s.marker:
            for x, y in pts:
                parts.append(f'<circle cx="{x:.2f}" cy="{y:.2f}" r="2.5" '
                             f'fill="{color}"/>')
        parts.append(f'<text x="{WIDTH - MARGIN_R - 6}" '
                     f'y="{MARGIN_T + 16 + 14 * i}" text-anchor="end" '
                     f'font-family="sans-serif" font-size="11" '
                     f'fill="{color}">{s.label}</text>')

    parts.append("</svg>")
    return "\n".join(parts) + "\n"


def trace_chart(trace, title="resistance trace"):
    hours = [s.t / 3600.0 for s in trace.samples]
    return render(Chart(title=title, xlabel="time [h]", ylabel="R [ohm]",
                        series=[Series("R", hours, trace.resistances,
                                       marker=True)]))


def fit_overlay_chart(t, y, model_y, title="fit overlay", ylabel="dR [%]"):
    return render(Chart(title=title, xlabel="time [s]", ylabel=ylabel,
                        series=[Series("data", list(t), list(y), marker=True,
                                       line=False),
                                Series("model", list(t), list(model_y))]))


def residual_chart(t, resid, title="fit residuals"):
    return render(Chart(title=title, xlabel="time [s]", ylabel="residual",
                        series=[Series("residual", list(t), list(resid),
                                       marker=True, line=False)]))


def rate_semilog_chart(v, alpha, model_alpha=None, title="rate vs amplitude"):
    series = [Series("alpha(V)", list(v), list(alpha), marker=True, line=False)]
    if model_alpha is not None:
        series.append(Series("exponential law", list(v), list(model_alpha)))
    return render(Chart(title=title, xlabel="amplitude [V]",
                        ylabel="alpha [1/s]", series=series, logy=True))
