"""Self-contained SVG plots: a grouped bar chart and a log-log scatter."""
from __future__ import annotations

import math
from xml.sax.saxutils import escape

W, H = 640, 400
PAD = 60
COLORS = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd")


def _doc(body: list[str], title: str) -> str:
    head = (f'<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" '
            f'viewBox="0 0 {W} {H}" font-family="sans-serif" font-size="12">')
    t = f'<text x="{W / 2:.1f}" y="20" text-anchor="middle" font-size="14">{escape(title)}</text>'
    return "\n".join([head, '<rect width="100%" height="100%" fill="white"/>', t, *body, "</svg>"]) + "\n"


def bar_chart(labels, series: dict, title: str = "") -> str:
    """Grouped bars, one group per label and one bar per series entry."""
    names = list(series)
    vals = [v for s in series.values() for v in s]
    top = max([abs(v) for v in vals] + [1e-300])
    x0, x1, y_mid = PAD, W - PAD / 2, H / 2
    scale = (H / 2 - PAD) / top
    group = (x1 - x0) / max(len(labels), 1)
    bw = 0.8 * group / max(len(names), 1)
    body = [f'<line x1="{x0}" y1="{y_mid}" x2="{x1}" y2="{y_mid}" stroke="black"/>']
    for i, lab in enumerate(labels):
        gx = x0 + i * group + 0.1 * group
        for j, name in enumerate(names):
            v = series[name][i]
            hgt = abs(v) * scale
            y = y_mid - hgt if v >= 0 else y_mid
            body.append(f'<rect x="{gx + j * bw:.2f}" y="{y:.2f}" width="{bw:.2f}" height="{hgt:.2f}" '
                        f'fill="{COLORS[j % len(COLORS)]}"><title>{escape(name)} {escape(lab)} = {v:.6g}'
                        f'</title></rect>')
        body.append(f'<text x="{x0 + (i + 0.5) * group:.2f}" y="{H - PAD / 2}" text-anchor="middle">'
                    f'{escape(lab)}</text>')
    for j, name in enumerate(names):
        body.append(f'<rect x="{W - 150}" y="{34 + 16 * j}" width="10" height="10" '
                    f'fill="{COLORS[j % len(COLORS)]}"/>')
        body.append(f'<text x="{W - 135}" y="{43 + 16 * j}">{escape(name)}</text>')
    body.append(f'<text x="{x0 - 8}" y="{PAD}" text-anchor="end">{top:.3g}</text>')
    body.append(f'<text x="{x0 - 8}" y="{H - PAD}" text-anchor="end">{-top:.3g}</text>')
    return _doc(body, title)


def loglog(series: dict, xlabel: str, ylabel: str, title: str = "", slope_one: bool = True) -> str:
    """Scatter with lines on log axes; ``series`` maps name -> [(x, y), ...] with positive entries."""
    pts = [(x, y) for s in series.values() for x, y in s if x > 0 and y > 0]
    if not pts:
        return _doc([f'<text x="{W / 2}" y="{H / 2}" text-anchor="middle">no positive data</text>'], title)
    lx = [math.log10(x) for x, _ in pts]
    ly = [math.log10(y) for _, y in pts]
    xlo, xhi = math.floor(min(lx)), math.ceil(max(lx))
    ylo, yhi = math.floor(min(ly)), math.ceil(max(ly))
    xhi, yhi = max(xhi, xlo + 1), max(yhi, ylo + 1)

    def X(v):
        return PAD + (math.log10(v) - xlo) / (xhi - xlo) * (W - 1.5 * PAD)

    def Y(v):
        return H - PAD - (math.log10(v) - ylo) / (yhi - ylo) * (H - 2 * PAD)

    body = [f'<rect x="{PAD}" y="{PAD}" width="{W - 1.5 * PAD}" height="{H - 2 * PAD}" fill="none" stroke="black"/>']
    for e in range(xlo, xhi + 1):
        body.append(f'<text x="{X(10.0 ** e):.2f}" y="{H - PAD + 16}" text-anchor="middle">1e{e}</text>')
    for e in range(ylo, yhi + 1):
        body.append(f'<text x="{PAD - 6}" y="{Y(10.0 ** e) + 4:.2f}" text-anchor="end">1e{e}</text>')
    body.append(f'<text x="{W / 2}" y="{H - 12}" text-anchor="middle">{escape(xlabel)}</text>')
    body.append(f'<text x="16" y="{H / 2}" text-anchor="middle" transform="rotate(-90 16 {H / 2})">'
                f'{escape(ylabel)}</text>')
    if slope_one:
        # reference line y = C x through the largest ratio
        c = max(y / x for x, y in pts)
        a, b = 10.0 ** xlo, 10.0 ** xhi
        a = max(a, 10.0 ** ylo / c)
        b = min(b, 10.0 ** yhi / c)
        if b > a:
            body.append(f'<line x1="{X(a):.2f}" y1="{Y(c * a):.2f}" x2="{X(b):.2f}" y2="{Y(c * b):.2f}" '
                        f'stroke="gray" stroke-dasharray="4 3"><title>slope 1, C = {c:.4g}</title></line>')
    for j, (name, s) in enumerate(series.items()):
        col = COLORS[j % len(COLORS)]
        good = sorted((x, y) for x, y in s if x > 0 and y > 0)
        if len(good) > 1:
            path = " ".join(f"{X(x):.2f},{Y(y):.2f}" for x, y in good)
            body.append(f'<polyline points="{path}" fill="none" stroke="{col}"/>')
        for x, y in good:
            body.append(f'<circle cx="{X(x):.2f}" cy="{Y(y):.2f}" r="3" fill="{col}"/>')
        body.append(f'<rect x="{W - 150}" y="{34 + 16 * j}" width="10" height="10" fill="{col}"/>')
        body.append(f'<text x="{W - 135}" y="{43 + 16 * j}">{escape(name)}</text>')
    return _doc(body, title)
