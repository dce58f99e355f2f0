"""Dependency-free SVG charts for the analysis artifacts.

All geometry derives from nearest-rank statistics and fixed-precision
coordinate formatting, so the emitted bytes are identical across runs
with the same inputs.
"""
from __future__ import annotations

from .stats import percentile_nearest_rank

_F = "{:.3f}".format

_PALETTE = ("#4878d0", "#ee854a", "#6acc64", "#d65f5f", "#956cb4",
            "#8c613c", "#dc7ec0")


def _svg(width, height, body: list[str]) -> str:
    head = (f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" '
            f'height="{height}" viewBox="0 0 {width} {height}">')
    return "\n".join([head, *body, "</svg>"]) + "\n"


def _text(x, y, s, size=12, anchor="middle"):
    return (f'<text x="{_F(x)}" y="{_F(y)}" font-size="{size}" '
            f'font-family="sans-serif" text-anchor="{anchor}">{s}</text>')


def _axis_scale(lo, hi):
    if hi <= lo:
        hi = lo + 1.0
    return lo, hi


def box_plot_svg(labels, groups, title="", ylabel="", width=640, height=420):
    """Box plot with nearest-rank quartiles; whiskers at min/max."""
    margin_l, margin_b, margin_t = 60, 50, 40
    plot_w, plot_h = width - margin_l - 20, height - margin_t - margin_b
    all_vals = [v for g in groups for v in g]
    lo, hi = _axis_scale(min(all_vals, default=0.0), max(all_vals, default=1.0))
    span = hi - lo

    def ypix(v):
        return margin_t + plot_h * (1.0 - (v - lo) / span)

    body = [_text(width / 2, 20, title, 14)]
    body.append(_text(14, margin_t + plot_h / 2, ylabel, 12))
    body.append(f'<line x1="{margin_l}" y1="{margin_t}" x2="{margin_l}" '
                f'y2="{margin_t + plot_h}" stroke="black"/>')
    body.append(f'<line x1="{margin_l}" y1="{margin_t + plot_h}" '
                f'x2="{margin_l + plot_w}" y2="{margin_t + plot_h}" stroke="black"/>')
    for k in range(5):
        v = lo + span * k / 4
        body.append(_text(margin_l - 6, ypix(v) + 4, f"{v:.3g}", 10, "end"))

    slot = plot_w / max(len(groups), 1)
    for i, (label, g) in enumerate(zip(labels, groups)):
        color = _PALETTE[i % len(_PALETTE)]
        cx = margin_l + slot * (i + 0.5)
        bw = slot * 0.4
        if g:
            q1 = percentile_nearest_rank(g, 25)
            q2 = percentile_nearest_rank(g, 50)
            q3 = percentile_nearest_rank(g, 75)
            wlo, whi = min(g), max(g)
            body.append(f'<line x1="{_F(cx)}" y1="{_F(ypix(wlo))}" x2="{_F(cx)}" '
                        f'y2="{_F(ypix(whi))}" stroke="{color}"/>')
            body.append(f'<rect x="{_F(cx - bw / 2)}" y="{_F(ypix(q3))}" '
                        f'width="{_F(bw)}" height="{_F(max(ypix(q1) - ypix(q3), 0.5))}" '
                        f'fill="{color}" fill-opacity="0.45" stroke="{color}"/>')
            body.append(f'<line x1="{_F(cx - bw / 2)}" y1="{_F(ypix(q2))}" '
                        f'x2="{_F(cx + bw / 2)}" y2="{_F(ypix(q2))}" '
                        f'stroke="{color}" stroke-width="2"/>')
        body.append(_text(cx, margin_t + plot_h + 18, label, 11))
    return _svg(width, height, body)


def bar_plot_svg(labels, values, title="", ylabel="", width=640, height=420,
                 value_fmt="{:.1%}".format):
    margin_l, margin_b, margin_t = 60, 50, 40
    plot_w, plot_h = width - margin_l - 20, height - margin_t - margin_b
    lo, hi = 0.0, max(max(values, default=1.0), 1e-9)
    body = [_text(width / 2, 20, title, 14), _text(14, margin_t + plot_h / 2, ylabel, 12)]
    body.append(f'<line x1="{margin_l}" y1="{margin_t + plot_h}" '
                f'x2="{margin_l + plot_w}" y2="{margin_t + plot_h}" stroke="black"/>')
    slot = plot_w / max(len(values), 1)
    for i, (label, v) in enumerate(zip(labels, values)):
        color = _PALETTE[i % len(_PALETTE)]
        cx = margin_l + slot * (i + 0.5)
        bw = slot * 0.5
        h = plot_h * (v - lo) / (hi - lo)
        body.append(f'<rect x="{_F(cx - bw / 2)}" y="{_F(margin_t + plot_h - h)}" '
                    f'width="{_F(bw)}" height="{_F(h)}" fill="{color}"/>')
        body.append(_text(cx, margin_t + plot_h - h - 6, value_fmt(v), 10))
        body.append(_text(cx, margin_t + plot_h + 18, label, 11))
    return _svg(width, height, body)


def grid_heat_svg(cells, dims, bounds, title="", width=520, height=540):
    """Occupancy/fitness map of a projected archive.

    ``cells`` maps (i, j) -> fitness; higher fitness renders darker.
    """
    margin, head = 20, 40
    side = min(width - 2 * margin, height - head - margin)
    px = side / dims[0]
    fits = list(cells.values())
    lo, hi = _axis_scale(min(fits, default=-1.0), max(fits, default=0.0))
    body = [_text(width / 2, 20, title, 14)]
    body.append(f'<rect x="{margin}" y="{head}" width="{_F(side)}" '
                f'height="{_F(side)}" fill="#f4f4f4" stroke="black"/>')
    for (i, j), fit in sorted(cells.items()):
        shade = 1.0 - 0.85 * (fit - lo) / (hi - lo)
        level = int(round(shade * 255))
        color = f"rgb({level},{level},255)"
        x = margin + i * px
        y = head + side - (j + 1) * px
        body.append(f'<rect x="{_F(x)}" y="{_F(y)}" width="{_F(px)}" '
                    f'height="{_F(px)}" fill="{color}"/>')
    return _svg(width, height, body)


def modulate_svg(points, title="", width=560, height=580):
    """Skill endpoints: radius = feasible pattern count, shade = error.

    ``points`` is a list of (x, y, count, err).
    """
    margin, head = 30, 40
    side = min(width - 2 * margin, height - head - margin)
    xs = [p[0] for p in points] or [0.0]
    ys = [p[1] for p in points] or [0.0]
    lim = max(max(map(abs, xs)), max(map(abs, ys)), 0.1) * 1.05
    cmax = max((p[2] for p in points), default=1) or 1
    body = [_text(width / 2, 20, title, 14)]
    body.append(f'<rect x="{margin}" y="{head}" width="{_F(side)}" '
                f'height="{_F(side)}" fill="#fbfbfb" stroke="black"/>')

    def pix(x, y):
        return (margin + side * (x + lim) / (2 * lim),
                head + side * (1 - (y + lim) / (2 * lim)))

    for x, y, count, err in points:
        cx, cy = pix(x, y)
        radius = 1.0 + 5.0 * count / cmax
        shade = max(0.0, min(1.0, err / 0.3))
        level = int(round(60 + shade * 195))
        body.append(f'<circle cx="{_F(cx)}" cy="{_F(cy)}" r="{_F(radius)}" '
                    f'fill="rgb({level},{255 - level},90)" fill-opacity="0.7"/>')
    return _svg(width, height, body)
