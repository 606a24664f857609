"""Deterministic CSV and SVG emission.

Floats are written with a fixed format so reruns with the same config and
seeds produce byte-identical files; wall-time columns are the explicit
exception and carry a ``_s`` suffix so tooling can strip them before
comparison. Charts are hand-written SVG with the plotted table embedded in
a leading comment, which keeps them self-contained and reproducible.
"""
from __future__ import annotations

from pathlib import Path
from typing import Sequence

TIMING_SUFFIX = "_s"


def fmt_value(v) -> str:
    if isinstance(v, float):
        return f"{v:.6f}"
    return str(v)


def write_csv(path: str | Path, header: Sequence[str], rows: Sequence[Sequence], config_hash: str) -> None:
    """Write rows with a header and a trailing config_hash column."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    lines = [",".join([*header, "config_hash"])]
    for row in rows:
        lines.append(",".join([*(fmt_value(v) for v in row), config_hash]))
    path.write_text("\n".join(lines) + "\n")


def strip_timing_columns(csv_text: str) -> str:
    """Drop ``*_s`` columns; used when comparing reruns for byte equality."""
    lines = csv_text.strip().split("\n")
    header = lines[0].split(",")
    keep = [i for i, name in enumerate(header) if not name.endswith(TIMING_SUFFIX)]
    out = []
    for line in lines:
        cells = line.split(",")
        out.append(",".join(cells[i] for i in keep))
    return "\n".join(out) + "\n"


def svg_line_chart(path: str | Path, title: str, x_label: str, y_label: str,
                   series: dict[str, tuple[Sequence[float], Sequence[float]]],
                   width: int = 640, height: int = 420) -> None:
    """Minimal multi-series line chart with the data table in a comment."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    pad_l, pad_r, pad_t, pad_b = 60, 150, 40, 50
    plot_w, plot_h = width - pad_l - pad_r, height - pad_t - pad_b
    xs_all = [x for xs, _ in series.values() for x in xs]
    ys_all = [y for _, ys in series.values() for y in ys]
    if not xs_all:
        raise ValueError("svg_line_chart needs at least one point")
    x_lo, x_hi = min(xs_all), max(xs_all)
    y_lo, y_hi = min(ys_all), max(ys_all)
    if x_hi == x_lo:
        x_hi = x_lo + 1.0
    if y_hi == y_lo:
        y_hi = y_lo + 1.0

    def px(x: float) -> float:
        return pad_l + (x - x_lo) / (x_hi - x_lo) * plot_w

    def py(y: float) -> float:
        return pad_t + (1.0 - (y - y_lo) / (y_hi - y_lo)) * plot_h

    colors = ["#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b"]
    table = ["series,x,y"]
    for name, (xs, ys) in series.items():
        for x, y in zip(xs, ys):
            table.append(f"{name},{fmt_value(float(x))},{fmt_value(float(y))}")
    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}">',
        "<!-- data\n" + "\n".join(table) + "\n-->",
        f'<rect width="{width}" height="{height}" fill="white"/>',
        f'<text x="{width / 2:.0f}" y="24" text-anchor="middle" font-size="16">{title}</text>',
        f'<text x="{pad_l + plot_w / 2:.0f}" y="{height - 12}" text-anchor="middle" font-size="12">{x_label}</text>',
        f'<text x="18" y="{pad_t + plot_h / 2:.0f}" text-anchor="middle" font-size="12" '
        f'transform="rotate(-90 18 {pad_t + plot_h / 2:.0f})">{y_label}</text>',
        f'<rect x="{pad_l}" y="{pad_t}" width="{plot_w}" height="{plot_h}" fill="none" stroke="#999"/>',
    ]
    for tick in range(5):
        frac = tick / 4
        xv = x_lo + frac * (x_hi - x_lo)
        yv = y_lo + frac * (y_hi - y_lo)
        parts.append(f'<text x="{px(xv):.1f}" y="{height - pad_b + 16}" text-anchor="middle" '
                     f'font-size="10">{xv:.3g}</text>')
        parts.append(f'<text x="{pad_l - 6}" y="{py(yv):.1f}" text-anchor="end" '
                     f'font-size="10" dominant-baseline="middle">{yv:.3g}</text>')
    for i, (name, (xs, ys)) in enumerate(series.items()):
        color = colors[i % len(colors)]
        points = " ".join(f"{px(float(x)):.1f},{py(float(y)):.1f}" for x, y in zip(xs, ys))
        parts.append(f'<polyline points="{points}" fill="none" stroke="{color}" stroke-width="2"/>')
        ly = pad_t + 16 * i
        parts.append(f'<line x1="{width - pad_r + 8}" y1="{ly}" x2="{width - pad_r + 28}" y2="{ly}" '
                     f'stroke="{color}" stroke-width="2"/>')
        parts.append(f'<text x="{width - pad_r + 32}" y="{ly + 4}" font-size="11">{name}</text>')
    parts.append("</svg>")
    path.write_text("\n".join(parts) + "\n")
