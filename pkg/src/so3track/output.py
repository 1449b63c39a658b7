"""CSV trajectory output and native SVG polyline charts."""

from __future__ import annotations

import math
from pathlib import Path

import numpy as np


def _fmt(v: float) -> str:
    return format(float(v), ".17g")


def write_csv(path, arc, footer_lines=()) -> None:
    """Write an arc as CSV: header, one row per sample, '#' footer lines.

    Column order is t, j, then the arc's recorded columns.  Output is a pure
    function of the arc, so identical runs give byte-identical files.
    """
    path = Path(path)
    int_cols = {"in_jump_set"}
    with path.open("w", newline="\n") as f:
        f.write("t,j," + ",".join(arc.columns) + "\n")
        for i in range(len(arc)):
            cells = [_fmt(arc.t[i]), str(int(arc.j[i]))]
            for name, v in zip(arc.columns, arc.data[i]):
                cells.append(str(int(v)) if name in int_cols else _fmt(v))
            f.write(",".join(cells) + "\n")
        for line in footer_lines:
            f.write(f"# {line}\n")


_PALETTE = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b")


def svg_line_chart(path, title: str, xlabel: str, ylabel: str, series,
                   width: int = 720, height: int = 440, max_points: int = 1500) -> None:
    """Minimal polyline chart; `series` is a list of (name, x, y) arrays."""
    path = Path(path)
    ml, mr, mt, mb = 64, 16, 34, 46
    pw, ph = width - ml - mr, height - mt - mb
    xs = [np.asarray(s[1], dtype=float) for s in series]
    ys = [np.asarray(s[2], dtype=float) for s in series]
    x_min = min(float(x.min()) for x in xs if x.size)
    x_max = max(float(x.max()) for x in xs if x.size)
    y_min = min(float(y.min()) for y in ys if y.size)
    y_max = max(float(y.max()) for y in ys if y.size)
    if x_max == x_min:
        x_max = x_min + 1.0
    if y_max == y_min:
        y_max = y_min + 1.0
    pad = 0.04 * (y_max - y_min)
    y_min -= pad
    y_max += pad

    def px(x):
        return ml + (x - x_min) / (x_max - x_min) * pw

    def py(y):
        return mt + (y_max - y) / (y_max - y_min) * ph

    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
        f'viewBox="0 0 {width} {height}" font-family="sans-serif" font-size="12">',
        f'<rect width="{width}" height="{height}" fill="white"/>',
        f'<text x="{width / 2:.0f}" y="20" text-anchor="middle" font-size="14">{title}</text>',
        f'<rect x="{ml}" y="{mt}" width="{pw}" height="{ph}" fill="none" stroke="#888"/>',
    ]
    for frac in (0.0, 0.25, 0.5, 0.75, 1.0):
        gx = ml + frac * pw
        gy = mt + frac * ph
        xv = x_min + frac * (x_max - x_min)
        yv = y_max - frac * (y_max - y_min)
        parts.append(
            f'<line x1="{gx:.1f}" y1="{mt}" x2="{gx:.1f}" y2="{mt + ph}" '
            f'stroke="#eee"/>'
        )
        parts.append(
            f'<line x1="{ml}" y1="{gy:.1f}" x2="{ml + pw}" y2="{gy:.1f}" stroke="#eee"/>'
        )
        parts.append(
            f'<text x="{gx:.1f}" y="{height - mb + 16}" text-anchor="middle">{xv:.3g}</text>'
        )
        parts.append(
            f'<text x="{ml - 6}" y="{gy + 4:.1f}" text-anchor="end">{yv:.3g}</text>'
        )
    parts.append(
        f'<text x="{ml + pw / 2:.0f}" y="{height - 10}" text-anchor="middle">{xlabel}</text>'
    )
    parts.append(
        f'<text x="16" y="{mt + ph / 2:.0f}" text-anchor="middle" '
        f'transform="rotate(-90 16 {mt + ph / 2:.0f})">{ylabel}</text>'
    )
    for k, (name, x, y) in enumerate(series):
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        stride = max(1, math.ceil(x.size / max_points))
        pts = " ".join(f"{px(a):.2f},{py(b):.2f}" for a, b in zip(x[::stride], y[::stride]))
        color = _PALETTE[k % len(_PALETTE)]
        parts.append(f'<polyline points="{pts}" fill="none" stroke="{color}" stroke-width="1.3"/>')
        parts.append(
            f'<text x="{ml + pw - 6}" y="{mt + 16 + 14 * k}" text-anchor="end" '
            f'fill="{color}">{name}</text>'
        )
    parts.append("</svg>")
    path.write_text("\n".join(parts) + "\n")


def write_member_plots(out_dir, stem: str, arc) -> list[Path]:
    """Standard chart set for one member run."""
    out_dir = Path(out_dir)
    t = arc.t
    we = np.sqrt(arc.column("we_x") ** 2 + arc.column("we_y") ** 2 + arc.column("we_z") ** 2)
    written = []
    charts = [
        ("dist", "attitude error |R_e|_I", [("dist_Re", t, arc.column("dist_Re"))]),
        ("theta", "warp angle", [("theta", t, arc.column("theta"))]),
        ("omega", "velocity error norm", [("|omega_e|", t, we)]),
        (
            "torque",
            "control torque",
            [(c, t, arc.column(c)) for c in ("tau_x", "tau_y", "tau_z")],
        ),
        ("lyap", "monitor value", [("lyap", t, arc.column("lyap"))]),
    ]
    for tag, title, series in charts:
        p = out_dir / f"{stem}_{tag}.svg"
        svg_line_chart(p, f"{stem}: {title}", "t [s]", title, series)
        written.append(p)
    return written
