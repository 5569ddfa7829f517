"""Standalone SVG heatmaps of a metric over two experiment factors."""

from __future__ import annotations

import os
import tempfile
from xml.sax.saxutils import escape

import numpy as np

from .errors import DegenerateInputError, GridError, ParameterError
from .marl.metrics import NEVER

FACTORS = ("alpha", "sigma", "epsilon")
LIGHT = (247, 251, 255)
DARK = (8, 48, 107)
CELL = 72
MARGIN_LEFT = 90
MARGIN_TOP = 50
LEGEND_H = 60


def atomic_write(path, text: str) -> None:
    """Write ``text`` to ``path`` through a temp file in the same directory and rename."""
    path = os.fspath(path)
    folder = os.path.dirname(os.path.abspath(path))
    os.makedirs(folder, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=folder, prefix=".tmp-", suffix=os.path.basename(path))
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def metric_values(records, metric: str) -> np.ndarray:
    if metric == "convergence_time":
        finite = [r.convergence_time for r in records if r.convergence_time != NEVER]
        top = float(max(finite, default=0)) + 1.0
        return np.array([top if r.convergence_time == NEVER else float(r.convergence_time) for r in records])
    try:
        return np.array([float(getattr(r, metric)) for r in records])
    except AttributeError:
        raise ParameterError(f"records have no metric {metric!r}") from None


def cell_means(records, x_factor: str, y_factor: str, metric: str):
    """Mean metric per (x, y) level pair over all other factors and replications.

    Returns ``(x_levels, y_levels, table)`` with ``table[iy, ix]``. Raises a
    grid error naming every missing pair.
    """
    for f in (x_factor, y_factor):
        if f not in FACTORS:
            raise ParameterError(f"factor must be one of {', '.join(FACTORS)}, got {f!r}")
    if x_factor == y_factor:
        raise ParameterError("x and y factors must differ")
    recs = [r for r in records if r.ok]
    if not recs:
        raise DegenerateInputError("no usable records")
    xs = np.array([getattr(r, x_factor) for r in recs])
    ys = np.array([getattr(r, y_factor) for r in recs])
    vals = metric_values(recs, metric)
    xl, yl = np.unique(xs), np.unique(ys)
    table = np.full((yl.size, xl.size), np.nan)
    missing = []
    for iy, yv in enumerate(yl):
        for ix, xv in enumerate(xl):
            sel = (xs == xv) & (ys == yv) & np.isfinite(vals)
            if sel.any():
                table[iy, ix] = vals[sel].mean()
            else:
                missing.append((float(xv), float(yv)))
    if missing:
        shown = ", ".join(f"({x_factor}={x!r}, {y_factor}={y!r})" for x, y in missing)
        raise GridError(f"grid has {len(missing)} empty cell(s): {shown}", missing)
    return xl, yl, table


def _shade(t: float) -> str:
    rgb = [round(lo + (hi - lo) * t) for lo, hi in zip(LIGHT, DARK)]
    return "#{:02x}{:02x}{:02x}".format(*rgb)


def _fmt(v: float) -> str:
    return f"{v:.4g}"


def heatmap_svg(x_levels, y_levels, table, x_label: str, y_label: str, metric: str) -> str:
    """Render a value table as SVG; the colour runs linearly from min (light) to max (dark)."""
    table = np.asarray(table, dtype=float)
    lo, hi = float(table.min()), float(table.max())
    span = hi - lo
    ny, nx = table.shape
    width = MARGIN_LEFT + nx * CELL + 20
    height = MARGIN_TOP + ny * CELL + 40 + LEGEND_H
    out = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
        f'viewBox="0 0 {width} {height}" font-family="sans-serif" font-size="12">',
        f'<title>{escape(metric)} by {escape(x_label)} and {escape(y_label)}</title>',
        f'<text x="{MARGIN_LEFT}" y="20" font-size="14">{escape(metric)}</text>',
    ]
    # rows run top to bottom from the highest y level
    for row in range(ny):
        iy = ny - 1 - row
        y0 = MARGIN_TOP + row * CELL
        out.append(f'<text x="{MARGIN_LEFT - 8}" y="{y0 + CELL // 2 + 4}" text-anchor="end">'
                   f'{_fmt(y_levels[iy])}</text>')
        for ix in range(nx):
            v = float(table[iy, ix])
            t = (v - lo) / span if span > 0 else 0.0
            x0 = MARGIN_LEFT + ix * CELL
            ink = "#ffffff" if t > 0.5 else "#000000"
            out.append(
                f'<rect class="cell" x="{x0}" y="{y0}" width="{CELL}" height="{CELL}" fill="{_shade(t)}" '
                f'data-x="{float(x_levels[ix])!r}" data-y="{float(y_levels[iy])!r}" data-value="{v!r}"/>')
            out.append(f'<text class="note" x="{x0 + CELL // 2}" y="{y0 + CELL // 2 + 4}" '
                       f'text-anchor="middle" fill="{ink}">{_fmt(v)}</text>')
    base = MARGIN_TOP + ny * CELL
    for ix in range(nx):
        out.append(f'<text x="{MARGIN_LEFT + ix * CELL + CELL // 2}" y="{base + 16}" text-anchor="middle">'
                   f'{_fmt(x_levels[ix])}</text>')
    out.append(f'<text x="{MARGIN_LEFT + nx * CELL // 2}" y="{base + 34}" text-anchor="middle">'
               f'{escape(x_label)}</text>')
    out.append(f'<text x="16" y="{MARGIN_TOP + ny * CELL // 2}" text-anchor="middle" '
               f'transform="rotate(-90 16 {MARGIN_TOP + ny * CELL // 2})">{escape(y_label)}</text>')
    ly = base + 50
    if span > 0:
        out.append('<defs><linearGradient id="scale"><stop offset="0" stop-color="{}"/>'
                   '<stop offset="1" stop-color="{}"/></linearGradient></defs>'.format(_shade(0), _shade(1)))
        out.append(f'<rect class="legend" x="{MARGIN_LEFT}" y="{ly}" width="{nx * CELL}" height="12" '
                   f'fill="url(#scale)"/>')
        out.append(f'<text x="{MARGIN_LEFT}" y="{ly + 28}">{_fmt(lo)}</text>')
        out.append(f'<text x="{MARGIN_LEFT + nx * CELL}" y="{ly + 28}" text-anchor="end">{_fmt(hi)}</text>')
    else:
        out.append(f'<rect class="legend" x="{MARGIN_LEFT}" y="{ly}" width="{nx * CELL}" height="12" '
                   f'fill="{_shade(0)}" stroke="#999999"/>')
        out.append(f'<text x="{MARGIN_LEFT}" y="{ly + 28}">degenerate range: all cells = {_fmt(lo)}</text>')
    out.append("</svg>")
    return "\n".join(out) + "\n"


def emit_heatmap(records, x_factor: str, y_factor: str, metric: str, out_path=None) -> str:
    """Build the SVG for ``metric`` over two factors; also writes it when ``out_path`` is given."""
    xl, yl, table = cell_means(records, x_factor, y_factor, metric)
    svg = heatmap_svg(xl, yl, table, x_factor, y_factor, metric)
    if out_path is not None:
        atomic_write(out_path, svg)
    return svg
