"""CSV tables and dependency-free SVG line plots."""
from __future__ import annotations

import io
import math
import os
from typing import Optional, Sequence, TextIO

import numpy as np

from .diagnostics import ConvergenceRow, HarnessError

CONVERGENCE_HEADER = ("N", "h", "L1", "L2", "Linf", "order_L2")
TRACE_HEADER = ("t", "e", "energy")


def format_value(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return str(int(v))
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    v = float(v)
    if math.isnan(v):
        return ""
    if math.isinf(v):
        return "inf" if v > 0 else "-inf"
    return f"{v:.5e}"  # six significant digits


def csv_text(header: Sequence[str], rows: Sequence[Sequence]) -> str:
    buf = io.StringIO()
    buf.write(",".join(header) + "\n")
    for row in rows:
        if len(row) != len(header):
            raise HarnessError("row length does not match the header")
        buf.write(",".join(format_value(v) for v in row) + "\n")
    return buf.getvalue()


def write_text(path: Optional[str], text: str, stream: Optional[TextIO] = None) -> None:
    """Write to a file, or to `stream` when path is None."""
    if path is None:
        if stream is not None:
            stream.write(text)
        return
    folder = os.path.dirname(os.path.abspath(path))
    if not os.path.isdir(folder) or not os.access(folder, os.W_OK):
        raise HarnessError(f"output path {path} is not writable")
    try:
        with open(path, "w", newline="") as fh:
            fh.write(text)
    except OSError as exc:
        raise HarnessError(f"output path {path} is not writable: {exc}") from None


def convergence_rows(rows: Sequence[ConvergenceRow]) -> list[tuple]:
    return [(r.n, r.h, *r.norms.as_tuple(), r.order_L2) for r in rows]


# ------------------------------------------------------------------ SVG

_COLOURS = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#17becf")


def line_plot(series: Sequence[tuple], title: str = "", xlabel: str = "", ylabel: str = "",
              logx: bool = False, logy: bool = False, width: int = 480, height: int = 320) -> str:
    """series: (label, x, y) triples; returns a standalone SVG document."""
    tx = (lambda v: np.log10(v)) if logx else (lambda v: v)
    ty = (lambda v: np.log10(v)) if logy else (lambda v: v)
    pts = []
    for label, x, y in series:
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        ok = np.isfinite(x) & np.isfinite(y)
        if logx:
            ok &= x > 0
        if logy:
            ok &= y > 0
        pts.append((label, tx(x[ok]), ty(y[ok])))
    allx = np.concatenate([p[1] for p in pts]) if pts else np.zeros(0)
    ally = np.concatenate([p[2] for p in pts]) if pts else np.zeros(0)
    if len(allx) == 0:
        allx, ally = np.array([0.0, 1.0]), np.array([0.0, 1.0])
    x0, x1 = float(allx.min()), float(allx.max())
    y0, y1 = float(ally.min()), float(ally.max())
    x1 = x1 if x1 > x0 else x0 + 1.0
    y1 = y1 if y1 > y0 else y0 + 1.0
    ml, mr, mt, mb = 70, 20, 30, 45
    sx = lambda v: ml + (v - x0) / (x1 - x0) * (width - ml - mr)
    sy = lambda v: height - mb - (v - y0) / (y1 - y0) * (height - mt - mb)
    out = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
           f'viewBox="0 0 {width} {height}" font-family="sans-serif" font-size="11">',
           f'<rect width="{width}" height="{height}" fill="white"/>',
           f'<rect x="{ml}" y="{mt}" width="{width - ml - mr}" height="{height - mt - mb}" '
           'fill="none" stroke="black"/>']
    for k in range(5):
        fx = x0 + k * (x1 - x0) / 4
        fy = y0 + k * (y1 - y0) / 4
        lx = f"1e{fx:.1f}" if logx else f"{fx:.3g}"
        ly = f"1e{fy:.1f}" if logy else f"{fy:.3g}"
        out.append(f'<text x="{sx(fx):.1f}" y="{height - mb + 14}" text-anchor="middle">{lx}</text>')
        out.append(f'<text x="{ml - 4}" y="{sy(fy) + 4:.1f}" text-anchor="end">{ly}</text>')
    for k, (label, x, y) in enumerate(pts):
        colour = _COLOURS[k % len(_COLOURS)]
        path = " ".join(f"{sx(a):.2f},{sy(b):.2f}" for a, b in zip(x, y))
        out.append(f'<polyline fill="none" stroke="{colour}" stroke-width="1.5" points="{path}"/>')
        out.append(f'<text x="{width - mr - 4}" y="{mt + 14 + 14 * k}" text-anchor="end" fill="{colour}">'
                   f'{_escape(label)}</text>')
    out.append(f'<text x="{width / 2:.0f}" y="{mt - 10}" text-anchor="middle">{_escape(title)}</text>')
    out.append(f'<text x="{width / 2:.0f}" y="{height - 8}" text-anchor="middle">{_escape(xlabel)}</text>')
    out.append(f'<text x="14" y="{height / 2:.0f}" text-anchor="middle" '
               f'transform="rotate(-90 14 {height / 2:.0f})">{_escape(ylabel)}</text>')
    out.append("</svg>\n")
    return "\n".join(out)


def _escape(s: str) -> str:
    return s.replace("&", "&amp;").replace("<", "&lt;").replace(">", "&gt;")
