"""CSV traces, summary tables and a small SVG line plot."""

from __future__ import annotations

import csv
import io
from pathlib import Path
from typing import Mapping, Sequence
from xml.sax.saxutils import escape

import numpy as np

from .solver import TransientResult

SVG_WIDTH = 800
SVG_HEIGHT = 480
_MARGIN = 50
_COLORS = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b", "#e377c2", "#17becf")


def _unit(column: str) -> str:
    return "A" if column.startswith("i(") else "V"


def columns_for(result: TransientResult, prints: Sequence[str]) -> dict[str, np.ndarray]:
    """Traces named by ``.print`` (every node voltage when it is empty)."""
    names = list(prints) or [f"v({n})" for n in sorted(result.voltages)]
    return {name: result.trace(name) for name in names}


def render_csv(time: np.ndarray, columns: Mapping[str, np.ndarray]) -> str:
    """Header comment with units, then time and one column per trace.

    Floats use ``repr`` so every field reads back to the same binary64.
    """
    buf = io.StringIO()
    units = ", ".join(["time=s"] + [f"{c}={_unit(c)}" for c in columns])
    buf.write(f"# units: {units}\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["time", *columns])
    cols = [np.asarray(v, dtype=float) for v in columns.values()]
    for k, t in enumerate(time):
        w.writerow([repr(float(t))] + [repr(float(c[k])) for c in cols])
    return buf.getvalue()


def read_csv(path: str | Path) -> tuple[list[str], np.ndarray]:
    lines = [ln for ln in Path(path).read_text().splitlines() if not ln.startswith("#")]
    rows = list(csv.reader(lines))
    return rows[0], np.array([[float(x) for x in r] for r in rows[1:]])


def render_table(header: Sequence[str], rows: Sequence[Sequence]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for r in rows:
        w.writerow([repr(float(x)) if isinstance(x, (float, np.floating)) else x for x in r])
    return buf.getvalue()


def _scale(lo: float, hi: float, a: float, b: float):
    if hi <= lo:
        lo, hi = lo - 0.5, hi + 0.5
    return lambda v: a + (v - lo) * (b - a) / (hi - lo)


def render_svg(time: np.ndarray, columns: Mapping[str, np.ndarray], title: str = "") -> str:
    """Fixed viewBox, autoscaled axes, one polyline per trace."""
    t = np.asarray(time, dtype=float)
    ys = [np.asarray(v, dtype=float) for v in columns.values()]
    lo = min((float(y.min()) for y in ys if len(y)), default=0.0)
    hi = max((float(y.max()) for y in ys if len(y)), default=1.0)
    sx = _scale(float(t[0]) if len(t) else 0.0, float(t[-1]) if len(t) else 1.0,
                _MARGIN, SVG_WIDTH - _MARGIN)
    sy = _scale(lo, hi, SVG_HEIGHT - _MARGIN, _MARGIN)
    out = [
        f'<svg xmlns="http://www.w3.org/2000/svg" viewBox="0 0 {SVG_WIDTH} {SVG_HEIGHT}">',
        f'<rect x="{_MARGIN}" y="{_MARGIN}" width="{SVG_WIDTH - 2 * _MARGIN}" '
        f'height="{SVG_HEIGHT - 2 * _MARGIN}" fill="none" stroke="#888"/>',
        f'<text x="{_MARGIN}" y="{_MARGIN - 20}" font-size="14">{escape(title)}</text>',
        f'<text x="{_MARGIN}" y="{SVG_HEIGHT - 15}" font-size="11">t: {t[0]:.4g} .. {t[-1]:.4g} s</text>'
        if len(t) else "",
        f'<text x="5" y="{_MARGIN - 5}" font-size="11">{hi:.4g}</text>',
        f'<text x="5" y="{SVG_HEIGHT - _MARGIN}" font-size="11">{lo:.4g}</text>',
    ]
    for n, (name, y) in enumerate(zip(columns, ys)):
        color = _COLORS[n % len(_COLORS)]
        pts = " ".join(f"{sx(a):.2f},{sy(b):.2f}" for a, b in zip(t, y))
        out.append(f'<polyline fill="none" stroke="{color}" stroke-width="1.2" '
                   f'data-name="{escape(name)}" points="{pts}"/>')
        out.append(f'<text x="{SVG_WIDTH - _MARGIN + 5}" y="{_MARGIN + 14 * (n + 1)}" '
                   f'font-size="11" fill="{color}">{escape(name)}</text>')
    out.append("</svg>")
    return "\n".join(x for x in out if x) + "\n"


def write_trace(out_dir: str | Path, result: TransientResult, prints: Sequence[str],
                plot: bool = False, stem: str = "trace", title: str = "") -> dict[str, Path]:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    cols = columns_for(result, prints)
    paths = {"csv": out / f"{stem}.csv"}
    paths["csv"].write_text(render_csv(result.time, cols))
    if plot:
        paths["svg"] = out / f"{stem}.svg"
        paths["svg"].write_text(render_svg(result.time, cols, title))
    return paths
