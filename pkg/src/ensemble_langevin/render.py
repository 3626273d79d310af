"""Deterministic SVG scatter plots of 2D particle clouds.

No plotting library is involved: the output is plain SVG text whose bytes
depend only on the points, the target's fixed axes and the title.
"""

from __future__ import annotations

import csv
import json
from pathlib import Path
from typing import Optional
from xml.sax.saxutils import escape

import numpy as np

__all__ = ["AXES", "render_points", "read_samples", "render_scatter"]

# (xmin, xmax, ymin, ymax) per target
AXES = {
    "example1": (-5.0, 5.0, -10.0, 10.0),
    "example2": (-8.0, 8.0, -4.0, 4.0),
    "quadratic": (-4.0, 4.0, -4.0, 4.0),
}
DEFAULT_AXES = (-6.0, 6.0, -6.0, 6.0)

WIDTH, HEIGHT, PAD = 480, 480, 40


def _ticks(lo: float, hi: float) -> list[float]:
    span = hi - lo
    step = 10 ** np.floor(np.log10(span / 4))
    for mult in (1, 2, 5, 10):
        if span / (mult * step) <= 8:
            step *= mult
            break
    start = np.ceil(lo / step) * step
    return [float(t) for t in np.arange(start, hi + 1e-9 * span, step)]


def render_points(points, target: Optional[str] = None, title: str = "") -> str:
    pts = np.asarray(points, dtype=float).reshape(-1, 2) if np.size(points) else np.empty((0, 2))
    if np.ndim(points) == 2 and np.shape(points)[1] != 2:
        raise ValueError(f"scatter plots need d = 2, got d = {np.shape(points)[1]}")
    xmin, xmax, ymin, ymax = AXES.get(target, DEFAULT_AXES)
    pw, ph = WIDTH - 2 * PAD, HEIGHT - 2 * PAD

    def sx(x):
        return PAD + (x - xmin) / (xmax - xmin) * pw

    def sy(y):
        return HEIGHT - PAD - (y - ymin) / (ymax - ymin) * ph

    out = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}">',
        '<rect width="100%" height="100%" fill="white"/>',
        f'<rect x="{PAD}" y="{PAD}" width="{pw}" height="{ph}" fill="none" stroke="black"/>',
    ]
    for t in _ticks(xmin, xmax):
        x = sx(t)
        out.append(f'<line x1="{x:.2f}" y1="{HEIGHT - PAD}" x2="{x:.2f}" y2="{HEIGHT - PAD + 5}" stroke="black"/>')
        out.append(f'<text x="{x:.2f}" y="{HEIGHT - PAD + 18}" font-size="11" text-anchor="middle">{t:g}</text>')
    for t in _ticks(ymin, ymax):
        y = sy(t)
        out.append(f'<line x1="{PAD - 5}" y1="{y:.2f}" x2="{PAD}" y2="{y:.2f}" stroke="black"/>')
        out.append(f'<text x="{PAD - 8}" y="{y + 4:.2f}" font-size="11" text-anchor="end">{t:g}</text>')
    if title:
        out.append(f'<text x="{WIDTH / 2:.0f}" y="{PAD - 12}" font-size="13" text-anchor="middle">{escape(title)}</text>')
    inside = (pts[:, 0] >= xmin) & (pts[:, 0] <= xmax) & (pts[:, 1] >= ymin) & (pts[:, 1] <= ymax)
    out.append('<g fill="steelblue" fill-opacity="0.35">')
    for x, y in pts[inside]:
        out.append(f'<circle cx="{sx(x):.2f}" cy="{sy(y):.2f}" r="1.2"/>')
    out.append("</g>")
    out.append("</svg>")
    return "\n".join(out) + "\n"


def read_samples(path, checkpoint: Optional[int] = None):
    """Positions at ``checkpoint`` (default: last iteration in the file)."""
    with open(path, newline="", encoding="ascii") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or header[:2] != ["iteration", "particle"]:
            raise ValueError(f"{path}: not a samples.csv file")
        d = len(header) - 2
        rows = np.array([[float(v) for v in r] for r in reader if r], dtype=float).reshape(-1, d + 2)
    if checkpoint is None:
        checkpoint = int(rows[:, 0].max()) if len(rows) else 0
    sel = rows[rows[:, 0] == checkpoint]
    sel = sel[np.argsort(sel[:, 1], kind="stable")]
    return sel[:, 2:], d, checkpoint


def render_scatter(samples_csv, checkpoint: Optional[int] = None, out_path=None, target: Optional[str] = None) -> Path:
    """Write ``scatter_<m>.svg`` next to ``samples_csv`` (or at ``out_path``).

    The target name for the axes comes from ``run_meta.json`` in the same
    directory when not given.
    """
    samples_csv = Path(samples_csv)
    x, d, checkpoint = read_samples(samples_csv, checkpoint)
    if d != 2:
        raise ValueError(f"scatter plots need d = 2, got d = {d}")
    if target is None:
        meta = samples_csv.parent / "run_meta.json"
        if meta.exists():
            target = json.loads(meta.read_text()).get("config", {}).get("target")
    out_path = Path(out_path) if out_path is not None else samples_csv.parent / f"scatter_{checkpoint}.svg"
    if out_path.is_dir():
        out_path = out_path / f"scatter_{checkpoint}.svg"
    out_path.write_text(render_points(x, target, title=f"m={checkpoint}"), encoding="utf-8", newline="")
    return out_path
