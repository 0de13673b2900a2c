"""Run artifacts on disk: history, reconstruction, metadata, sweep tables, SVG plots."""

from __future__ import annotations

import csv
import io
import json
from pathlib import Path
from typing import List, Optional, Sequence, Union

import numpy as np

from .core import Field, IterationRecord

HISTORY_COLUMNS = ["n", "alpha", "residual", "inner_iters", "error_to_truth"]
SWEEP_COLUMNS = ["delta", "seed", "n1", "n2", "n3", "stop_reason", "error"]

PathLike = Union[str, Path]


def _fmt(x: Optional[float]) -> str:
    return "" if x is None else repr(float(x))


def _opt_float(s: str) -> Optional[float]:
    return None if s == "" else float(s)


def _opt_int(s: str) -> Optional[int]:
    return None if s == "" else int(s)


def history_to_csv(records: Sequence[IterationRecord]) -> str:
    buf = io.StringIO()
    out = csv.writer(buf, lineterminator="\n")
    out.writerow(HISTORY_COLUMNS)
    for r in records:
        out.writerow([r.n, _fmt(r.alpha), _fmt(r.residual), r.inner_iterations, _fmt(r.error_to_truth)])
    return buf.getvalue()


def history_from_csv(source: PathLike) -> List[IterationRecord]:
    text = Path(source).read_text()
    rows = list(csv.reader(io.StringIO(text)))
    if rows[0] != HISTORY_COLUMNS:
        raise ValueError(f"unexpected history header {rows[0]}")
    return [IterationRecord(int(n), float(a), float(r), int(k), _opt_float(e))
            for n, a, r, k, e in rows[1:]]


def sweep_to_csv(rows: Sequence[dict]) -> str:
    buf = io.StringIO()
    out = csv.writer(buf, lineterminator="\n")
    out.writerow(SWEEP_COLUMNS)
    for row in rows:
        out.writerow([_fmt(row["delta"]), row["seed"],
                      *("" if row[k] is None else row[k] for k in ("n1", "n2", "n3")),
                      row["stop_reason"], _fmt(row["error"])])
    return buf.getvalue()


def sweep_from_csv(source: PathLike) -> List[dict]:
    rows = list(csv.reader(io.StringIO(Path(source).read_text())))
    if rows[0] != SWEEP_COLUMNS:
        raise ValueError(f"unexpected sweep header {rows[0]}")
    return [{"delta": float(d), "seed": int(s), "n1": _opt_int(a), "n2": _opt_int(b),
             "n3": _opt_int(c), "stop_reason": reason, "error": _opt_float(e)}
            for d, s, a, b, c, reason, e in rows[1:]]


def write_json(path: PathLike, document: dict) -> None:
    Path(path).write_text(json.dumps(document, indent=2, sort_keys=True) + "\n")


# --- SVG ---------------------------------------------------------------------

_W, _H, _PAD = 640, 400, 50


def _polyline(xs, ys, xlim, ylim, colour, dash=""):
    (x0, x1), (y0, y1) = xlim, ylim
    px = _PAD + (np.asarray(xs) - x0) / (x1 - x0) * (_W - 2 * _PAD)
    py = _H - _PAD - (np.asarray(ys) - y0) / (y1 - y0) * (_H - 2 * _PAD)
    points = " ".join(f"{a:.2f},{b:.2f}" for a, b in zip(px, py))
    extra = f' stroke-dasharray="{dash}"' if dash else ""
    return f'<polyline fill="none" stroke="{colour}" stroke-width="1.5"{extra} points="{points}"/>'


def _line_plot(truth: Optional[Field], recon: Field, title: str) -> str:
    t = recon.grid.axis
    series = [recon.values] + ([truth.values] if truth is not None else [])
    lo = min(float(np.min(s)) for s in series)
    hi = max(float(np.max(s)) for s in series)
    if hi - lo < 1e-12:
        lo, hi = lo - 0.5, hi + 0.5
    margin = 0.05 * (hi - lo)
    ylim = (lo - margin, hi + margin)
    parts = [
        f'<rect x="{_PAD}" y="{_PAD}" width="{_W - 2 * _PAD}" height="{_H - 2 * _PAD}" '
        'fill="none" stroke="#999"/>',
        f'<text x="{_W / 2}" y="25" text-anchor="middle" font-size="14">{title}</text>',
        f'<text x="{_PAD}" y="{_H - 20}" font-size="11">0</text>',
        f'<text x="{_W - _PAD}" y="{_H - 20}" font-size="11" text-anchor="end">1</text>',
        f'<text x="{_PAD - 5}" y="{_H - _PAD}" font-size="11" text-anchor="end">{ylim[0]:.3g}</text>',
        f'<text x="{_PAD - 5}" y="{_PAD + 10}" font-size="11" text-anchor="end">{ylim[1]:.3g}</text>',
    ]
    if truth is not None:
        parts.append(_polyline(t, truth.values, (0, 1), ylim, "#555", "5,4"))
        parts.append(f'<text x="{_W - _PAD - 5}" y="{_PAD + 15}" font-size="11" text-anchor="end" '
                     'fill="#555">truth (dashed)</text>')
    parts.append(_polyline(t, recon.values, (0, 1), ylim, "#c0392b"))
    parts.append(f'<text x="{_W - _PAD - 5}" y="{_PAD + 30}" font-size="11" text-anchor="end" '
                 'fill="#c0392b">reconstruction</text>')
    return _svg(_W, _H, parts)


def _heat(values: np.ndarray, x0: float, y0: float, size: float, lo: float, hi: float):
    m = values.shape[0]
    cell = size / m
    parts = []
    span = hi - lo if hi > lo else 1.0
    for i in range(m):
        for j in range(m):
            level = (values[i, j] - lo) / span
            shade = int(round(255 * (1 - min(max(level, 0.0), 1.0))))
            # x runs right, y runs up
            parts.append(f'<rect x="{x0 + i * cell:.2f}" y="{y0 + (m - 1 - j) * cell:.2f}" '
                         f'width="{cell + 0.05:.2f}" height="{cell + 0.05:.2f}" '
                         f'fill="rgb(255,{shade},{shade})"/>')
    return parts


def _heat_plot(truth: Optional[Field], recon: Field, title: str) -> str:
    fields = [("reconstruction", recon)] + ([("truth", truth)] if truth is not None else [])
    lo = min(float(np.min(f.values)) for _, f in fields)
    hi = max(float(np.max(f.values)) for _, f in fields)
    size = 280
    width = 40 + len(fields) * (size + 40)
    parts = [f'<text x="{width / 2}" y="25" text-anchor="middle" font-size="14">{title}</text>']
    for k, (label, f) in enumerate(fields):
        x0 = 40 + k * (size + 40)
        parts += _heat(f.grid.reshape(f.values), x0, 50, size, lo, hi)
        parts.append(f'<text x="{x0 + size / 2}" y="{50 + size + 20}" text-anchor="middle" '
                     f'font-size="12">{label}</text>')
    parts.append(f'<text x="40" y="{50 + size + 40}" font-size="11">colour scale '
                 f'{lo:.3g} (white) to {hi:.3g} (red)</text>')
    return _svg(width, size + 110, parts)


def _svg(width, height, parts) -> str:
    body = "\n".join(parts)
    return (f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
            f'viewBox="0 0 {width} {height}">\n<rect width="100%" height="100%" fill="white"/>\n'
            f"{body}\n</svg>\n")


def plot_svg(recon: Field, truth: Optional[Field] = None, title: str = "") -> str:
    """Line plot (1D) or side-by-side heat maps (2D) of reconstruction and truth."""
    if recon.grid.dimension == 1:
        return _line_plot(truth, recon, title)
    return _heat_plot(truth, recon, title)
