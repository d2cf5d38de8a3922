"""Report writers: CSV tables, JSON manifests and plain SVG line plots.

CSV is the source of truth; the SVG is a derived picture of one CSV column
against a log-scaled abscissa, with an optional interval ribbon.
"""

from __future__ import annotations

import csv
import io
import json
import math
import platform
import subprocess
from pathlib import Path

import numpy as np

# column layout of every subcommand's CSV
SCHEMAS = {
    "kernel": ["check", "grid_point", "value", "reference_form", "ratio", "pass"],
    "field": ["N", "mean_max", "ci_low", "ci_high", "entropy_integral", "ratio"],
    "solve": ["replica", "t", "site_index", "u", "z"],
    "moments": ["point", "statistic", "value", "ci_low", "ci_high", "flags"],
    "oscillation": ["point", "statistic", "value", "ci_low", "ci_high", "flags"],
}


def fmt(v):
    """Stable text form: 17 significant digits for floats."""
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (float, np.floating)):
        return repr(float(v)) if math.isfinite(v) else str(float(v))
    if isinstance(v, (np.integer,)):
        return str(int(v))
    if v is None:
        return ""
    return str(v)


def csv_text(kind: str, rows) -> str:
    cols = SCHEMAS[kind]
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(cols)
    for r in rows:
        w.writerow([fmt(r.get(c)) for c in cols])
    return buf.getvalue()


def write_csv(path, kind: str, rows):
    text = csv_text(kind, rows)
    if path in (None, "-"):
        return text
    Path(path).write_text(text, encoding="utf-8")
    return text


def code_version() -> str:
    from . import __version__

    try:
        rev = subprocess.run(["git", "rev-parse", "--short", "HEAD"], capture_output=True,
                             text=True, cwd=Path(__file__).parent, timeout=5)
        if rev.returncode == 0 and rev.stdout.strip():
            return f"{__version__}+g{rev.stdout.strip()}"
    except (OSError, subprocess.SubprocessError):
        pass
    return __version__


def manifest(command: str, config: dict, seed: int, outputs=(), extra=None) -> dict:
    """Everything needed to rerun a command bit-for-bit in single-worker mode."""
    m = {
        "command": command,
        "config": config,
        "seed": seed,
        "code_version": code_version(),
        "python": platform.python_version(),
        "numpy": np.__version__,
        "outputs": list(outputs),
    }
    if extra:
        m.update(extra)
    return m


def write_json(path, payload):
    Path(path).write_text(json.dumps(payload, indent=2, sort_keys=True, default=_default) + "\n",
                          encoding="utf-8")


def _default(o):
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, (np.floating, np.integer)):
        return o.item()
    if isinstance(o, np.bool_):
        return bool(o)
    return str(o)


# ---------------------------------------------------------------------------
# SVG


def svg_plot(series, title: str = "", xlabel: str = "", ylabel: str = "",
             logx: bool = True, width: int = 640, height: int = 400) -> str:
    """Line plot of ``series``: a list of dicts with ``x``, ``y``, optional
    ``lo``/``hi`` ribbon and ``label``."""
    pad_l, pad_r, pad_t, pad_b = 70, 20, 40, 50
    xs, ys = [], []
    for s in series:
        x = np.asarray(s["x"], dtype=float)
        xs.append(np.log10(x) if logx else x)
        for key in ("y", "lo", "hi"):
            if key in s and s[key] is not None:
                ys.append(np.asarray(s[key], dtype=float))
    allx = np.concatenate(xs) if xs else np.array([0.0, 1.0])
    ally = np.concatenate(ys) if ys else np.array([0.0, 1.0])
    ally = ally[np.isfinite(ally)]
    x0, x1 = float(allx.min()), float(allx.max())
    y0, y1 = (float(ally.min()), float(ally.max())) if ally.size else (0.0, 1.0)
    if x1 == x0:
        x1 = x0 + 1
    if y1 == y0:
        y1 = y0 + 1
    pw, ph = width - pad_l - pad_r, height - pad_t - pad_b

    def X(v):
        return pad_l + (v - x0) / (x1 - x0) * pw

    def Y(v):
        return pad_t + ph - (v - y0) / (y1 - y0) * ph

    colours = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"]
    out = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
           f'viewBox="0 0 {width} {height}">',
           '<rect width="100%" height="100%" fill="white"/>',
           f'<text x="{width / 2:.1f}" y="22" text-anchor="middle" font-size="14">{_esc(title)}</text>',
           f'<rect x="{pad_l}" y="{pad_t}" width="{pw}" height="{ph}" fill="none" stroke="#444"/>']
    for i in range(5):
        fx = x0 + (x1 - x0) * i / 4
        fy = y0 + (y1 - y0) * i / 4
        lab = f"1e{fx:.2g}" if logx else f"{fx:.3g}"
        out.append(f'<text x="{X(fx):.1f}" y="{pad_t + ph + 18}" text-anchor="middle" '
                   f'font-size="11">{lab}</text>')
        out.append(f'<text x="{pad_l - 6}" y="{Y(fy) + 4:.1f}" text-anchor="end" '
                   f'font-size="11">{fy:.3g}</text>')
    out.append(f'<text x="{pad_l + pw / 2:.1f}" y="{height - 10}" text-anchor="middle" '
               f'font-size="12">{_esc(xlabel)}</text>')
    out.append(f'<text x="16" y="{pad_t + ph / 2:.1f}" text-anchor="middle" font-size="12" '
               f'transform="rotate(-90 16 {pad_t + ph / 2:.1f})">{_esc(ylabel)}</text>')
    for j, (s, xv) in enumerate(zip(series, xs)):
        c = colours[j % len(colours)]
        y = np.asarray(s["y"], dtype=float)
        if s.get("lo") is not None and s.get("hi") is not None:
            lo = np.asarray(s["lo"], dtype=float)
            hi = np.asarray(s["hi"], dtype=float)
            pts = [f"{X(a):.1f},{Y(b):.1f}" for a, b in zip(xv, hi)]
            pts += [f"{X(a):.1f},{Y(b):.1f}" for a, b in zip(xv[::-1], lo[::-1])]
            out.append(f'<polygon points="{" ".join(pts)}" fill="{c}" fill-opacity="0.2" '
                       f'stroke="none"/>')
        pts = " ".join(f"{X(a):.1f},{Y(b):.1f}" for a, b in zip(xv, y) if np.isfinite(b))
        out.append(f'<polyline points="{pts}" fill="none" stroke="{c}" stroke-width="2"/>')
        for a, b in zip(xv, y):
            if np.isfinite(b):
                out.append(f'<circle cx="{X(a):.1f}" cy="{Y(b):.1f}" r="3" fill="{c}"/>')
        if s.get("label"):
            out.append(f'<text x="{pad_l + 8}" y="{pad_t + 16 + 15 * j}" font-size="11" '
                       f'fill="{c}">{_esc(s["label"])}</text>')
    out.append("</svg>")
    return "\n".join(out) + "\n"


def _esc(s):
    return str(s).replace("&", "&amp;").replace("<", "&lt;").replace(">", "&gt;")


def write_svg(path, series, **kw):
    Path(path).write_text(svg_plot(series, **kw), encoding="utf-8")
