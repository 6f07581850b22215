"""Deterministic CSV and SVG emitters for benchmark, sweep, margin and PC-histogram reports.

Numbers are written with fixed formatting and files with ``\\n`` line endings,
so an identical bundle always yields byte-identical files.
"""

import csv
import io
import os
from html import escape

import numpy as np

KINDS = ("benchmark", "sweep", "margin", "pc-histogram")
_REQUIRED = {
    "benchmark": ("rows",),
    "sweep": ("series",),
    "margin": ("actual", "predicted"),
    "pc-histogram": ("edges", "counts"),
}
BENCHMARK_COLUMNS = ("family", "cv_mape", "holdout_mape", "holdout_mse", "within_margin", "epochs")

W, H, PAD = 480, 360, 50


class IncompleteBundle(ValueError):
    pass


def _fmt(v):
    if v is None:
        return ""
    if isinstance(v, (float, np.floating)):
        return f"{float(v):.10g}"
    return str(v)


def write_csv(path, header, rows):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for r in rows:
        w.writerow([_fmt(v) for v in r])
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(buf.getvalue())


class _Canvas:
    def __init__(self, title, xlim, ylim, xlabel="", ylabel=""):
        self.xlim, self.ylim = xlim, ylim
        self.parts = [
            f'<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" '
            f'viewBox="0 0 {W} {H}">',
            f'<rect width="{W}" height="{H}" fill="white"/>',
            f'<text x="{W / 2:.1f}" y="20" text-anchor="middle" font-size="14">{escape(title)}</text>',
            f'<line x1="{PAD}" y1="{H - PAD}" x2="{W - PAD / 2}" y2="{H - PAD}" stroke="black"/>',
            f'<line x1="{PAD}" y1="{H - PAD}" x2="{PAD}" y2="{PAD / 2}" stroke="black"/>',
            f'<text x="{W / 2:.1f}" y="{H - 12}" text-anchor="middle" font-size="12">{escape(xlabel)}</text>',
            f'<text x="14" y="{H / 2:.1f}" text-anchor="middle" font-size="12" '
            f'transform="rotate(-90 14 {H / 2:.1f})">{escape(ylabel)}</text>',
        ]
        for v in np.linspace(*xlim, 5):
            self.parts.append(f'<text x="{self.px(v):.2f}" y="{H - PAD + 15}" text-anchor="middle" '
                              f'font-size="10">{v:.4g}</text>')
        for v in np.linspace(*ylim, 5):
            self.parts.append(f'<text x="{PAD - 4}" y="{self.py(v) + 3:.2f}" text-anchor="end" '
                              f'font-size="10">{v:.4g}</text>')

    def px(self, x):
        lo, hi = self.xlim
        return PAD + (x - lo) / (hi - lo) * (W - 1.5 * PAD)

    def py(self, y):
        lo, hi = self.ylim
        return H - PAD - (y - lo) / (hi - lo) * (H - 1.5 * PAD)

    def polyline(self, xs, ys, color="black", dash=False):
        pts = " ".join(f"{self.px(x):.2f},{self.py(y):.2f}" for x, y in zip(xs, ys))
        extra = ' stroke-dasharray="4 3"' if dash else ""
        self.parts.append(f'<polyline points="{pts}" fill="none" stroke="{color}"{extra}/>')

    def dots(self, xs, ys, color="black"):
        for x, y in zip(xs, ys):
            self.parts.append(f'<circle cx="{self.px(x):.2f}" cy="{self.py(y):.2f}" r="2.5" fill="{color}"/>')

    def rect(self, x0, x1, y, color="steelblue"):
        top, base = self.py(y), self.py(self.ylim[0])
        self.parts.append(f'<rect x="{self.px(x0):.2f}" y="{top:.2f}" width="{self.px(x1) - self.px(x0):.2f}" '
                          f'height="{base - top:.2f}" fill="{color}" stroke="white"/>')

    def legend(self, names, colors):
        for i, (n, c) in enumerate(zip(names, colors)):
            y = PAD / 2 + 14 * i + 10
            self.parts.append(f'<rect x="{W - 140}" y="{y - 8}" width="10" height="10" fill="{c}"/>')
            self.parts.append(f'<text x="{W - 125}" y="{y + 1}" font-size="11">{escape(str(n))}</text>')

    def save(self, path):
        with open(path, "w", encoding="utf-8", newline="") as fh:
            fh.write("\n".join(self.parts + ["</svg>"]) + "\n")


_COLORS = ("steelblue", "darkorange", "seagreen", "crimson", "purple", "saddlebrown", "gray")


def _span(values, pad=0.05):
    lo, hi = float(np.min(values)), float(np.max(values))
    if hi == lo:
        lo, hi = lo - 0.5, hi + 0.5
    d = (hi - lo) * pad
    return lo - d, hi + d


def emit_report(bundle, kind, out_dir, stem=None):
    """Write the files for ``kind`` into ``out_dir``; returns their paths.

    Bundles:
    ``benchmark`` ``{"rows": [dict with BENCHMARK_COLUMNS keys]}``;
    ``sweep`` ``{"series": {name: [[x, y], ...]}, "xlabel", "ylabel"}``;
    ``margin`` ``{"actual", "predicted", "margin"}``;
    ``pc-histogram`` ``{"edges", "counts", "mean", "std"}``.
    """
    if kind not in KINDS:
        raise IncompleteBundle(f"unknown report kind {kind!r}")
    missing = [k for k in _REQUIRED[kind] if k not in bundle]
    if missing:
        raise IncompleteBundle(f"{kind} bundle lacks {', '.join(missing)}")
    os.makedirs(out_dir, exist_ok=True)
    stem = stem or kind
    csv_path = os.path.join(out_dir, f"{stem}.csv")
    svg_path = os.path.join(out_dir, f"{stem}.svg")

    if kind == "benchmark":
        rows = bundle["rows"]
        if not rows:
            raise IncompleteBundle("benchmark bundle has no rows")
        write_csv(csv_path, BENCHMARK_COLUMNS, [[r.get(c) for c in BENCHMARK_COLUMNS] for r in rows])
        vals = [r.get("cv_mape") or 0.0 for r in rows]
        cv = _Canvas("CV MAPE by family", (0, len(rows)), (0, max(max(vals), 1e-12) * 1.1),
                     "family", "MAPE")
        for i, (r, v) in enumerate(zip(rows, vals)):
            cv.rect(i + 0.15, i + 0.85, v, _COLORS[i % len(_COLORS)])
        cv.legend([r["family"] for r in rows], [_COLORS[i % len(_COLORS)] for i in range(len(rows))])
        cv.save(svg_path)
        return [csv_path, svg_path]

    if kind == "sweep":
        series = {str(k): np.asarray(v, dtype=float).reshape(-1, 2) for k, v in bundle["series"].items()}
        if not series:
            raise IncompleteBundle("sweep bundle has no series")
        write_csv(csv_path, ("series", "x", "y"),
                  [[name, x, y] for name, arr in series.items() for x, y in arr])
        allv = np.vstack(list(series.values()))
        cv = _Canvas(bundle.get("title", "sweep"), _span(allv[:, 0]), _span(allv[:, 1]),
                     bundle.get("xlabel", "x"), bundle.get("ylabel", "MAPE"))
        for i, arr in enumerate(series.values()):
            c = _COLORS[i % len(_COLORS)]
            cv.polyline(arr[:, 0], arr[:, 1], c)
            cv.dots(arr[:, 0], arr[:, 1], c)
        cv.legend(list(series), _COLORS)
        cv.save(svg_path)
        return [csv_path, svg_path]

    if kind == "margin":
        a = np.asarray(bundle["actual"], dtype=float)
        p = np.asarray(bundle["predicted"], dtype=float)
        m = float(bundle.get("margin", 0.08))
        rel = np.abs(p - a) / np.abs(a)
        write_csv(csv_path, ("actual", "predicted", "rel_error", "within"),
                  [[x, y, r, int(r <= m)] for x, y, r in zip(a, p, rel)])
        lim = _span(np.concatenate([a, p]))
        cv = _Canvas(f"holdout predictions, +/-{m:.0%} margin", lim, lim, "actual", "predicted")
        xs = np.array(lim)
        cv.polyline(xs, xs, "black")
        cv.polyline(xs, xs * (1 + m), "crimson", dash=True)
        cv.polyline(xs, xs * (1 - m), "crimson", dash=True)
        cv.dots(a, p, "steelblue")
        cv.save(svg_path)
        return [csv_path, svg_path]

    edges = np.asarray(bundle["edges"], dtype=float)
    counts = np.asarray(bundle["counts"], dtype=float)
    write_csv(csv_path, ("lo", "hi", "count"), [[lo, hi, int(c)] for lo, hi, c in zip(edges, edges[1:], counts)])
    title = "physics coefficient"
    if "mean" in bundle:
        title += f" (mean {bundle['mean']:.3f}, std {bundle.get('std', 0.0):.3f})"
    cv = _Canvas(title, (float(edges[0]), float(edges[-1])), (0, max(float(counts.max()), 1.0) * 1.1),
                 "PC", "count")
    for lo, hi, c in zip(edges, edges[1:], counts):
        cv.rect(lo, hi, c)
    cv.save(svg_path)
    return [csv_path, svg_path]
