"""Standalone SVG charts for sweep results, each with a CSV sidecar of plotted values."""

from __future__ import annotations

import csv
import math
from html import escape
from pathlib import Path
from typing import Optional, Sequence, Union

from .harness import mean_stderr, read_results

PathLike = Union[str, Path]

PALETTE = ["#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f"]
WIDTH, HEIGHT = 640, 400
MARGIN = dict(left=64, right=150, top=40, bottom=52)


class ChartError(ValueError):
    pass


class Svg:
    def __init__(self, width: int = WIDTH, height: int = HEIGHT):
        self.width, self.height = width, height
        self.parts: list[str] = []

    def add(self, tag: str, text: Optional[str] = None, **attrs) -> None:
        attr = " ".join(f'{k.rstrip("_").replace("_", "-")}="{escape(str(v))}"' for k, v in attrs.items())
        if text is None:
            self.parts.append(f"<{tag} {attr}/>")
        else:
            self.parts.append(f"<{tag} {attr}>{escape(text)}</{tag}>")

    def line(self, x1, y1, x2, y2, stroke="#000", **kw):
        self.add("line", x1=f"{x1:.2f}", y1=f"{y1:.2f}", x2=f"{x2:.2f}", y2=f"{y2:.2f}", stroke=stroke, **kw)

    def text(self, x, y, s, size=12, anchor="middle", **kw):
        self.add("text", s, x=f"{x:.2f}", y=f"{y:.2f}", font_size=size, text_anchor=anchor,
                 font_family="sans-serif", **kw)

    def render(self) -> str:
        head = (
            f'<svg xmlns="http://www.w3.org/2000/svg" width="{self.width}" height="{self.height}" '
            f'viewBox="0 0 {self.width} {self.height}">'
        )
        return "\n".join([head, f'<rect width="{self.width}" height="{self.height}" fill="white"/>', *self.parts, "</svg>"]) + "\n"


class _Frame:
    """Plot-area geometry with linear (or log10) x and linear y."""

    def __init__(self, svg: Svg, xlim, ylim, logx=False):
        self.svg, self.logx = svg, logx
        self.x0, self.x1 = MARGIN["left"], svg.width - MARGIN["right"]
        self.y0, self.y1 = svg.height - MARGIN["bottom"], MARGIN["top"]
        lo, hi = (math.log10(v) for v in xlim) if logx else xlim
        if hi == lo:
            lo, hi = lo - 0.5, hi + 0.5
        self.xlim = (lo, hi)
        ylo, yhi = ylim
        if yhi == ylo:
            yhi = ylo + 1.0
        self.ylim = (ylo, yhi)

    def px(self, x):
        v = math.log10(x) if self.logx else x
        lo, hi = self.xlim
        return self.x0 + (v - lo) / (hi - lo) * (self.x1 - self.x0)

    def py(self, y):
        lo, hi = self.ylim
        return self.y0 - (y - lo) / (hi - lo) * (self.y0 - self.y1)

    def axes(self, title, xlabel, ylabel, yticks=5):
        s = self.svg
        s.line(self.x0, self.y0, self.x1, self.y0)
        s.line(self.x0, self.y0, self.x0, self.y1)
        lo, hi = self.ylim
        for k in range(yticks + 1):
            y = lo + (hi - lo) * k / yticks
            s.line(self.x0 - 4, self.py(y), self.x0, self.py(y))
            s.text(self.x0 - 6, self.py(y) + 4, f"{y:.3g}", size=10, anchor="end")
        s.text((self.x0 + self.x1) / 2, 22, title, size=13)
        s.text((self.x0 + self.x1) / 2, s.height - 12, xlabel)
        s.text(16, (self.y0 + self.y1) / 2, ylabel, transform=f"rotate(-90 16 {(self.y0 + self.y1) / 2:.2f})")

    def legend(self, labels, colors, dashed=()):
        for k, (label, color) in enumerate(zip(labels, colors)):
            y = self.y1 + 10 + 18 * k
            extra = {"stroke_dasharray": "5,3"} if label in dashed else {}
            self.svg.line(self.x1 + 12, y, self.x1 + 32, y, stroke=color, stroke_width=2, **extra)
            self.svg.text(self.x1 + 38, y + 4, label, size=11, anchor="start")


def bar_chart(title: str, categories: Sequence[str], series: dict[str, Sequence[float]], ylabel: str) -> str:
    svg = Svg()
    values = [v for vs in series.values() for v in vs]
    frame = _Frame(svg, (0, 1), (0, max(values + [1e-12]) * 1.1))
    frame.axes(title, "feature", ylabel)
    slot = (frame.x1 - frame.x0) / max(len(categories), 1)
    bar = slot * 0.8 / max(len(series), 1)
    for s_idx, (name, vals) in enumerate(series.items()):
        color = PALETTE[s_idx % len(PALETTE)]
        for c_idx, v in enumerate(vals):
            x = frame.x0 + c_idx * slot + slot * 0.1 + s_idx * bar
            svg.add("rect", x=f"{x:.2f}", y=f"{frame.py(v):.2f}", width=f"{bar:.2f}",
                    height=f"{frame.y0 - frame.py(v):.2f}", fill=color, class_="bar")
    for c_idx, cat in enumerate(categories):
        svg.text(frame.x0 + (c_idx + 0.5) * slot, frame.y0 + 14, cat, size=10)
    frame.legend(list(series), PALETTE)
    return svg.render()


def line_chart(
    title: str,
    series: dict[str, list[tuple[float, float, float]]],
    xlabel: str,
    ylabel: str,
    logx: bool = False,
    dashed: Sequence[str] = (),
) -> str:
    """``series`` maps a label to ``(x, y, stderr)`` points; nan stderr draws no bar."""
    svg = Svg()
    pts = [p for ps in series.values() for p in ps]
    xs = [p[0] for p in pts]
    lows = [p[1] - (p[2] if math.isfinite(p[2]) else 0) for p in pts]
    highs = [p[1] + (p[2] if math.isfinite(p[2]) else 0) for p in pts]
    span = (max(highs) - min(lows)) or abs(max(highs)) or 1.0
    frame = _Frame(svg, (min(xs), max(xs)), (min(lows) - 0.05 * span, max(highs) + 0.05 * span), logx=logx)
    frame.axes(title, xlabel, ylabel)
    for x in sorted(set(xs)):
        svg.text(frame.px(x), frame.y0 + 14, f"{x:g}", size=10)
    colors = []
    for k, (name, ps) in enumerate(series.items()):
        color = PALETTE[k % len(PALETTE)]
        colors.append(color)
        ps = sorted(ps)
        extra = {"stroke_dasharray": "5,3"} if name in dashed else {}
        coords = " ".join(f"{frame.px(x):.2f},{frame.py(y):.2f}" for x, y, _ in ps)
        svg.add("polyline", points=coords, fill="none", stroke=color, stroke_width=2, class_="series", **extra)
        for x, y, se in ps:
            svg.add("circle", cx=f"{frame.px(x):.2f}", cy=f"{frame.py(y):.2f}", r=3, fill=color)
            if math.isfinite(se) and se > 0:
                svg.line(frame.px(x), frame.py(y - se), frame.px(x), frame.py(y + se), stroke=color)
    frame.legend(list(series), colors, dashed)
    return svg.render()


def _write_sidecar(path: Path, header, rows) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)


def _rule_label(rule, tau) -> str:
    return "linear" if rule == "linear" else f"softmax_tau{tau}"


def _safe(s: str) -> str:
    return "".join(ch if ch.isalnum() or ch in "-_." else "_" for ch in s)


def emit_charts(results_path: PathLike, out_dir: PathLike, embed_seed: int = 17) -> list[Path]:
    """Render bar, iteration and utility charts for a results CSV.

    Bar charts show one instance per (dataset, rule, tau, d): the given embed
    seed if present (else the smallest), the largest n, the smallest run seed.
    """
    try:
        rows = [r for r in read_results(results_path) if not r.get("error")]
    except (OSError, csv.Error, UnicodeDecodeError) as exc:
        raise ChartError(f"cannot read results: {exc}") from None
    if not rows:
        raise ChartError(f"{results_path}: no usable result rows")
    try:
        for r in rows:
            int(r["n"]), int(r["d"]), int(r["embed_seed"]), int(r["run_seed"]), int(r["iterations"])
            float(r["avg_prod_utility"])
    except (KeyError, TypeError, ValueError) as exc:
        raise ChartError(f"{results_path}: malformed results row ({exc})") from None

    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    written: list[Path] = []

    def emit(stem: str, svg: str, header, sidecar_rows):
        p = out / f"{_safe(stem)}.svg"
        p.write_text(svg)
        _write_sidecar(p.with_suffix(".csv"), header, sidecar_rows)
        written.append(p)

    # (a) producer split vs user weight, one instance per (dataset, rule, tau, d)
    groups: dict = {}
    for r in rows:
        groups.setdefault((r["dataset"], r["rule"], r["tau"], int(r["d"])), []).append(r)
    for (ds, rule, tau, d), rs in groups.items():
        seeds = {int(r["embed_seed"]) for r in rs}
        es = embed_seed if embed_seed in seeds else min(seeds)
        pick = [r for r in rs if int(r["embed_seed"]) == es]
        n = max(int(r["n"]) for r in pick)
        pick = min((r for r in pick if int(r["n"]) == n), key=lambda r: int(r["run_seed"]))
        weights = [float(v) for v in pick["user_weights"].split(";")]
        fractions = [float(v) for v in pick["producer_fractions"].split(";")]
        label = _rule_label(rule, tau)
        emit(
            f"bars_{ds}_{label}_d{d}",
            bar_chart(f"{ds}, {label}, n={n}, d={d}", [str(f) for f in range(d)],
                      {"avg user weight": weights, "producer fraction": fractions}, "share"),
            ["feature", "avg_user_weight", "producer_fraction"],
            [[f, repr(w), repr(p)] for f, (w, p) in enumerate(zip(weights, fractions))],
        )

    converged = [r for r in rows if r["converged"] == "1"]

    # (b) iterations vs n, one line per d
    groups = {}
    for r in converged:
        groups.setdefault((r["dataset"], r["rule"], r["tau"]), {}).setdefault(int(r["d"]), {}).setdefault(
            int(r["n"]), []).append(int(r["iterations"]))
    for (ds, rule, tau), by_d in groups.items():
        series, side = {}, []
        for d in sorted(by_d):
            pts = []
            for n in sorted(by_d[d]):
                m, se = mean_stderr(by_d[d][n])
                pts.append((n, m, se))
                side.append([d, n, repr(m), repr(se), len(by_d[d][n])])
            series[f"d={d}"] = pts
        label = _rule_label(rule, tau)
        emit(f"iterations_{ds}_{label}", line_chart(f"iterations to convergence, {ds}, {label}", series,
                                                    "producers n", "iterations"),
             ["d", "n", "mean_iterations", "stderr", "count"], side)

    # (c) average producer utility vs tau, one line per n (linear rule drawn flat, dashed)
    groups = {}
    for r in converged:
        groups.setdefault((r["dataset"], int(r["d"])), []).append(r)
    for (ds, d), rs in groups.items():
        soft = [r for r in rs if r["rule"] == "softmax"]
        if not soft:
            continue
        taus = sorted({float(r["tau"]) for r in soft})
        series, side, dashed = {}, [], []
        for n in sorted({int(r["n"]) for r in rs}):
            pts = []
            for tau in taus:
                vals = [float(r["avg_prod_utility"]) for r in soft if int(r["n"]) == n and float(r["tau"]) == tau]
                if vals:
                    m, se = mean_stderr(vals)
                    pts.append((tau, m, se))
                    side.append([n, "softmax", repr(tau), repr(m), repr(se), len(vals)])
            if pts:
                series[f"n={n}"] = pts
            lin = [float(r["avg_prod_utility"]) for r in rs if r["rule"] == "linear" and int(r["n"]) == n]
            if lin:
                m, se = mean_stderr(lin)
                series[f"linear n={n}"] = [(tau, m, se) for tau in taus]
                dashed.append(f"linear n={n}")
                side.append([n, "linear", "", repr(m), repr(se), len(lin)])
        if series:
            emit(f"utility_{ds}_d{d}", line_chart(f"average producer utility, {ds}, d={d}", series,
                                                  "softmax temperature", "avg producer utility",
                                                  logx=True, dashed=dashed),
                 ["n", "rule", "tau", "mean_avg_prod_utility", "stderr", "count"], side)
    return written
