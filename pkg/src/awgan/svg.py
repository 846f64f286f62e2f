"""Tiny static SVG plotting: line, scatter, bar and heat-map panels.

Output is byte-deterministic for identical input (fixed number formatting,
no timestamps, no random ids).
"""

from __future__ import annotations

import math
from html import escape
from pathlib import Path

PALETTE = ["#1f77b4", "#2ca02c", "#d62728", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f"]


def _f(v: float) -> str:
    return f"{v:.2f}"


def _nice_ticks(lo: float, hi: float, n: int = 5) -> list[float]:
    if hi <= lo:
        return [lo]
    raw = (hi - lo) / n
    mag = 10 ** math.floor(math.log10(raw))
    step = min((m * mag for m in (1, 2, 5, 10) if m * mag >= raw), default=raw)
    start = math.ceil(lo / step) * step
    ticks = []
    t = start
    while t <= hi + 1e-9 * step:
        ticks.append(round(t, 10))
        t += step
    return ticks


def _limits(values, pad: float = 0.05) -> tuple[float, float]:
    finite = [v for v in values if math.isfinite(v)]
    if not finite:
        return 0.0, 1.0
    lo, hi = min(finite), max(finite)
    if hi == lo:
        return lo - 1.0, hi + 1.0
    span = hi - lo
    return lo - pad * span, hi + pad * span


class Axes:
    def __init__(self, fig: "Figure", x: float, y: float, w: float, h: float,
                 xlim: tuple[float, float], ylim: tuple[float, float],
                 title: str = "", xlabel: str = "", ylabel: str = ""):
        self.fig, self.x, self.y, self.w, self.h = fig, x, y, w, h
        self.xlim, self.ylim = xlim, ylim
        self.legend_items: list[tuple[str, str]] = []
        self._frame(title, xlabel, ylabel)

    def px(self, v: float) -> float:
        lo, hi = self.xlim
        return self.x + (v - lo) / (hi - lo) * self.w

    def py(self, v: float) -> float:
        lo, hi = self.ylim
        return self.y + self.h - (v - lo) / (hi - lo) * self.h

    def _frame(self, title, xlabel, ylabel) -> None:
        add = self.fig.elements.append
        add(f'<rect x="{_f(self.x)}" y="{_f(self.y)}" width="{_f(self.w)}" height="{_f(self.h)}" '
            f'fill="none" stroke="#333" stroke-width="1"/>')
        for t in _nice_ticks(*self.xlim):
            px = self.px(t)
            add(f'<line x1="{_f(px)}" y1="{_f(self.y + self.h)}" x2="{_f(px)}" y2="{_f(self.y + self.h + 4)}" stroke="#333"/>')
            add(f'<text x="{_f(px)}" y="{_f(self.y + self.h + 15)}" font-size="9" text-anchor="middle">{t:g}</text>')
        for t in _nice_ticks(*self.ylim):
            py = self.py(t)
            add(f'<line x1="{_f(self.x - 4)}" y1="{_f(py)}" x2="{_f(self.x)}" y2="{_f(py)}" stroke="#333"/>')
            add(f'<text x="{_f(self.x - 6)}" y="{_f(py + 3)}" font-size="9" text-anchor="end">{t:g}</text>')
        if title:
            add(f'<text x="{_f(self.x + self.w / 2)}" y="{_f(self.y - 6)}" font-size="11" '
                f'text-anchor="middle">{escape(title)}</text>')
        if xlabel:
            add(f'<text x="{_f(self.x + self.w / 2)}" y="{_f(self.y + self.h + 28)}" font-size="10" '
                f'text-anchor="middle">{escape(xlabel)}</text>')
        if ylabel:
            cx, cy = self.x - 34, self.y + self.h / 2
            add(f'<text x="{_f(cx)}" y="{_f(cy)}" font-size="10" text-anchor="middle" '
                f'transform="rotate(-90 {_f(cx)} {_f(cy)})">{escape(ylabel)}</text>')

    def line(self, xs, ys, color: str, label: str | None = None, dashed: bool = False) -> None:
        pts = " ".join(f"{_f(self.px(x))},{_f(self.py(y))}" for x, y in zip(xs, ys) if math.isfinite(y))
        dash = ' stroke-dasharray="4 3"' if dashed else ""
        self.fig.elements.append(f'<polyline points="{pts}" fill="none" stroke="{color}" stroke-width="1.2"{dash}/>')
        if label:
            self.legend_items.append((label, color))

    def hline(self, y: float, color: str = "#999", label: str | None = None) -> None:
        self.line(self.xlim, (y, y), color, label, dashed=True)

    def scatter(self, xs, ys, color: str, r: float = 1.5, label: str | None = None) -> None:
        for x, y in zip(xs, ys):
            if self.xlim[0] <= x <= self.xlim[1] and self.ylim[0] <= y <= self.ylim[1]:
                self.fig.elements.append(
                    f'<circle cx="{_f(self.px(x))}" cy="{_f(self.py(y))}" r="{_f(r)}" fill="{color}" fill-opacity="0.6"/>')
        if label:
            self.legend_items.append((label, color))

    def bars(self, values, color: str, label: str | None = None) -> None:
        base = self.py(max(self.ylim[0], min(0.0, self.ylim[1])))
        for i, v in enumerate(values):
            x0 = self.px(i - 0.35)
            x1 = self.px(i + 0.35)
            y = self.py(v)
            top, height = min(y, base), abs(base - y)
            self.fig.elements.append(
                f'<rect x="{_f(x0)}" y="{_f(top)}" width="{_f(x1 - x0)}" height="{_f(height)}" fill="{color}"/>')
        if label:
            self.legend_items.append((label, color))

    def heatmap(self, matrix, row_labels, col_labels, fmt: str = "{:.2f}") -> None:
        """Rows map to y (top to bottom), columns to x; NaN cells are hatched as invalid."""
        rows, cols = len(matrix), len(matrix[0])
        finite = [v for row in matrix for v in row if math.isfinite(v)]
        lo, hi = (min(finite), max(finite)) if finite else (0.0, 1.0)
        cw, ch = self.w / cols, self.h / rows
        for i, row in enumerate(matrix):
            for j, v in enumerate(row):
                x, y = self.x + j * cw, self.y + i * ch
                if math.isfinite(v):
                    t = 0.5 if hi == lo else (v - lo) / (hi - lo)
                    shade = int(round(235 - 180 * t))
                    fill, text = f"rgb({shade},{shade},255)", fmt.format(v)
                else:
                    fill, text = "#ddd", "invalid"
                self.fig.elements.append(
                    f'<rect x="{_f(x)}" y="{_f(y)}" width="{_f(cw)}" height="{_f(ch)}" fill="{fill}" stroke="#fff"/>')
                self.fig.elements.append(
                    f'<text x="{_f(x + cw / 2)}" y="{_f(y + ch / 2 + 3)}" font-size="9" text-anchor="middle">{text}</text>')
        for i, lab in enumerate(row_labels):
            self.fig.elements.append(
                f'<text x="{_f(self.x - 4)}" y="{_f(self.y + (i + 0.5) * ch + 3)}" font-size="9" text-anchor="end">{escape(str(lab))}</text>')
        for j, lab in enumerate(col_labels):
            self.fig.elements.append(
                f'<text x="{_f(self.x + (j + 0.5) * cw)}" y="{_f(self.y + self.h + 12)}" font-size="9" text-anchor="middle">{escape(str(lab))}</text>')

    def legend(self) -> None:
        for i, (label, color) in enumerate(self.legend_items):
            y = self.y + 10 + 12 * i
            x = self.x + self.w - 110
            self.fig.elements.append(f'<rect x="{_f(x)}" y="{_f(y - 7)}" width="10" height="8" fill="{color}"/>')
            self.fig.elements.append(f'<text x="{_f(x + 14)}" y="{_f(y)}" font-size="9">{escape(label)}</text>')


class Figure:
    def __init__(self, width: float, height: float, title: str = ""):
        self.width, self.height = width, height
        self.elements: list[str] = []
        if title:
            self.elements.append(f'<text x="{_f(width / 2)}" y="16" font-size="13" text-anchor="middle">{escape(title)}</text>')

    def axes(self, x, y, w, h, xlim=None, ylim=None, **labels) -> Axes:
        return Axes(self, x, y, w, h, xlim or (0.0, 1.0), ylim or (0.0, 1.0), **labels)

    def to_string(self) -> str:
        head = (f'<svg xmlns="http://www.w3.org/2000/svg" width="{_f(self.width)}" height="{_f(self.height)}" '
                f'viewBox="0 0 {_f(self.width)} {_f(self.height)}" font-family="sans-serif">')
        body = [head, f'<rect width="100%" height="100%" fill="white"/>', *self.elements, "</svg>"]
        return "\n".join(body) + "\n"

    def save(self, path) -> Path:
        path = Path(path)
        try:
            path.write_text(self.to_string())
        except OSError as exc:
            raise OSError(f"cannot write {path}: {exc}") from exc
        return path


def limits(values, pad: float = 0.05) -> tuple[float, float]:
    return _limits(list(values), pad)
