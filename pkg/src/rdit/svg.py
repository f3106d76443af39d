"""Minimal deterministic SVG charts.

Output depends only on the inputs: fixed canvas, fixed number formatting,
no timestamps or random ids. That keeps reruns byte-identical and lets plot
regressions be checked with a text diff.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence
from xml.sax.saxutils import escape

WIDTH, HEIGHT = 720, 440
MARGIN = {"left": 70, "right": 20, "top": 40, "bottom": 60}


def _fmt(v: float) -> str:
    s = f"{v:.2f}".rstrip("0").rstrip(".")
    return "0" if s in ("-0", "") else s


def nice_ticks(lo: float, hi: float, n: int = 6) -> list[float]:
    """Round tick values covering ``[lo, hi]``."""
    if not (math.isfinite(lo) and math.isfinite(hi)) or hi <= lo:
        return [lo]
    raw = (hi - lo) / max(n - 1, 1)
    mag = 10 ** math.floor(math.log10(raw))
    step = next(m * mag for m in (1, 2, 2.5, 5, 10) if m * mag >= raw)
    start = math.ceil(lo / step - 1e-9) * step
    ticks = []
    t = start
    while t <= hi + 1e-9 * step:
        ticks.append(round(t, 10))
        t += step
    return ticks


@dataclass
class Chart:
    title: str
    x_label: str
    y_label: str
    x_range: tuple[float, float]
    y_range: tuple[float, float]
    x_tick_labels: dict[float, str] | None = None
    _body: list[str] = field(default_factory=list)
    _legend: list[tuple[str, str, str]] = field(default_factory=list)

    def __post_init__(self) -> None:
        x0, x1 = self.x_range
        y0, y1 = self.y_range
        if x1 <= x0:
            self.x_range = (x0 - 1, x0 + 1)
        if y1 <= y0:
            self.y_range = (y0 - 1, y0 + 1)

    # coordinate maps
    def sx(self, x: float) -> float:
        x0, x1 = self.x_range
        return MARGIN["left"] + (x - x0) / (x1 - x0) * (WIDTH - MARGIN["left"] - MARGIN["right"])

    def sy(self, y: float) -> float:
        y0, y1 = self.y_range
        return HEIGHT - MARGIN["bottom"] - (y - y0) / (y1 - y0) * (HEIGHT - MARGIN["top"] - MARGIN["bottom"])

    def shade_x(self, lo: float, hi: float, color: str = "#cccccc", label: str | None = None) -> None:
        top, bottom = self.sy(self.y_range[1]), self.sy(self.y_range[0])
        x0, x1 = self.sx(lo), self.sx(hi)
        self._body.append(
            f'<rect x="{_fmt(x0)}" y="{_fmt(top)}" width="{_fmt(x1 - x0)}" height="{_fmt(bottom - top)}" '
            f'fill="{color}" fill-opacity="0.5"/>'
        )
        if label:
            self._legend.append(("rect", color, label))

    def vline(self, x: float, color: str = "#444444", dash: bool = True) -> None:
        d = ' stroke-dasharray="4 3"' if dash else ""
        self._body.append(
            f'<line x1="{_fmt(self.sx(x))}" y1="{_fmt(self.sy(self.y_range[0]))}" x2="{_fmt(self.sx(x))}" '
            f'y2="{_fmt(self.sy(self.y_range[1]))}" stroke="{color}"{d}/>'
        )

    def hline(self, y: float, color: str = "#888888") -> None:
        self._body.append(
            f'<line x1="{_fmt(self.sx(self.x_range[0]))}" y1="{_fmt(self.sy(y))}" '
            f'x2="{_fmt(self.sx(self.x_range[1]))}" y2="{_fmt(self.sy(y))}" stroke="{color}"/>'
        )

    def line(self, xs: Sequence[float], ys: Sequence[float], color: str = "#1f4e99", label: str | None = None) -> None:
        pts = [(x, y) for x, y in zip(xs, ys) if math.isfinite(x) and math.isfinite(y)]
        if len(pts) < 2:
            return
        path = " ".join(f"{_fmt(self.sx(x))},{_fmt(self.sy(y))}" for x, y in pts)
        self._body.append(f'<polyline points="{path}" fill="none" stroke="{color}" stroke-width="2"/>')
        if label:
            self._legend.append(("line", color, label))

    def errorbars(self, xs: Sequence[float], lo: Sequence[float], hi: Sequence[float], color: str = "#999999") -> None:
        for x, a, b in zip(xs, lo, hi):
            if not all(math.isfinite(v) for v in (x, a, b)):
                continue
            self._body.append(
                f'<line x1="{_fmt(self.sx(x))}" y1="{_fmt(self.sy(a))}" x2="{_fmt(self.sx(x))}" '
                f'y2="{_fmt(self.sy(b))}" stroke="{color}"/>'
            )

    def points(
        self,
        xs: Sequence[float],
        ys: Sequence[float],
        shape: str = "circle",
        color: str = "#1f4e99",
        filled: Sequence[bool] | bool = True,
        label: str | None = None,
    ) -> None:
        fills = [filled] * len(xs) if isinstance(filled, bool) else list(filled)
        for x, y, f in zip(xs, ys, fills):
            if not (math.isfinite(x) and math.isfinite(y)):
                continue
            self._body.append(_marker(shape, self.sx(x), self.sy(y), color, f))
        if label:
            self._legend.append((shape, color, label))

    def _axes(self) -> list[str]:
        out = []
        x0, x1 = self.x_range
        y0, y1 = self.y_range
        left, bottom = self.sx(x0), self.sy(y0)
        out.append(
            f'<line x1="{_fmt(left)}" y1="{_fmt(bottom)}" x2="{_fmt(self.sx(x1))}" y2="{_fmt(bottom)}" stroke="black"/>'
        )
        out.append(
            f'<line x1="{_fmt(left)}" y1="{_fmt(bottom)}" x2="{_fmt(left)}" y2="{_fmt(self.sy(y1))}" stroke="black"/>'
        )
        if self.x_tick_labels:
            xt = sorted(self.x_tick_labels.items())
        else:
            xt = [(t, _fmt(t)) for t in nice_ticks(x0, x1)]
        for t, lab in xt:
            if not x0 <= t <= x1:
                continue
            x = self.sx(t)
            out.append(f'<line x1="{_fmt(x)}" y1="{_fmt(bottom)}" x2="{_fmt(x)}" y2="{_fmt(bottom + 5)}" stroke="black"/>')
            out.append(f'<text x="{_fmt(x)}" y="{_fmt(bottom + 18)}" font-size="11" text-anchor="middle">{escape(lab)}</text>')
        for t in nice_ticks(y0, y1):
            y = self.sy(t)
            out.append(f'<line x1="{_fmt(left - 5)}" y1="{_fmt(y)}" x2="{_fmt(left)}" y2="{_fmt(y)}" stroke="black"/>')
            out.append(f'<text x="{_fmt(left - 8)}" y="{_fmt(y + 4)}" font-size="11" text-anchor="end">{_fmt(t)}</text>')
        out.append(
            f'<text x="{_fmt((left + self.sx(x1)) / 2)}" y="{HEIGHT - 15}" font-size="13" '
            f'text-anchor="middle">{escape(self.x_label)}</text>'
        )
        out.append(
            f'<text x="18" y="{_fmt((bottom + self.sy(y1)) / 2)}" font-size="13" text-anchor="middle" '
            f'transform="rotate(-90 18 {_fmt((bottom + self.sy(y1)) / 2)})">{escape(self.y_label)}</text>'
        )
        out.append(
            f'<text x="{WIDTH // 2}" y="24" font-size="15" text-anchor="middle" font-weight="bold">'
            f"{escape(self.title)}</text>"
        )
        return out

    def _legend_items(self) -> list[str]:
        out = []
        x = WIDTH - MARGIN["right"] - 180
        for i, (kind, color, label) in enumerate(self._legend):
            y = MARGIN["top"] + 14 + 16 * i
            if kind == "line":
                out.append(f'<line x1="{x}" y1="{y}" x2="{x + 16}" y2="{y}" stroke="{color}" stroke-width="2"/>')
            elif kind == "rect":
                out.append(f'<rect x="{x}" y="{y - 5}" width="16" height="10" fill="{color}" fill-opacity="0.5"/>')
            else:
                out.append(_marker(kind, x + 8, y, color, True))
            out.append(f'<text x="{x + 22}" y="{y + 4}" font-size="11">{escape(label)}</text>')
        return out

    def render(self) -> str:
        parts = [
            '<?xml version="1.0" encoding="UTF-8"?>',
            f'<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" '
            f'viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif">',
            f'<rect width="{WIDTH}" height="{HEIGHT}" fill="white"/>',
            *self._body,
            *self._axes(),
            *self._legend_items(),
            "</svg>",
        ]
        return "\n".join(parts) + "\n"

    def save(self, path: str | Path) -> Path:
        p = Path(path)
        p.parent.mkdir(parents=True, exist_ok=True)
        p.write_text(self.render(), encoding="utf-8")
        return p


def _marker(shape: str, x: float, y: float, color: str, filled: bool) -> str:
    fill = color if filled else "white"
    if shape == "triangle":
        pts = f"{_fmt(x)},{_fmt(y - 5)} {_fmt(x - 5)},{_fmt(y + 4)} {_fmt(x + 5)},{_fmt(y + 4)}"
        return f'<polygon points="{pts}" fill="{fill}" stroke="{color}"/>'
    if shape == "square":
        return f'<rect x="{_fmt(x - 4)}" y="{_fmt(y - 4)}" width="8" height="8" fill="{fill}" stroke="{color}"/>'
    return f'<circle cx="{_fmt(x)}" cy="{_fmt(y)}" r="4" fill="{fill}" stroke="{color}"/>'


def padded_range(values: Sequence[float], pad: float = 0.05) -> tuple[float, float]:
    vals = [v for v in values if math.isfinite(v)]
    if not vals:
        return 0.0, 1.0
    lo, hi = min(vals), max(vals)
    span = hi - lo if hi > lo else max(abs(hi), 1.0)
    return lo - pad * span, hi + pad * span
