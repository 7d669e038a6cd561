"""Minimal self-contained SVG line plots."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from xml.sax.saxutils import escape

import numpy as np

__all__ = ["Series", "HLine", "Plot"]

PALETTE = ["#1f4e9c", "#2a9d5c", "#7b3fa0", "#c77c02", "#555555"]


@dataclass
class Series:
    x: np.ndarray
    y: np.ndarray
    label: str = ""
    color: str | None = None


@dataclass
class HLine:
    y: float
    label: str = ""
    color: str = "#999999"
    dash: str = "4 3"


@dataclass
class Plot:
    title: str = ""
    xlabel: str = ""
    ylabel: str = ""
    width: int = 720
    height: int = 420
    series: list[Series] = field(default_factory=list)
    hlines: list[HLine] = field(default_factory=list)
    markers: list[tuple[float, float]] = field(default_factory=list)
    ylim: tuple[float, float] | None = None

    _ml, _mr, _mt, _mb = 64, 150, 36, 48

    def _limits(self):
        xs = [s.x[np.isfinite(s.y)] for s in self.series if len(s.x)]
        ys = [s.y[np.isfinite(s.y)] for s in self.series if len(s.y)]
        x = np.concatenate(xs) if xs else np.array([0.0, 1.0])
        y = np.concatenate(ys) if ys else np.array([0.0, 1.0])
        x0, x1 = (float(x.min()), float(x.max())) if len(x) else (0.0, 1.0)
        if self.ylim:
            y0, y1 = self.ylim
        else:
            extra = [h.y for h in self.hlines]
            y0 = float(min(np.min(y) if len(y) else 0.0, *extra)) if extra else float(np.min(y))
            y1 = float(max(np.max(y) if len(y) else 1.0, *extra)) if extra else float(np.max(y))
        if x1 == x0:
            x1 = x0 + 1.0
        if y1 == y0:
            y1 = y0 + 1.0
        pad = 0.04 * (y1 - y0)
        return x0, x1, y0 - pad, y1 + pad

    def render(self) -> str:
        x0, x1, y0, y1 = self._limits()
        pw = self.width - self._ml - self._mr
        ph = self.height - self._mt - self._mb

        def X(v):
            return self._ml + (v - x0) / (x1 - x0) * pw

        def Y(v):
            return self._mt + (y1 - v) / (y1 - y0) * ph

        out = [
            f'<svg xmlns="http://www.w3.org/2000/svg" width="{self.width}" height="{self.height}" '
            f'viewBox="0 0 {self.width} {self.height}" font-family="sans-serif" font-size="11">',
            '<rect width="100%" height="100%" fill="white"/>',
            f'<rect x="{self._ml}" y="{self._mt}" width="{pw}" height="{ph}" fill="none" stroke="#333"/>',
        ]
        for t in _ticks(x0, x1):
            out.append(f'<line x1="{X(t):.2f}" y1="{self._mt + ph}" x2="{X(t):.2f}" y2="{self._mt + ph + 4}" stroke="#333"/>')
            out.append(f'<text x="{X(t):.2f}" y="{self._mt + ph + 16}" text-anchor="middle">{t:g}</text>')
        for t in _ticks(y0, y1):
            out.append(f'<line x1="{self._ml - 4}" y1="{Y(t):.2f}" x2="{self._ml}" y2="{Y(t):.2f}" stroke="#333"/>')
            out.append(f'<text x="{self._ml - 7}" y="{Y(t) + 4:.2f}" text-anchor="end">{t:g}</text>')
        if self.title:
            out.append(f'<text x="{self._ml + pw / 2}" y="20" text-anchor="middle" font-size="13">{escape(self.title)}</text>')
        if self.xlabel:
            out.append(f'<text x="{self._ml + pw / 2}" y="{self.height - 10}" text-anchor="middle">{escape(self.xlabel)}</text>')
        if self.ylabel:
            out.append(
                f'<text x="16" y="{self._mt + ph / 2}" text-anchor="middle" '
                f'transform="rotate(-90 16 {self._mt + ph / 2})">{escape(self.ylabel)}</text>'
            )
        out.append(f'<clipPath id="plotarea"><rect x="{self._ml}" y="{self._mt}" width="{pw}" height="{ph}"/></clipPath>')
        out.append('<g clip-path="url(#plotarea)">')
        legend = []
        for h in self.hlines:
            out.append(
                f'<line x1="{self._ml}" y1="{Y(h.y):.2f}" x2="{self._ml + pw}" y2="{Y(h.y):.2f}" '
                f'stroke="{h.color}" stroke-dasharray="{h.dash}"/>'
            )
        for i, s in enumerate(self.series):
            color = s.color or PALETTE[i % len(PALETTE)]
            for run in _finite_runs(s.x, s.y):
                pts = " ".join(f"{X(a):.2f},{Y(b):.2f}" for a, b in run)
                out.append(f'<polyline points="{pts}" fill="none" stroke="{color}" stroke-width="1.3"/>')
            if s.label:
                legend.append((s.label, color, ""))
        for mx, my in self.markers:
            out.append(f'<circle cx="{X(mx):.2f}" cy="{Y(my):.2f}" r="3.5" fill="#d62728"/>')
        out.append("</g>")
        for h in self.hlines:
            if h.label:
                out.append(f'<text x="{self._ml + pw + 6}" y="{Y(h.y) + 4:.2f}" fill="{h.color}">{escape(h.label)}</text>')
        for i, (label, color, _) in enumerate(legend):
            y = self._mt + 14 * i + 8
            out.append(f'<line x1="{self._ml + 8}" y1="{y}" x2="{self._ml + 28}" y2="{y}" stroke="{color}" stroke-width="2"/>')
            out.append(f'<text x="{self._ml + 32}" y="{y + 4}">{escape(label)}</text>')
        out.append("</svg>")
        return "\n".join(out) + "\n"


def _finite_runs(x, y):
    run = []
    for a, b in zip(np.asarray(x, float), np.asarray(y, float)):
        if math.isfinite(a) and math.isfinite(b):
            run.append((a, b))
        elif run:
            yield run
            run = []
    if run:
        yield run


def _ticks(lo: float, hi: float, target: int = 6) -> list[float]:
    span = hi - lo
    raw = span / target
    mag = 10 ** math.floor(math.log10(raw))
    step = min((m * mag for m in (1, 2, 5, 10)), key=lambda s: abs(s - raw))
    start = math.ceil(lo / step) * step
    ticks = []
    t = start
    while t <= hi + 1e-12 * span:
        ticks.append(round(t, 12))
        t += step
    return ticks
