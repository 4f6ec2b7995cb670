"""Static SVG figures: Wigner ellipses, log-log sweeps, contour maps, decay curves."""

from __future__ import annotations

import html
import json
import logging
import math
from collections.abc import Iterable, Mapping, Sequence
from dataclasses import dataclass
from datetime import UTC, datetime
from pathlib import Path
from typing import Any

import numpy as np

from robust_ensembles.core.exceptions import FigureError
from robust_ensembles.core.models import (
    Candidate,
    ContourGrid,
    EllipseSeries,
    SurvivalCurve,
    SweepTable,
)
from robust_ensembles.core.moments import covariance_ellipse

logger = logging.getLogger(__name__)

WIDTH = 720
HEIGHT = 480
MARGIN = {"left": 80, "right": 150, "top": 50, "bottom": 60}

# Greys for successive times in ellipse plots, darkest first.
TIME_SHADES = ("#000000", "#666666", "#b0b0b0", "#d8d8d8")
SERIES_COLORS = ("#1f4e9c", "#c0392b", "#27864a", "#8e44ad", "#d68910", "#555555")

FigureData = SweepTable | ContourGrid | EllipseSeries | SurvivalCurve | Sequence[Any]


class SvgBuilder:
    """Accumulates SVG elements and renders the document."""

    def __init__(self, width: int, height: int) -> None:
        self.width = width
        self.height = height
        self.elements: list[str] = []
        self.comments: list[str] = []

    def add_comment(self, text: str) -> None:
        # "--" is not allowed inside XML comments.
        self.comments.append(f"<!-- {text.replace('--', '- -')} -->")

    def add_rect(
        self,
        x: float,
        y: float,
        width: float,
        height: float,
        fill: str,
        opacity: float = 1.0,
        stroke: str | None = None,
    ) -> None:
        extra = f' stroke="{stroke}"' if stroke else ""
        if opacity < 1.0:
            extra += f' fill-opacity="{opacity:.2f}"'
        self.elements.append(
            f'<rect x="{x:.2f}" y="{y:.2f}" width="{width:.2f}" height="{height:.2f}" '
            f'fill="{fill}"{extra}/>'
        )

    def add_line(
        self,
        x1: float,
        y1: float,
        x2: float,
        y2: float,
        stroke: str = "#000",
        stroke_width: float = 1.0,
        dash: str | None = None,
    ) -> None:
        extra = f' stroke-dasharray="{dash}"' if dash else ""
        self.elements.append(
            f'<line x1="{x1:.2f}" y1="{y1:.2f}" x2="{x2:.2f}" y2="{y2:.2f}" '
            f'stroke="{stroke}" stroke-width="{stroke_width:g}"{extra}/>'
        )

    def add_polyline(
        self, points: Iterable[tuple[float, float]], stroke: str, stroke_width: float = 1.5
    ) -> None:
        coords = " ".join(f"{x:.2f},{y:.2f}" for x, y in points)
        self.elements.append(
            f'<polyline points="{coords}" fill="none" stroke="{stroke}" '
            f'stroke-width="{stroke_width:g}"/>'
        )

    def add_circle(self, cx: float, cy: float, r: float, fill: str) -> None:
        self.elements.append(f'<circle cx="{cx:.2f}" cy="{cy:.2f}" r="{r:g}" fill="{fill}"/>')

    def add_ellipse(
        self,
        cx: float,
        cy: float,
        rx: float,
        ry: float,
        angle_degrees: float,
        stroke: str,
        stroke_width: float = 1.5,
    ) -> None:
        self.elements.append(
            f'<ellipse cx="{cx:.2f}" cy="{cy:.2f}" rx="{rx:.2f}" ry="{ry:.2f}" '
            f'transform="rotate({angle_degrees:.3f} {cx:.2f} {cy:.2f})" fill="none" '
            f'stroke="{stroke}" stroke-width="{stroke_width:g}"/>'
        )

    def add_text(
        self,
        x: float,
        y: float,
        text: str,
        anchor: str = "start",
        font_size: int = 12,
        rotate: float | None = None,
    ) -> None:
        transform = f' transform="rotate({rotate:g} {x:.2f} {y:.2f})"' if rotate else ""
        self.elements.append(
            f'<text x="{x:.2f}" y="{y:.2f}" font-size="{font_size}" '
            f'font-family="sans-serif" text-anchor="{anchor}"{transform}>'
            f"{html.escape(text)}</text>"
        )

    def build(self) -> str:
        header = (
            f'<svg xmlns="http://www.w3.org/2000/svg" width="{self.width}" '
            f'height="{self.height}" viewBox="0 0 {self.width} {self.height}">'
        )
        body = [header, *self.comments, '<rect width="100%" height="100%" fill="#ffffff"/>']
        body.extend(self.elements)
        body.append("</svg>")
        return "\n".join(body) + "\n"


def _padded(lo: float, hi: float, log: bool) -> tuple[float, float]:
    """Widen a degenerate range so a single point still gets an axis."""
    if hi > lo:
        return lo, hi
    if log:
        return lo / 10.0, hi * 10.0
    pad = max(abs(lo) * 0.1, 1.0)
    return lo - pad, hi + pad


@dataclass(frozen=True)
class _Axes:
    """Maps data coordinates into the plotting rectangle."""

    x_range: tuple[float, float]
    y_range: tuple[float, float]
    x_log: bool = False
    y_log: bool = False
    left: float = MARGIN["left"]
    top: float = MARGIN["top"]
    width: float = WIDTH - MARGIN["left"] - MARGIN["right"]
    height: float = HEIGHT - MARGIN["top"] - MARGIN["bottom"]

    @staticmethod
    def _fraction(value: float, bounds: tuple[float, float], log: bool) -> float:
        lo, hi = bounds
        if log:
            return (math.log10(value) - math.log10(lo)) / (math.log10(hi) - math.log10(lo))
        return (value - lo) / (hi - lo)

    def px(self, x: float) -> float:
        return self.left + self.width * self._fraction(x, self.x_range, self.x_log)

    def py(self, y: float) -> float:
        return self.top + self.height * (1.0 - self._fraction(y, self.y_range, self.y_log))

    def _ticks(self, bounds: tuple[float, float], log: bool) -> list[float]:
        lo, hi = bounds
        if log:
            first, last = math.ceil(math.log10(lo) - 1e-9), math.floor(math.log10(hi) + 1e-9)
            decades = [10.0**k for k in range(first, last + 1)]
            return decades or [lo, hi]
        return list(np.linspace(lo, hi, 5))

    def draw(self, svg: SvgBuilder, x_label: str, y_label: str) -> None:
        bottom = self.top + self.height
        right = self.left + self.width
        svg.add_line(self.left, bottom, right, bottom)
        svg.add_line(self.left, self.top, self.left, bottom)
        for tick in self._ticks(self.x_range, self.x_log):
            x = self.px(tick)
            svg.add_line(x, bottom, x, bottom + 5)
            svg.add_text(x, bottom + 18, f"{tick:.3g}", anchor="middle", font_size=10)
        for tick in self._ticks(self.y_range, self.y_log):
            y = self.py(tick)
            svg.add_line(self.left - 5, y, self.left, y)
            svg.add_text(self.left - 8, y + 4, f"{tick:.3g}", anchor="end", font_size=10)
        svg.add_text(self.left + self.width / 2, HEIGHT - 15, x_label, anchor="middle")
        svg.add_text(20, self.top + self.height / 2, y_label, anchor="middle", rotate=-90)


def _legend(svg: SvgBuilder, entries: Sequence[tuple[str, str]]) -> None:
    x = WIDTH - MARGIN["right"] + 15
    for i, (label, color) in enumerate(entries):
        y = MARGIN["top"] + 10 + 18 * i
        svg.add_line(x, y, x + 20, y, stroke=color, stroke_width=2)
        svg.add_text(x + 26, y + 4, label, font_size=11)


def sweep_figure(table: SweepTable, title: str = "") -> SvgBuilder:
    """Log-log plot of the optimal parameters and times along a sweep."""
    series = {
        "alpha*": table.column("alpha"),
        "gamma*": table.column("gamma"),
        "|beta*|": table.column("beta_mag"),
        "tau*": table.column("tau"),
        "tau coherent": table.column("tau_coherent"),
    }
    xs = table.column("param")
    if xs.size == 0:
        raise FigureError("Sweep has no successful points to plot")

    positive = [ys[np.isfinite(ys) & (ys > 0)] for ys in series.values()]
    y_values = np.concatenate(positive) if positive else np.array([])
    if y_values.size == 0:
        raise FigureError("Sweep has no positive values to plot on log axes")
    axes = _Axes(
        x_range=_padded(float(xs.min()), float(xs.max()), log=True),
        y_range=_padded(float(y_values.min()), float(y_values.max()), log=True),
        x_log=True,
        y_log=True,
    )
    svg = SvgBuilder(WIDTH, HEIGHT)
    axes.draw(svg, str(table.param_name), "value")
    entries = []
    for (label, ys), color in zip(series.items(), SERIES_COLORS, strict=False):
        mask = np.isfinite(ys) & (ys > 0)
        points = [
            (axes.px(float(x)), axes.py(float(y)))
            for x, y in zip(xs[mask], ys[mask], strict=True)
        ]
        if not points:
            continue
        if len(points) > 1:
            svg.add_polyline(points, stroke=color)
        for x, y in points:
            svg.add_circle(x, y, 2.5, fill=color)
        entries.append((label, color))
    _legend(svg, entries)
    heading = title or f"Optimal ensemble versus {table.param_name}"
    svg.add_text(WIDTH / 2, 30, heading, "middle", 16)
    return svg


def _shade(fraction: float) -> str:
    """White-to-blue ramp for normalized log τ."""
    level = min(1.0, max(0.0, fraction))
    red = round(255 - 200 * level)
    green = round(255 - 150 * level)
    return f"#{red:02x}{green:02x}ff"


def contour_figure(
    grid: ContourGrid, optimum: Candidate | None = None, title: str = ""
) -> SvgBuilder:
    """Filled map of τ over (β, γ) with realizable cells shaded grey."""
    if grid.tau.size == 0:
        raise FigureError("Contour grid is empty")
    betas, gammas = grid.beta_axis, grid.gamma_axis
    axes = _Axes(
        x_range=_padded(float(betas.min()), float(betas.max()), log=False),
        y_range=_padded(float(gammas.min()), float(gammas.max()), log=False),
    )
    svg = SvgBuilder(WIDTH, HEIGHT)
    finite = grid.tau[np.isfinite(grid.tau) & (grid.tau > 0)]
    log_lo = math.log10(float(finite.min())) if finite.size else 0.0
    log_hi = math.log10(float(finite.max())) if finite.size else 1.0
    span = log_hi - log_lo or 1.0

    cell_w = axes.width / len(betas)
    cell_h = axes.height / len(gammas)
    for i in range(len(gammas)):
        for j in range(len(betas)):
            x = axes.left + j * cell_w
            y = axes.top + axes.height - (i + 1) * cell_h
            tau = float(grid.tau[i, j])
            fill = _shade((math.log10(tau) - log_lo) / span) if tau > 0 else "#ffffff"
            svg.add_rect(x, y, cell_w + 0.5, cell_h + 0.5, fill=fill)
            if grid.pr_mask[i, j]:
                svg.add_rect(x, y, cell_w + 0.5, cell_h + 0.5, fill="#404040", opacity=0.35)

    axes.draw(svg, "beta", "gamma")
    if optimum is not None:
        svg.add_circle(axes.px(optimum.beta), axes.py(optimum.gamma), 4, fill="#c0392b")
    if finite.size:
        svg.add_text(
            WIDTH - MARGIN["right"] + 15,
            MARGIN["top"] + 10,
            f"tau {10**log_lo:.3g}..{10**log_hi:.3g}",
            font_size=11,
        )
    svg.add_text(WIDTH - MARGIN["right"] + 15, MARGIN["top"] + 28, "grey: realizable", font_size=11)
    params = grid.params
    heading = title or f"{grid.measure} time, chi={params.chi:g} nu={params.nu:g}"
    svg.add_text(WIDTH / 2, 30, heading, "middle", 16)
    return svg


def ellipse_figure(series: EllipseSeries, title: str = "") -> SvgBuilder:
    """One-standard-deviation Wigner ellipses of ensemble members at several times."""
    members = [s for states in series.states for s in states]
    if not members:
        raise FigureError("No states to draw")
    shapes = [covariance_ellipse(s) for s in members]
    reach = max(major for major, _, _ in shapes)
    xs = [s.mean_x for s in members]
    ys = [s.mean_y for s in members]
    x_lo, x_hi = min(xs) - reach, max(xs) + reach
    y_lo, y_hi = min(ys) - reach, max(ys) + reach

    # Equal scale on both axes so shapes are not distorted.
    base = _Axes(x_range=(0.0, 1.0), y_range=(0.0, 1.0))
    scale = min(base.width / (x_hi - x_lo), base.height / (y_hi - y_lo))
    x_mid, y_mid = 0.5 * (x_lo + x_hi), 0.5 * (y_lo + y_hi)
    half_x, half_y = 0.5 * base.width / scale, 0.5 * base.height / scale
    axes = _Axes(x_range=(x_mid - half_x, x_mid + half_x), y_range=(y_mid - half_y, y_mid + half_y))

    svg = SvgBuilder(WIDTH, HEIGHT)
    axes.draw(svg, "x", "y")
    entries = []
    for index, (t, states) in enumerate(zip(series.times, series.states, strict=True)):
        shade = TIME_SHADES[min(index, len(TIME_SHADES) - 1)]
        for state in states:
            major, minor, angle = covariance_ellipse(state)
            # SVG y grows downward, so rotations flip sign.
            svg.add_ellipse(
                axes.px(state.mean_x),
                axes.py(state.mean_y),
                major * scale,
                minor * scale,
                -math.degrees(angle),
                stroke=shade,
            )
        entries.append((f"t = {t:.4g}", shade))
    _legend(svg, entries)
    svg.add_text(WIDTH / 2, 30, title or series.label or "Ensemble members", "middle", 16)
    return svg


def curve_figure(
    curves: Sequence[SurvivalCurve],
    labels: Sequence[str] = (),
    threshold: float | None = None,
    title: str = "",
) -> SvgBuilder:
    """Linear plot of survival or purity decay curves."""
    if not curves:
        raise FigureError("No curves to plot")
    t_hi = max(c.times[-1] for c in curves)
    t_lo = min(c.times[0] for c in curves)
    axes = _Axes(x_range=_padded(t_lo, t_hi, log=False), y_range=(0.0, 1.0))
    svg = SvgBuilder(WIDTH, HEIGHT)
    axes.draw(svg, "t", str(curves[0].kind))
    if threshold is not None:
        level = axes.py(threshold)
        svg.add_line(axes.left, level, axes.left + axes.width, level, stroke="#888888", dash="4 3")
    entries = []
    for index, curve in enumerate(curves):
        color = SERIES_COLORS[index % len(SERIES_COLORS)]
        points = [(axes.px(t), axes.py(v)) for t, v in zip(curve.times, curve.values, strict=True)]
        if len(points) > 1:
            svg.add_polyline(points, stroke=color)
        else:
            svg.add_circle(*points[0], 3, fill=color)
        label = labels[index] if index < len(labels) else f"curve {index + 1}"
        entries.append((label, color))
    _legend(svg, entries)
    svg.add_text(WIDTH / 2, 30, title or f"{curves[0].kind} decay", "middle", 16)
    return svg


def emit_figure(
    data: FigureData,
    path: Path,
    *,
    title: str = "",
    provenance: Mapping[str, Any] | None = None,
    timestamp: bool = True,
    optimum: Candidate | None = None,
    labels: Sequence[str] = (),
    threshold: float | None = None,
) -> Path:
    """Render data in the style matching its type and write it as SVG.

    Raises:
        FigureError: if there is nothing to draw; no file is written then.
    """
    if isinstance(data, SweepTable):
        svg = sweep_figure(data, title)
    elif isinstance(data, ContourGrid):
        svg = contour_figure(data, optimum, title)
    elif isinstance(data, EllipseSeries):
        svg = ellipse_figure(data, title)
    elif isinstance(data, SurvivalCurve):
        svg = curve_figure([data], labels, threshold, title)
    elif isinstance(data, Sequence) and all(isinstance(c, SurvivalCurve) for c in data):
        svg = curve_figure(list(data), labels, threshold, title)
    else:
        raise FigureError(f"Cannot draw {type(data).__name__}")

    if provenance is not None:
        svg.add_comment(f"provenance: {json.dumps(provenance, sort_keys=True, default=str)}")
    if timestamp:
        svg.add_comment(f"generated {datetime.now(UTC).isoformat(timespec='seconds')}")

    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(svg.build(), encoding="utf-8")
    logger.debug("Wrote SVG: %s", path)
    return path
