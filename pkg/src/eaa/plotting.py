"""Deterministic rendering of scan plots to PNG.

Plots are rasterized into numpy RGB buffers (axes, ticks, curves, image data,
marker) with text stamped via Pillow's embedded bitmap font, then written as
PNG.  No GUI toolkit is involved and equal inputs produce byte-equal files,
which the test suite relies on.

Orientation convention for 2D scans: data row 0 holds the smallest y
coordinate and is drawn at the bottom of the plot (y axis points up).
"""

from __future__ import annotations

import math
from pathlib import Path

import numpy as np
from PIL import Image, ImageDraw, ImageFont

from .analysis import GaussianFit, Profile1D, _gauss


class RenderFailure(Exception):
    pass


WHITE = (255, 255, 255)
BLACK = (0, 0, 0)
BLUE = (40, 80, 200)
RED = (255, 0, 0)
GRAY = (150, 150, 150)

_FONT = ImageFont.load_default()


def nice_ticks(lo: float, hi: float, target: int = 5) -> list[float]:
    """Tick positions at round numbers (1/2/5 x 10^k steps) covering [lo, hi]."""
    if hi <= lo:
        return [lo]
    raw = (hi - lo) / max(target, 1)
    mag = 10.0 ** math.floor(math.log10(raw))
    for mult in (1.0, 2.0, 5.0, 10.0):
        step = mult * mag
        if step >= raw:
            break
    first = math.ceil(lo / step - 1e-9) * step
    ticks = []
    t = first
    while t <= hi + 1e-9 * max(abs(hi), 1.0):
        ticks.append(0.0 if abs(t) < step * 1e-9 else t)
        t += step
    return ticks


def _fmt(value: float) -> str:
    return f"{value:g}"


class _Canvas:
    """RGB pixel buffer with primitive drawing ops and deferred text."""

    def __init__(self, width: int, height: int) -> None:
        self.width = width
        self.height = height
        self.buf = np.full((height, width, 3), 255, dtype=np.uint8)
        self._texts: list[tuple[int, int, str, tuple[int, int, int], str]] = []

    def hline(self, y: int, x0: int, x1: int, color=BLACK) -> None:
        if 0 <= y < self.height:
            self.buf[y, max(x0, 0) : min(x1 + 1, self.width)] = color

    def vline(self, x: int, y0: int, y1: int, color=BLACK) -> None:
        if 0 <= x < self.width:
            self.buf[max(y0, 0) : min(y1 + 1, self.height), x] = color

    def line(self, x0: float, y0: float, x1: float, y1: float, color=BLACK) -> None:
        n = int(max(abs(x1 - x0), abs(y1 - y0))) * 2 + 2
        xs = np.linspace(x0, x1, n).round().astype(int)
        ys = np.linspace(y0, y1, n).round().astype(int)
        ok = (xs >= 0) & (xs < self.width) & (ys >= 0) & (ys < self.height)
        self.buf[ys[ok], xs[ok]] = color

    def blit(self, top: int, left: int, rgb: np.ndarray) -> None:
        h, w = rgb.shape[:2]
        self.buf[top : top + h, left : left + w] = rgb

    def text(self, x: int, y: int, s: str, color=BLACK, anchor: str = "la") -> None:
        self._texts.append((x, y, s, color, anchor))

    def save(self, path: str | Path) -> str:
        img = Image.fromarray(self.buf)
        draw = ImageDraw.Draw(img)
        for x, y, s, color, anchor in self._texts:
            draw.text((x, y), s, fill=color, font=_FONT, anchor=anchor)
        out = Path(path)
        out.parent.mkdir(parents=True, exist_ok=True)
        img.save(out, format="PNG")
        return str(out)


def save_png(array: np.ndarray, path: str | Path) -> str:
    """Write a grayscale (2D, [0,1] or uint8) or RGB array as PNG."""
    a = np.asarray(array)
    if a.dtype != np.uint8:
        a = (np.clip(a, 0.0, 1.0) * 255).astype(np.uint8)
    out = Path(path)
    out.parent.mkdir(parents=True, exist_ok=True)
    Image.fromarray(a).save(out, format="PNG")
    return str(out)


def load_png(path: str | Path) -> np.ndarray:
    return np.asarray(Image.open(path))


# plot-area geometry shared by both plot kinds
_MARGIN_LEFT, _MARGIN_RIGHT, _MARGIN_TOP, _MARGIN_BOTTOM = 70, 24, 40, 48


def _axes(
    canvas: _Canvas,
    x_range: tuple[float, float],
    y_range: tuple[float, float],
    xlabel: str,
    ylabel: str,
):
    """Draw frame plus ticks; returns (to_px_x, to_px_y) coordinate mappers."""
    x0p, x1p = _MARGIN_LEFT, canvas.width - _MARGIN_RIGHT
    y0p, y1p = canvas.height - _MARGIN_BOTTOM, _MARGIN_TOP  # y grows upward
    xr = x_range if x_range[1] > x_range[0] else (x_range[0], x_range[0] + 1.0)
    yr = y_range if y_range[1] > y_range[0] else (y_range[0], y_range[0] + 1.0)

    def to_px_x(v: float) -> float:
        return x0p + (v - xr[0]) / (xr[1] - xr[0]) * (x1p - x0p)

    def to_px_y(v: float) -> float:
        return y0p + (v - yr[0]) / (yr[1] - yr[0]) * (y1p - y0p)

    canvas.hline(y0p, x0p, x1p)
    canvas.hline(y1p, x0p, x1p)
    canvas.vline(x0p, y1p, y0p)
    canvas.vline(x1p, y1p, y0p)
    for t in nice_ticks(*xr):
        px = int(round(to_px_x(t)))
        canvas.vline(px, y0p, y0p + 4)
        canvas.text(px, y0p + 7, _fmt(t), anchor="ma")
    for t in nice_ticks(*yr):
        py = int(round(to_px_y(t)))
        canvas.hline(py, x0p - 4, x0p)
        canvas.text(x0p - 7, py, _fmt(t), anchor="rm")
    canvas.text((x0p + x1p) // 2, canvas.height - 14, xlabel, anchor="ma")
    canvas.text(12, _MARGIN_TOP - 14, ylabel)
    return to_px_x, to_px_y


def profile_annotation(fit: GaussianFit | None) -> str:
    """Annotation stamped on profile plots; also quoted in tool result text."""
    if fit is None:
        return "no discernible peak"
    return f"FWHM={fit.fwhm:.4f}"


def render_profile_plot(
    profile: Profile1D,
    fit: GaussianFit | None,
    path: str | Path,
    title: str = "",
    xlabel: str = "position (um)",
) -> str:
    """Intensity-vs-position plot with fitted overlay and FWHM annotation.

    *fit* may be None to mark a profile with no discernible peak.
    """
    try:
        canvas = _Canvas(640, 420)
        x = profile.positions
        y = profile.intensities
        ylo, yhi = float(y.min()), float(y.max())
        if yhi <= ylo:
            yhi = ylo + 1.0
        pad = 0.08 * (yhi - ylo)
        to_x, to_y = _axes(
            canvas, (float(x[0]), float(x[-1])), (ylo - pad, yhi + pad), xlabel, "intensity"
        )
        for i in range(len(x) - 1):
            canvas.line(to_x(x[i]), to_y(y[i]), to_x(x[i + 1]), to_y(y[i + 1]), BLUE)
        if fit is not None:
            dense = np.linspace(x[0], x[-1], 256)
            model = _gauss(dense, fit.amplitude, fit.center, fit.sigma, fit.baseline)
            for i in range(0, len(dense) - 1, 2):  # dashed overlay
                canvas.line(
                    to_x(dense[i]), to_y(model[i]), to_x(dense[i + 1]), to_y(model[i + 1]), GRAY
                )
            half = to_y(fit.baseline + fit.amplitude / 2.0)
            canvas.line(to_x(fit.center - fit.fwhm / 2), half, to_x(fit.center + fit.fwhm / 2), half, BLACK)
        canvas.text(_MARGIN_LEFT + 8, _MARGIN_TOP + 6, profile_annotation(fit))
        if title:
            canvas.text(canvas.width // 2, 8, title, anchor="ma")
        return canvas.save(path)
    except Exception as exc:
        if isinstance(exc, RenderFailure):
            raise
        raise RenderFailure(f"profile plot failed: {exc}") from exc


def render_image_plot(
    scan: np.ndarray,
    extent: tuple[float, float, float, float],
    path: str | Path,
    marker: tuple[float, float] | None = None,
    title: str = "",
) -> str:
    """Grayscale scan image with sample-coordinate axis ticks.

    *extent* is (x_min, x_max, y_min, y_max); data row 0 corresponds to y_min
    and is drawn at the bottom.  *marker*, if given, draws a red crosshair at
    that sample coordinate.
    """
    data = np.asarray(scan, dtype=np.float64)
    if data.ndim != 2 or data.size == 0:
        raise RenderFailure(f"expected nonempty 2D scan, got shape {data.shape}")
    try:
        canvas = _Canvas(640, 520)
        x_min, x_max, y_min, y_max = extent
        to_x, to_y = _axes(canvas, (x_min, x_max), (y_min, y_max), "x (um)", "y (um)")
        left, right = _MARGIN_LEFT + 1, canvas.width - _MARGIN_RIGHT - 1
        top, bottom = _MARGIN_TOP + 1, canvas.height - _MARGIN_BOTTOM - 1
        area_w, area_h = right - left + 1, bottom - top + 1

        lo, hi = float(data.min()), float(data.max())
        scale = hi - lo if hi > lo else 1.0
        norm = ((data - lo) / scale * 255).astype(np.uint8)
        # nearest-neighbor resample; flip vertically so row 0 lands at the bottom
        rows = np.minimum((np.arange(area_h) * data.shape[0]) // area_h, data.shape[0] - 1)
        cols = np.minimum((np.arange(area_w) * data.shape[1]) // area_w, data.shape[1] - 1)
        pixels = norm[rows[::-1]][:, cols]
        canvas.blit(top, left, np.repeat(pixels[:, :, None], 3, axis=2))

        if marker is not None:
            mx, my = int(round(to_x(marker[0]))), int(round(to_y(marker[1])))
            canvas.hline(my, mx - 8, mx + 8, RED)
            canvas.vline(mx, my - 8, my + 8, RED)
        if title:
            canvas.text(canvas.width // 2, 8, title, anchor="ma")
        return canvas.save(path)
    except Exception as exc:
        if isinstance(exc, RenderFailure):
            raise
        raise RenderFailure(f"image plot failed: {exc}") from exc
