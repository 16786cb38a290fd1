"""Deterministic candlestick raster: bodies/wicks, volume subpanel, SMA overlays,
and the evaluation marker square in the upper-right corner.

Everything is drawn with integer fills and Bresenham lines (no anti-aliasing),
so identical inputs produce identical bytes on every platform.
"""

from __future__ import annotations

from dataclasses import dataclass, fields
from pathlib import Path

import numpy as np
from PIL import Image

from .errors import ConfigurationError, ValidationError
from .indicators import IndicatorFrame

WINDOW_LEN = 40

RGB = tuple[int, int, int]

MARKER_RED: RGB = (220, 40, 40)
MARKER_BLUE: RGB = (40, 40, 220)
MARKER_BLACK: RGB = (20, 20, 20)


@dataclass(frozen=True)
class ChartStyle:
    width: int = 256
    height: int = 256
    margin_top: int = 40
    margin_bottom: int = 8
    margin_left: int = 8
    margin_right: int = 8
    volume_height: int = 48
    panel_gap: int = 4
    background: RGB = (250, 250, 250)
    up_color: RGB = (0, 168, 107)
    down_color: RGB = (240, 150, 60)
    sma5_color: RGB = (0, 180, 200)
    sma90_color: RGB = (180, 60, 180)
    volume_color: RGB = (150, 150, 150)
    marker_size: int = 24
    marker_inset: int = 8
    marker_red: RGB = MARKER_RED
    marker_blue: RGB = MARKER_BLUE
    marker_black: RGB = MARKER_BLACK

    @property
    def marker_palette(self) -> dict[str, RGB]:
        return {"red": self.marker_red, "blue": self.marker_blue, "black": self.marker_black}

    def plot_width(self) -> int:
        return self.width - self.margin_left - self.margin_right

    def marker_box(self) -> tuple[int, int, int, int]:
        """(row0, row1, col0, col1), half-open, of the marker square."""
        r0 = self.marker_inset
        c0 = self.width - self.marker_inset - self.marker_size
        return r0, r0 + self.marker_size, c0, c0 + self.marker_size

    def to_dict(self) -> dict:
        return {f.name: list(v) if isinstance(v := getattr(self, f.name), tuple) else v
                for f in fields(self)}

    @staticmethod
    def from_dict(d: dict) -> "ChartStyle":
        known = {f.name for f in fields(ChartStyle)}
        unknown = set(d) - known
        if unknown:
            raise ConfigurationError(f"unknown style keys: {sorted(unknown)}")
        kwargs = {k: tuple(v) if isinstance(v, list) else v for k, v in d.items()}
        return ChartStyle(**kwargs)


def _rgb_distance(a: RGB, b: RGB) -> float:
    return float(np.sqrt(sum((x - y) ** 2 for x, y in zip(a, b))))


def validate_style(style: ChartStyle) -> None:
    """Reject styles whose marker could collide with chart content or be misread."""
    r0, r1, c0, c1 = style.marker_box()
    if r0 < 0 or c0 < 0 or r1 > style.width or c1 > style.width:
        raise ConfigurationError("marker square does not fit inside the image")
    if r1 > style.margin_top:
        raise ConfigurationError(
            f"marker square (rows {r0}..{r1}) leaks out of the top margin "
            f"({style.margin_top}); it must stay clear of the plot area"
        )
    plot_h = style.height - style.margin_top - style.margin_bottom \
        - style.volume_height - style.panel_gap
    if plot_h < 8 or style.plot_width() < 8:
        raise ConfigurationError("plot area is degenerate; check margins and size")
    elements = {
        "background": style.background, "up_color": style.up_color,
        "down_color": style.down_color, "sma5_color": style.sma5_color,
        "sma90_color": style.sma90_color, "volume_color": style.volume_color,
    }
    for ename, ecol in elements.items():
        for mname, mcol in style.marker_palette.items():
            d = _rgb_distance(ecol, mcol)
            if d < 100.0:
                raise ConfigurationError(
                    f"{ename} {ecol} is too close to marker {mname} {mcol} "
                    f"(RGB distance {d:.1f} < 100)"
                )


@dataclass(frozen=True)
class ChartWindow:
    """The candles and indicator slice that become one image."""

    candles: tuple
    frame: IndicatorFrame
    end_index: int

    def __post_init__(self):
        if len(self.candles) == 0:
            raise ValidationError("chart window is empty")
        if len(self.frame) != len(self.candles):
            raise ValidationError(
                f"indicator frame length {len(self.frame)} != window length {len(self.candles)}"
            )

    def __len__(self) -> int:
        return len(self.candles)


@dataclass(frozen=True)
class ChartLayout:
    """Affine maps from price/index/volume space into pixel rows and columns."""

    style: ChartStyle
    price_min: float
    price_max: float
    volume_max: float
    plot_top: int
    plot_bottom: int
    vol_top: int
    vol_bottom: int
    slot_width: int
    n_bars: int

    def y_of_price(self, price: float) -> int:
        t = (self.price_max - price) / (self.price_max - self.price_min)
        return self.plot_top + int(round(t * (self.plot_bottom - self.plot_top)))

    def x_slot(self, i: int) -> tuple[int, int]:
        x0 = self.style.margin_left + i * self.slot_width
        return x0, x0 + self.slot_width

    def x_center(self, i: int) -> int:
        x0, x1 = self.x_slot(i)
        return (x0 + x1 - 1) // 2

    def volume_bar_top(self, volume: float) -> int:
        if self.volume_max <= 0:
            return self.vol_bottom
        t = volume / self.volume_max
        h = int(round(t * (self.vol_bottom - self.vol_top)))
        return self.vol_bottom - h


def price_to_pixel(window: ChartWindow, style: ChartStyle) -> ChartLayout:
    """Fit the visible range (highs/lows plus both SMA overlays) to the plot area."""
    lows = [float(c.low) for c in window.candles]
    highs = [float(c.high) for c in window.candles]
    lo, hi = min(lows), max(highs)
    for arr in (window.frame.sma5, window.frame.sma90):
        finite = arr[np.isfinite(arr)]
        if finite.size:
            lo = min(lo, float(finite.min()))
            hi = max(hi, float(finite.max()))
    if hi <= lo:
        # flat window: expand symmetrically instead of dividing by zero
        lo, hi = lo * 0.995, hi * 1.005
        if hi <= lo:  # all prices zero can't happen (prices > 0), but stay safe
            lo, hi = lo - 0.5, hi + 0.5

    vols = [float(c.volume) for c in window.candles]
    plot_top = style.margin_top
    plot_bottom = style.height - style.margin_bottom - style.volume_height \
        - style.panel_gap - 1
    vol_bottom = style.height - style.margin_bottom - 1
    vol_top = vol_bottom - style.volume_height + 1
    return ChartLayout(
        style=style,
        price_min=lo,
        price_max=hi,
        volume_max=max(vols) if vols else 0.0,
        plot_top=plot_top,
        plot_bottom=plot_bottom,
        vol_top=vol_top,
        vol_bottom=vol_bottom,
        slot_width=max(style.plot_width() // len(window), 1),
        n_bars=len(window),
    )


@dataclass(frozen=True)
class RenderedChart:
    pixels: np.ndarray  # (height, width, 3) uint8
    style: ChartStyle
    marker: object = None  # TrendLabel or None


def _bresenham(canvas: np.ndarray, x0: int, y0: int, x1: int, y1: int, color: RGB) -> None:
    dx, dy = abs(x1 - x0), -abs(y1 - y0)
    sx = 1 if x0 < x1 else -1
    sy = 1 if y0 < y1 else -1
    err = dx + dy
    while True:
        canvas[y0, x0] = color
        if x0 == x1 and y0 == y1:
            return
        e2 = 2 * err
        if e2 >= dy:
            err += dy
            x0 += sx
        if e2 <= dx:
            err += dx
            y0 += sy


def _draw_polyline(canvas, layout, values: np.ndarray, color: RGB) -> None:
    pts = [(layout.x_center(i), layout.y_of_price(float(v)))
           for i, v in enumerate(values) if np.isfinite(v)]
    if len(pts) == 1:
        x, y = pts[0]
        canvas[y, x] = color
    for (xa, ya), (xb, yb) in zip(pts, pts[1:]):
        _bresenham(canvas, xa, ya, xb, yb, color)


def render_window(window: ChartWindow, marker=None,
                  style: ChartStyle = ChartStyle()) -> RenderedChart:
    """Rasterize one window; stamps the marker square iff a label is given."""
    validate_style(style)
    layout = price_to_pixel(window, style)
    canvas = np.empty((style.height, style.width, 3), dtype=np.uint8)
    canvas[:, :] = style.background

    body_pad = 1 if layout.slot_width >= 4 else 0

    for i, candle in enumerate(window.candles):
        x0, x1 = layout.x_slot(i)
        top = layout.volume_bar_top(float(candle.volume))
        canvas[top:layout.vol_bottom + 1, x0 + body_pad:x1 - body_pad] = style.volume_color

    _draw_polyline(canvas, layout, window.frame.sma90, style.sma90_color)
    _draw_polyline(canvas, layout, window.frame.sma5, style.sma5_color)

    for i, candle in enumerate(window.candles):
        o, c = float(candle.open), float(candle.close)
        color = style.up_color if c >= o else style.down_color
        x0, x1 = layout.x_slot(i)
        xc = layout.x_center(i)
        y_hi = layout.y_of_price(float(candle.high))
        y_lo = layout.y_of_price(float(candle.low))
        canvas[y_hi:y_lo + 1, xc] = color
        y_a, y_b = sorted((layout.y_of_price(o), layout.y_of_price(c)))
        canvas[y_a:y_b + 1, x0 + body_pad:x1 - body_pad] = color

    if marker is not None:
        canvas = stamp_marker(canvas, marker, style)
    return RenderedChart(pixels=canvas, style=style, marker=marker)


def stamp_marker(image: np.ndarray, label, style: ChartStyle = ChartStyle()) -> np.ndarray:
    """Return a copy of `image` with the marker square solid-filled for `label`."""
    r0, r1, c0, c1 = style.marker_box()
    if r0 < 0 or c0 < 0 or r1 > image.shape[0] or c1 > image.shape[1]:
        raise ConfigurationError(
            f"marker box {style.marker_box()} out of bounds for image {image.shape[:2]}"
        )
    color = style.marker_palette[label.color_name]
    out = image.copy()
    out[r0:r1, c0:c1] = color
    return out


def save_png(pixels: np.ndarray, path) -> None:
    path = Path(path)
    Image.fromarray(pixels, mode="RGB").save(path, format="PNG")


def load_png(path) -> np.ndarray:
    with Image.open(path) as img:
        return np.asarray(img.convert("RGB"), dtype=np.uint8)
