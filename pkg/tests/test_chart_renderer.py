import numpy as np
import pytest

from candleforge.chart_renderer import (ChartStyle, ChartWindow, load_png, price_to_pixel,
                                        render_window, save_png, stamp_marker,
                                        validate_style)
from candleforge.dataset_builder import TrendLabel
from candleforge.errors import ConfigurationError
from candleforge.indicators import indicator_frame
from candleforge.market_data import Candle, CandleSeries
from decimal import Decimal

from conftest import MS_4H, T0, make_series


def window_from(series, n, length=40):
    frame = indicator_frame(series)
    lo = n - length + 1
    return ChartWindow(candles=series.candles[lo:n + 1],
                       frame=frame.slice(lo, n + 1), end_index=n)


@pytest.fixture(scope="module")
def series():
    return make_series(220, seed=11)


@pytest.fixture(scope="module")
def window(series):
    return window_from(series, 180)


def constant_series(price="100", n=40):
    candles = tuple(
        Candle(T0 + i * MS_4H, Decimal(price), Decimal(price), Decimal(price),
               Decimal(price), Decimal("5"))
        for i in range(n)
    )
    return CandleSeries("X", MS_4H, candles)


class TestLayout:
    def test_extremes_map_to_plot_edges(self, window):
        style = ChartStyle()
        layout = price_to_pixel(window, style)
        assert layout.y_of_price(layout.price_max) == layout.plot_top
        assert layout.y_of_price(layout.price_min) == layout.plot_bottom

    def test_doubling_prices_keeps_pixels(self, window):
        style = ChartStyle()
        layout = price_to_pixel(window, style)
        prices = [float(c.close) for c in window.candles]
        doubled_lows = [2 * float(c.low) for c in window.candles]
        # build a doubled window and compare a sample of pixel rows
        doubled = ChartWindow(
            candles=tuple(
                Candle(c.open_time, c.open * 2, c.high * 2, c.low * 2, c.close * 2,
                       c.volume) for c in window.candles),
            frame=type(window.frame)(*(arr * 2 for arr in (
                window.frame.sma5, window.frame.sma90, window.frame.rsi14,
                window.frame.macd_line, window.frame.macd_signal,
                window.frame.macd_histogram))),
            end_index=window.end_index)
        layout2 = price_to_pixel(doubled, style)
        for p in prices + doubled_lows[:0]:
            assert layout.y_of_price(p) == layout2.y_of_price(2 * p)

    def test_flat_window_renders_mid_plot(self):
        series = constant_series()
        win = window_from(series, 39)
        chart = render_window(win)  # must not divide by zero
        layout = price_to_pixel(win, ChartStyle())
        y = layout.y_of_price(100.0)
        assert layout.plot_top < y < layout.plot_bottom

    def test_x_slots_are_disjoint_equal_width(self, window):
        layout = price_to_pixel(window, ChartStyle())
        slots = [layout.x_slot(i) for i in range(len(window))]
        widths = {b - a for a, b in slots}
        assert widths == {layout.slot_width}
        for (a0, b0), (a1, _) in zip(slots, slots[1:]):
            assert b0 == a1


class TestRender:
    def test_render_determinism(self, window):
        a = render_window(window, TrendLabel.UP).pixels
        b = render_window(window, TrendLabel.UP).pixels
        assert np.array_equal(a, b)

    def test_affine_invariance_power_of_two_scale(self, series):
        win = window_from(series, 150)
        base = render_window(win).pixels
        for a in (2, 4, 1024):
            scaled = ChartWindow(
                candles=tuple(
                    Candle(c.open_time, c.open * a, c.high * a, c.low * a, c.close * a,
                           c.volume * a) for c in win.candles),
                frame=type(win.frame)(*(arr * a for arr in (
                    win.frame.sma5, win.frame.sma90, win.frame.rsi14,
                    win.frame.macd_line, win.frame.macd_signal,
                    win.frame.macd_histogram))),
                end_index=win.end_index)
            assert np.array_equal(render_window(scaled).pixels, base)

    def test_marker_disjointness(self, window):
        style = ChartStyle()
        plain = render_window(window, None, style).pixels
        marked = render_window(window, TrendLabel.DOWN, style).pixels
        r0, r1, c0, c1 = style.marker_box()
        outside = np.ones(plain.shape[:2], dtype=bool)
        outside[r0:r1, c0:c1] = False
        assert np.array_equal(plain[outside], marked[outside])
        assert (marked[r0:r1, c0:c1] == style.marker_blue).all()

    def test_sma_vertices_inside_plot(self, window):
        style = ChartStyle()
        layout = price_to_pixel(window, style)
        for arr in (window.frame.sma5, window.frame.sma90):
            for v in arr[~np.isnan(arr)]:
                y = layout.y_of_price(float(v))
                assert layout.plot_top <= y <= layout.plot_bottom

    def test_marker_mean_close_to_palette(self, window):
        style = ChartStyle()
        marked = render_window(window, TrendLabel.UP, style).pixels
        r0, r1, c0, c1 = style.marker_box()
        mean = marked[r0:r1, c0:c1].reshape(-1, 3).mean(axis=0)
        assert np.linalg.norm(mean - np.array(style.marker_red)) < 10

    def test_small_style_renders(self, window, small_style):
        chart = render_window(window, TrendLabel.FLAT, small_style)
        assert chart.pixels.shape == (64, 64, 3)


class TestStamp:
    def test_solid_fill_exact_size(self):
        style = ChartStyle()
        blank = np.zeros((style.height, style.width, 3), dtype=np.uint8)
        out = stamp_marker(blank, TrendLabel.UP, style)
        hits = (out == np.array(style.marker_red, dtype=np.uint8)).all(axis=2)
        assert hits.sum() == style.marker_size ** 2

    def test_idempotent(self):
        style = ChartStyle()
        blank = np.full((style.height, style.width, 3), 250, dtype=np.uint8)
        once = stamp_marker(blank, TrendLabel.FLAT, style)
        twice = stamp_marker(once, TrendLabel.FLAT, style)
        assert np.array_equal(once, twice)

    def test_only_marker_square_changes(self):
        style = ChartStyle()
        rng = np.random.default_rng(0)
        img = rng.integers(0, 255, (style.height, style.width, 3), dtype=np.uint8)
        out = stamp_marker(img, TrendLabel.FLAT, style)
        diff = (out != img).any(axis=2)
        r0, r1, c0, c1 = style.marker_box()
        assert not diff[np.ix_(range(0, r0), range(style.width))].any()
        assert diff[r0:r1, c0:c1].sum() == diff.sum()

    def test_out_of_bounds_geometry(self):
        style = ChartStyle()
        small = np.zeros((16, 16, 3), dtype=np.uint8)
        with pytest.raises(ConfigurationError):
            stamp_marker(small, TrendLabel.UP, style)


class TestStyleValidation:
    def test_default_style_valid(self):
        validate_style(ChartStyle())

    def test_marker_leaking_into_plot_rejected(self):
        with pytest.raises(ConfigurationError):
            validate_style(ChartStyle(margin_top=16))  # 8 + 24 > 16

    def test_element_color_too_close_to_marker(self):
        with pytest.raises(ConfigurationError):
            validate_style(ChartStyle(down_color=(221, 41, 41)))

    def test_marker_palette_distances(self):
        style = ChartStyle()
        for ecol in (style.background, style.up_color, style.down_color,
                     style.sma5_color, style.sma90_color, style.volume_color):
            for mcol in style.marker_palette.values():
                dist = np.linalg.norm(np.array(ecol) - np.array(mcol))
                assert dist >= 100.0


def test_png_round_trip(tmp_path, window):
    chart = render_window(window, TrendLabel.DOWN)
    path = tmp_path / "chart.png"
    save_png(chart.pixels, path)
    assert np.array_equal(load_png(path), chart.pixels)
    save_png(chart.pixels, tmp_path / "again.png")
    assert (tmp_path / "again.png").read_bytes() == path.read_bytes()
